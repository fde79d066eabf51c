#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icfit {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  all_missing_column,
  non_finite_value,
  empty_window,
  estimator_failure,
  block_failure,
  insufficient_chains,
  degenerate_column,
  degenerate_dof,
  no_convergence,
  singular_precision,
  not_positive_definite,
  factorization_failure,
  infeasible_rate,
  no_true_edges,
  io,
  parse,
};

const char* to_string(Errc code);

// Every failure raised by the library carries one of the codes above. `index`
// holds the offending column, iteration or block position when one applies.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::size_t index = npos)
      : std::runtime_error(what), code_(code), index_(index) {}

  Errc code() const noexcept { return code_; }
  std::size_t index() const noexcept { return index_; }
  bool has_index() const noexcept { return index_ != npos; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  Errc code_;
  std::size_t index_;
};

}  // namespace icfit
