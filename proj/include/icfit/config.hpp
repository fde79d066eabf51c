#pragma once

#include <string>

#include "icfit/engine.hpp"
#include "icfit/simgen.hpp"

namespace icfit {

enum class Kind { ggm, regression, randcoef };

std::string to_string(Kind kind);
Kind parse_kind(const std::string& text);

// Iteration protocol per experiment: ggm runs 50 iterations and averages the
// last 20, the others run 30 and average the last 10.
EngineConfig protocol_engine(Kind kind);

std::string to_string(simgen::Design design);
simgen::Design parse_design(const std::string& text);

struct ExperimentSpec {
  Kind kind = Kind::ggm;
  Index n = 200;
  Index p = 100;
  Index customers = 100;
  Index items = 20;
  double rate = 0.1;
  int replicates = 1;
  simgen::Design setting = simgen::Design::independent;
  EngineConfig engine = protocol_engine(Kind::ggm);

  // Switches the kind. An engine still on the old kind's protocol moves to the new one.
  void set_kind(Kind k);
  // Throws Error(invalid_argument) with a readable message.
  void validate() const;
};

// INI file, for example
//
//   kind = regression
//   [data]
//   n = 100
//   p = 200
//   rate = 0.05
//   replicates = 10
//   setting = ar2
//   [engine]
//   iterations = 30
//   burn_in = 20
//   chains = 1
//   seed = 7
//
// Missing keys keep the defaults of `base`.
ExperimentSpec load_spec(const std::string& path, ExperimentSpec base = {});
ExperimentSpec parse_spec(const std::string& text, ExperimentSpec base = {});

// Same format, every key written.
std::string format_spec(const ExperimentSpec& spec);

}  // namespace icfit
