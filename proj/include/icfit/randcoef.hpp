#pragma once

#include <cstdint>
#include <vector>

#include "icfit/core.hpp"
#include "icfit/engine.hpp"
#include "icfit/rng.hpp"

// Random-coefficient linear model
//   y_ij = x_ij' beta + z_i' lambda_i + w_j' gamma_j + e_ij,
//   e_ij ~ N(0, sigma2), lambda_i ~ N(0, Lambda), gamma_j ~ N(0, Gamma),
// with semiconjugate priors beta ~ N(mu, Sigma), sigma2 ~ IG(a, b),
// Lambda ~ IW(rho_L, R_L), Gamma ~ IW(rho_G, R_G).
//
// Inverse-Wishart IW(df, S) has density proportional to
// |X|^{-(df + d + 1)/2} exp(-tr(S X^{-1}) / 2) and mode S / (df + d + 1).
// Inverse-gamma IG(shape, rate) has mode rate / (shape + 1).
namespace icfit::randcoef {

struct RandCoefData {
  Index customers = 0;  // I
  Index items = 0;      // J
  Matrix y;             // I x J
  Matrix x;             // (I*J) x d_beta, row i*J + j
  Matrix z;             // I x d_z
  Matrix w;             // J x d_w
  std::vector<std::int64_t> customer_ids;  // keys for per-unit random streams
  std::vector<std::int64_t> item_ids;

  Index beta_dim() const { return x.cols(); }
  Index z_dim() const { return z.cols(); }
  Index w_dim() const { return w.cols(); }
  Index row(Index i, Index j) const { return i * items + j; }
  void validate() const;
};

struct Hyperparameters {
  Vector mu_beta;
  Matrix sigma_beta;
  double a = 0.01;
  double b = 0.01;
  double rho_lambda = 0.0;
  Matrix r_lambda;
  double rho_gamma = 0.0;
  Matrix r_gamma;

  // mu = 0, Sigma = 100 I, a = b = 0.01, rho = d + 2, R = I.
  static Hyperparameters defaults(Index d_beta, Index d_z, Index d_w);
  void validate(Index d_beta, Index d_z, Index d_w) const;
};

struct Params {
  Vector beta;
  double sigma2 = 1.0;
  Matrix lambda_cov;  // Lambda
  Matrix gamma_cov;   // Gamma
};

struct RandomEffects {
  Matrix lambdas;  // I x d_z, row i is lambda_i
  Matrix gammas;   // J x d_w, row j is gamma_j
};

struct RandCoefState {
  Params params;
  RandomEffects effects;
};

struct NormalConditional {
  Vector mean;
  Matrix precision;
};

struct InverseGammaConditional {
  double shape = 1.0;
  double rate = 1.0;
  double mode() const { return rate / (shape + 1.0); }
};

struct InverseWishartConditional {
  double df = 1.0;
  Matrix scale;
  Matrix mode() const { return scale / (df + static_cast<double>(scale.rows()) + 1.0); }
};

// Conditional of each block given the current values of every other block.
NormalConditional beta_conditional(const RandCoefState& s, const Hyperparameters& h,
                                   const RandCoefData& d);
NormalConditional lambda_conditional(Index i, const RandCoefState& s, const RandCoefData& d);
NormalConditional gamma_conditional(Index j, const RandCoefState& s, const RandCoefData& d);
InverseGammaConditional sigma2_conditional(const RandCoefState& s, const Hyperparameters& h,
                                           const RandCoefData& d);
InverseWishartConditional lambda_cov_conditional(const RandCoefState& s, const Hyperparameters& h,
                                                 const RandCoefData& d);
InverseWishartConditional gamma_cov_conditional(const RandCoefState& s, const Hyperparameters& h,
                                                const RandCoefData& d);

struct FullConditionals {
  NormalConditional beta;
  std::vector<NormalConditional> lambdas;
  std::vector<NormalConditional> gammas;
  InverseGammaConditional sigma2;
  InverseWishartConditional lambda_cov;
  InverseWishartConditional gamma_cov;
};

// Every block's conditional evaluated at the same state.
FullConditionals full_conditionals(const RandCoefState& s, const Hyperparameters& h,
                                   const RandCoefData& d);

Vector draw_normal(const NormalConditional& c, Rng& rng);
double draw_inverse_gamma(const InverseGammaConditional& c, Rng& rng);
Matrix draw_inverse_wishart(const InverseWishartConditional& c, Rng& rng);

enum class Method { gibbs, icc };

// ICC model over latent random effects. I-step draws lambda_1..lambda_I then
// gamma_1..gamma_J (each from a substream keyed by its unit id); the blocks
// beta, sigma2, Lambda, Gamma are then sampled (gibbs) or set to their
// conditional modes (icc), in that order.
//
// Snapshot payload: beta, sigma2, then the lower triangles of Lambda and
// Gamma in column-major order.
class RandCoefModel {
 public:
  using Latent = RandomEffects;
  using Params = randcoef::Params;

  RandCoefModel(const RandCoefData& data, Hyperparameters hyper, Method method);

  std::vector<BlockSpec> blocks() const;
  RandomEffects impute(const RandomEffects& effects, const Params& params, Rng& rng) const;
  void update_block(std::size_t block, const RandomEffects& effects, Params& params, Rng& rng) const;
  Vector flatten(const Params& params) const;

  const RandCoefData& data() const { return *data_; }
  const Hyperparameters& hyper() const { return hyper_; }
  Method method() const { return method_; }

 private:
  const RandCoefData* data_;
  Hyperparameters hyper_;
  Method method_;
};

// One full sweep (I-step then every block) from `state`.
RandCoefState gibbs_step(const RandCoefState& state, const Hyperparameters& h,
                         const RandCoefData& d, Rng& rng);
RandCoefState icc_step(const RandCoefState& state, const Hyperparameters& h,
                       const RandCoefData& d, Rng& rng);

// Random starting point: beta ~ N(mu, I), sigma2 = 1, Lambda = Gamma = I,
// random effects ~ N(0, I).
RandCoefState initial_state(const RandCoefData& d, const Hyperparameters& h, Rng& rng);

ChainTrace run_chain(const RandCoefData& d, const Hyperparameters& h, Method method,
                     const EngineConfig& cfg, std::size_t chain = 0);

// Smallest eigenvalue, for the SPD assertions on Lambda and Gamma.
double min_eigenvalue(const Matrix& m);

}  // namespace icfit::randcoef
