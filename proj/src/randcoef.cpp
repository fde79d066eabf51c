#include "icfit/randcoef.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "icfit/parallel.hpp"

namespace icfit::randcoef {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::invalid_argument, what);
}

bool symmetric_pd(const Matrix& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if (m.rows() == 0) return true;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  return min_eigenvalue(m) > 0.0;
}

Matrix spd_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::singular_precision, "matrix is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

// Fixed-effect fit x_ij' beta for every cell, I x J.
Matrix fixed_surface(const RandCoefData& d, const Vector& beta) {
  const Vector flat = d.x * beta;
  Matrix out(d.customers, d.items);
  for (Index i = 0; i < d.customers; ++i)
    for (Index j = 0; j < d.items; ++j) out(i, j) = flat(d.row(i, j));
  return out;
}

// z_i' lambda_i per customer and w_j' gamma_j per item.
Vector customer_effects(const RandCoefData& d, const Matrix& lambdas) {
  return (d.z.cwiseProduct(lambdas)).rowwise().sum();
}
Vector item_effects(const RandCoefData& d, const Matrix& gammas) {
  return (d.w.cwiseProduct(gammas)).rowwise().sum();
}

NormalConditional from_precision(Matrix precision, const Vector& rhs) {
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::singular_precision, "conditional precision is not positive definite");
  NormalConditional c;
  c.mean = llt.solve(rhs);
  c.precision = std::move(precision);
  return c;
}

void check_state(const RandCoefState& s, const RandCoefData& d) {
  if (s.params.beta.size() != d.beta_dim() || s.params.lambda_cov.rows() != d.z_dim() ||
      s.params.gamma_cov.rows() != d.w_dim() || s.effects.lambdas.rows() != d.customers ||
      s.effects.lambdas.cols() != d.z_dim() || s.effects.gammas.rows() != d.items ||
      s.effects.gammas.cols() != d.w_dim())
    throw Error(Errc::dimension_mismatch, "state does not match the data dimensions");
  require(s.params.sigma2 > 0.0, "sigma2 must be positive");
}

void check_spd(const Matrix& m, const char* name) {
  if (m.rows() > 0 && !(min_eigenvalue(m) > 0.0))
    throw Error(Errc::not_positive_definite, std::string(name) + " lost positive definiteness");
}

Vector vech(const Matrix& m) {
  const Index d = m.rows();
  Vector out(d * (d + 1) / 2);
  Index k = 0;
  for (Index c = 0; c < d; ++c)
    for (Index r = c; r < d; ++r) out(k++) = m(r, c);
  return out;
}

}  // namespace

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void RandCoefData::validate() const {
  require(customers >= 0 && items >= 0, "negative unit count");
  if (y.rows() != customers || y.cols() != items || x.rows() != customers * items ||
      z.rows() != customers || w.rows() != items ||
      static_cast<Index>(customer_ids.size()) != customers ||
      static_cast<Index>(item_ids.size()) != items)
    throw Error(Errc::dimension_mismatch, "random-coefficient data dimensions disagree");
  if (!y.allFinite() || !x.allFinite() || !z.allFinite() || !w.allFinite())
    throw Error(Errc::non_finite_value, "random-coefficient data must be finite");
}

Hyperparameters Hyperparameters::defaults(Index d_beta, Index d_z, Index d_w) {
  Hyperparameters h;
  h.mu_beta = Vector::Zero(d_beta);
  h.sigma_beta = 100.0 * Matrix::Identity(d_beta, d_beta);
  h.rho_lambda = static_cast<double>(d_z) + 2.0;
  h.r_lambda = Matrix::Identity(d_z, d_z);
  h.rho_gamma = static_cast<double>(d_w) + 2.0;
  h.r_gamma = Matrix::Identity(d_w, d_w);
  return h;
}

void Hyperparameters::validate(Index d_beta, Index d_z, Index d_w) const {
  if (mu_beta.size() != d_beta || sigma_beta.rows() != d_beta || r_lambda.rows() != d_z ||
      r_gamma.rows() != d_w)
    throw Error(Errc::dimension_mismatch, "hyperparameter dimensions disagree with the data");
  require(symmetric_pd(sigma_beta), "Sigma_beta must be symmetric positive definite");
  require(symmetric_pd(r_lambda), "R_Lambda must be symmetric positive definite");
  require(symmetric_pd(r_gamma), "R_Gamma must be symmetric positive definite");
  require(a > 0.0 && b > 0.0, "a and b must be positive");
  require(rho_lambda > static_cast<double>(d_z) - 1.0, "rho_Lambda must exceed dim(z) - 1");
  require(rho_gamma > static_cast<double>(d_w) - 1.0, "rho_Gamma must exceed dim(w) - 1");
}

NormalConditional beta_conditional(const RandCoefState& s, const Hyperparameters& h,
                                   const RandCoefData& d) {
  const Matrix prior_prec = spd_inverse(h.sigma_beta);
  const Vector ce = customer_effects(d, s.effects.lambdas);
  const Vector ie = item_effects(d, s.effects.gammas);
  Vector target(d.customers * d.items);
  for (Index i = 0; i < d.customers; ++i)
    for (Index j = 0; j < d.items; ++j) target(d.row(i, j)) = d.y(i, j) - ce(i) - ie(j);
  Matrix precision = prior_prec;
  precision.noalias() += d.x.transpose() * d.x / s.params.sigma2;
  const Vector rhs = prior_prec * h.mu_beta + d.x.transpose() * target / s.params.sigma2;
  return from_precision(std::move(precision), rhs);
}

NormalConditional lambda_conditional(Index i, const RandCoefState& s, const RandCoefData& d) {
  const Vector fixed = d.x.middleRows(i * d.items, d.items) * s.params.beta;
  const Vector ie = item_effects(d, s.effects.gammas);
  const double resid = (d.y.row(i).transpose() - fixed - ie).sum();
  const Vector zi = d.z.row(i).transpose();
  Matrix precision = spd_inverse(s.params.lambda_cov);
  precision.noalias() += static_cast<double>(d.items) * zi * zi.transpose() / s.params.sigma2;
  return from_precision(std::move(precision), zi * (resid / s.params.sigma2));
}

NormalConditional gamma_conditional(Index j, const RandCoefState& s, const RandCoefData& d) {
  const Vector ce = customer_effects(d, s.effects.lambdas);
  double resid = 0.0;
  for (Index i = 0; i < d.customers; ++i)
    resid += d.y(i, j) - d.x.row(d.row(i, j)).dot(s.params.beta) - ce(i);
  const Vector wj = d.w.row(j).transpose();
  Matrix precision = spd_inverse(s.params.gamma_cov);
  precision.noalias() += static_cast<double>(d.customers) * wj * wj.transpose() / s.params.sigma2;
  return from_precision(std::move(precision), wj * (resid / s.params.sigma2));
}

InverseGammaConditional sigma2_conditional(const RandCoefState& s, const Hyperparameters& h,
                                           const RandCoefData& d) {
  const Matrix fit = fixed_surface(d, s.params.beta);
  const Vector ce = customer_effects(d, s.effects.lambdas);
  const Vector ie = item_effects(d, s.effects.gammas);
  double rss = 0.0;
  for (Index i = 0; i < d.customers; ++i)
    for (Index j = 0; j < d.items; ++j) {
      const double r = d.y(i, j) - fit(i, j) - ce(i) - ie(j);
      rss += r * r;
    }
  return {h.a + 0.5 * static_cast<double>(d.customers * d.items), h.b + 0.5 * rss};
}

InverseWishartConditional lambda_cov_conditional(const RandCoefState& s, const Hyperparameters& h,
                                                 const RandCoefData& d) {
  const Matrix& l = s.effects.lambdas;
  return {h.rho_lambda + static_cast<double>(d.customers), h.r_lambda + l.transpose() * l};
}

InverseWishartConditional gamma_cov_conditional(const RandCoefState& s, const Hyperparameters& h,
                                                const RandCoefData& d) {
  const Matrix& g = s.effects.gammas;
  return {h.rho_gamma + static_cast<double>(d.items), h.r_gamma + g.transpose() * g};
}

FullConditionals full_conditionals(const RandCoefState& s, const Hyperparameters& h,
                                   const RandCoefData& d) {
  check_state(s, d);
  FullConditionals out;
  out.beta = beta_conditional(s, h, d);
  for (Index i = 0; i < d.customers; ++i) out.lambdas.push_back(lambda_conditional(i, s, d));
  for (Index j = 0; j < d.items; ++j) out.gammas.push_back(gamma_conditional(j, s, d));
  out.sigma2 = sigma2_conditional(s, h, d);
  out.lambda_cov = lambda_cov_conditional(s, h, d);
  out.gamma_cov = gamma_cov_conditional(s, h, d);
  return out;
}

Vector draw_normal(const NormalConditional& c, Rng& rng) {
  Eigen::LLT<Matrix> llt(c.precision);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::singular_precision, "conditional precision is not positive definite");
  Vector z(c.mean.size());
  for (Index k = 0; k < z.size(); ++k) z(k) = icfit::draw_normal(rng);
  // precision = L L', so L'^{-1} z has covariance precision^{-1}.
  return c.mean + llt.matrixU().solve(z);
}

double draw_inverse_gamma(const InverseGammaConditional& c, Rng& rng) {
  return c.rate / draw_gamma(rng, c.shape);
}

Matrix draw_inverse_wishart(const InverseWishartConditional& c, Rng& rng) {
  // Bartlett: with S^{-1} = L L', W = L A A' L' ~ Wishart(df, S^{-1}) and
  // W^{-1} ~ IW(df, S).
  const Index dim = c.scale.rows();
  const Matrix l = spd_inverse(c.scale).llt().matrixL();
  Matrix a = Matrix::Zero(dim, dim);
  for (Index r = 0; r < dim; ++r) {
    a(r, r) = std::sqrt(2.0 * draw_gamma(rng, 0.5 * (c.df - static_cast<double>(r))));
    for (Index k = 0; k < r; ++k) a(r, k) = icfit::draw_normal(rng);
  }
  const Matrix la = l * a;
  Matrix out = spd_inverse(la * la.transpose());
  return 0.5 * (out + out.transpose());
}

RandCoefModel::RandCoefModel(const RandCoefData& data, Hyperparameters hyper, Method method)
    : data_(&data), hyper_(std::move(hyper)), method_(method) {
  data.validate();
  hyper_.validate(data.beta_dim(), data.z_dim(), data.w_dim());
}

std::vector<BlockSpec> RandCoefModel::blocks() const {
  const Index dz = data_->z_dim();
  const Index dw = data_->w_dim();
  return {{"beta", data_->beta_dim(), 1},
          {"sigma2", 1, 2},
          {"Lambda", dz * (dz + 1) / 2, 3},
          {"Gamma", dw * (dw + 1) / 2, 4}};
}

RandomEffects RandCoefModel::impute(const RandomEffects& effects, const Params& params,
                                    Rng& rng) const {
  const RandCoefData& d = *data_;
  RandCoefState s{params, effects};
  check_state(s, d);
  const std::uint64_t base = rng();
  for_each_index(d.customers, Execution::parallel, [&](Index i) {
    Rng unit = make_rng(base, {0, static_cast<std::uint64_t>(d.customer_ids[i])});
    s.effects.lambdas.row(i) = draw_normal(lambda_conditional(i, s, d), unit).transpose();
  });
  // Effects of every customer are fixed from here on, so gamma_j can run in parallel.
  for_each_index(d.items, Execution::parallel, [&](Index j) {
    Rng unit = make_rng(base, {1, static_cast<std::uint64_t>(d.item_ids[j])});
    const NormalConditional c = gamma_conditional(j, s, d);
    s.effects.gammas.row(j) = draw_normal(c, unit).transpose();
  });
  return std::move(s.effects);
}

void RandCoefModel::update_block(std::size_t block, const RandomEffects& effects, Params& params,
                                 Rng& rng) const {
  const RandCoefData& d = *data_;
  const RandCoefState s{params, effects};
  const bool mode = method_ == Method::icc;
  switch (block) {
    case 0: {
      const NormalConditional c = beta_conditional(s, hyper_, d);
      params.beta = mode ? c.mean : draw_normal(c, rng);
      break;
    }
    case 1: {
      const InverseGammaConditional c = sigma2_conditional(s, hyper_, d);
      params.sigma2 = mode ? c.mode() : draw_inverse_gamma(c, rng);
      break;
    }
    case 2: {
      const InverseWishartConditional c = lambda_cov_conditional(s, hyper_, d);
      params.lambda_cov = mode ? c.mode() : draw_inverse_wishart(c, rng);
      check_spd(params.lambda_cov, "Lambda");
      break;
    }
    case 3: {
      const InverseWishartConditional c = gamma_cov_conditional(s, hyper_, d);
      params.gamma_cov = mode ? c.mode() : draw_inverse_wishart(c, rng);
      check_spd(params.gamma_cov, "Gamma");
      break;
    }
    default:
      throw Error(Errc::invalid_argument, "unknown block", block);
  }
}

Vector RandCoefModel::flatten(const Params& params) const {
  const Vector l = vech(params.lambda_cov);
  const Vector g = vech(params.gamma_cov);
  Vector out(params.beta.size() + 1 + l.size() + g.size());
  out << params.beta, params.sigma2, l, g;
  return out;
}

namespace {

RandCoefState sweep(const RandCoefState& state, const Hyperparameters& h, const RandCoefData& d,
                    Method method, Rng& rng) {
  const RandCoefModel model(d, h, method);
  RandCoefState next = state;
  next.effects = model.impute(state.effects, state.params, rng);
  for (std::size_t k : block_schedule(model.blocks()))
    model.update_block(k, next.effects, next.params, rng);
  return next;
}

}  // namespace

RandCoefState gibbs_step(const RandCoefState& state, const Hyperparameters& h,
                         const RandCoefData& d, Rng& rng) {
  return sweep(state, h, d, Method::gibbs, rng);
}

RandCoefState icc_step(const RandCoefState& state, const Hyperparameters& h, const RandCoefData& d,
                       Rng& rng) {
  return sweep(state, h, d, Method::icc, rng);
}

RandCoefState initial_state(const RandCoefData& d, const Hyperparameters& h, Rng& rng) {
  RandCoefState s;
  s.params.beta = h.mu_beta;
  for (Index k = 0; k < s.params.beta.size(); ++k) s.params.beta(k) += icfit::draw_normal(rng);
  s.params.sigma2 = 1.0;
  s.params.lambda_cov = Matrix::Identity(d.z_dim(), d.z_dim());
  s.params.gamma_cov = Matrix::Identity(d.w_dim(), d.w_dim());
  s.effects.lambdas.resize(d.customers, d.z_dim());
  s.effects.gammas.resize(d.items, d.w_dim());
  for (Index i = 0; i < s.effects.lambdas.size(); ++i)
    s.effects.lambdas.data()[i] = icfit::draw_normal(rng);
  for (Index i = 0; i < s.effects.gammas.size(); ++i)
    s.effects.gammas.data()[i] = icfit::draw_normal(rng);
  return s;
}

ChainTrace run_chain(const RandCoefData& d, const Hyperparameters& h, Method method,
                     const EngineConfig& cfg, std::size_t chain) {
  const RandCoefModel model(d, h, method);
  const std::uint64_t seed = chain_seed(cfg, chain);
  Rng init = make_rng(seed, {0});
  RandCoefState s = initial_state(d, h, init);
  Checkpoint<RandomEffects, Params> start{0, std::move(s.effects), std::move(s.params), true};
  return resume_icc(model, std::move(start), cfg, seed).trace;
}

}  // namespace icfit::randcoef
