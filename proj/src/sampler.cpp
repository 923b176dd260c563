#include "nlmfm/sampler.hpp"

#include "nlmfm/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nlmfm {

namespace {

constexpr double kLogLambdaBound = 700.0;

double safe_log(double v) { return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity(); }

}  // namespace

void ChainConfig::validate() const {
  if (!(iterations > burn_in && burn_in >= 0))
    throw std::invalid_argument("chain needs iterations > burn_in >= 0");
  if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  if (initial_factors < 1) throw std::invalid_argument("initial factor count must be at least 1");
  if (max_factors < initial_factors) throw std::invalid_argument("max_factors must be at least the initial factor count");
  if (atoms < 1) throw std::invalid_argument("number of atoms K must be at least 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(beta0 > 0.0)) throw std::invalid_argument("beta0 must be positive");
  if (!(adapt_b1 >= 0.0)) throw std::invalid_argument("adapt_b1 must be non-negative");
  if (!(base.kappa0 > 0.0) || !(base.a0 > 0.0) || !(base.b0 > 0.0))
    throw std::invalid_argument("base measure hyperparameters must be positive");
  if (!(score_shape > 0.0) || !(score_rate > 0.0)) throw std::invalid_argument("score prior must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(regression.psi_var >= 0.0) || !(regression.zeta_var >= 0.0))
    throw std::invalid_argument("regression prior variances must be non-negative");
  if (!(regression.tau_shape > 0.0) || !(regression.tau_rate > 0.0) || !(regression.tau_gamma_shape > 0.0) ||
      !(regression.tau_gamma_rate > 0.0))
    throw std::invalid_argument("precision priors must be positive");
  if (!(mh_initial_step >= 0.0)) throw std::invalid_argument("initial MH step must be non-negative");
  if (!(mh_target_acceptance > 0.0 && mh_target_acceptance < 1.0))
    throw std::invalid_argument("MH target acceptance must lie in (0, 1)");
  if (mh_batch < 1) throw std::invalid_argument("MH batch must be at least 1");
  if (grid.points < 2) throw std::invalid_argument("grid needs at least two points");
}

void ChainState::validate() const {
  atoms.validate();
  const Eigen::Index H = scores.rows();
  if (H < 1) throw std::logic_error("state has no factors");
  if (scores.cols() != atoms.size()) throw std::logic_error("scores and atoms disagree on K");
  if ((scores.array() <= 0.0).any()) throw std::logic_error("scores must be strictly positive");
  for (const auto& lambda : loadings) {
    if (lambda.cols() != H) throw std::logic_error("loadings and scores disagree on H");
    if ((lambda.array() <= 0.0).any()) throw std::logic_error("loadings must be strictly positive");
  }
  if (regression.factors() != H) throw std::logic_error("regression state and scores disagree on H");
  if (!(regression.tau > 0.0)) throw std::logic_error("tau must be positive");
}

SamplerContext::SamplerContext(const ArealDataset& data_, ChainConfig config_)
    : data(data_), config(std::move(config_)) {
  config.validate();
  data.validate();
  structure = -config.rho * data.W;
  structure.diagonal() = data.W.rowwise().sum();
  grid = make_grid(config.grid, data);
  mu0 = config.base.mu0 ? *config.base.mu0 : data.pooled_moments().first;
}

CarPrecision SamplerContext::precision(double tau) const { return build_precision(data.W, tau, config.rho); }

Eigen::VectorXd make_grid(const GridSpec& spec, const ArealDataset& data) {
  double lo = 0.0, hi = 0.0;
  if (!spec.lo || !spec.hi) {
    const auto [ylo, yhi] = data.observation_range();
    lo = ylo - spec.padding;
    hi = yhi + spec.padding;
  }
  if (spec.lo) lo = *spec.lo;
  if (spec.hi) hi = *spec.hi;
  return equispaced_grid<double>(lo, hi, spec.points);
}

ChainState initialize_state(const SamplerContext& ctx, Rng& rng) {
  const auto& data = ctx.data;
  const auto& cfg = ctx.config;
  const Eigen::Index K = cfg.atoms, H = cfg.initial_factors, g = data.areas(), p = data.covariates();

  std::vector<double> pooled;
  for (const auto& period : data.periods)
    for (const auto& y : period.y) pooled.insert(pooled.end(), y.data(), y.data() + y.size());
  std::sort(pooled.begin(), pooled.end());
  const double var = std::max(data.pooled_moments().second, 1e-6);

  ChainState s;
  s.atoms = Atoms(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(K);
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(pooled.size() - 1));
    s.atoms.mu(k) = pooled[idx];
    s.atoms.sigma2(k) = 0.25 * var;
    s.atoms.jumps(k) = 1.0;
  }
  s.scores.resize(H, K);
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index k = 0; k < K; ++k) s.scores(h, k) = rng.gamma(cfg.score_shape, cfg.score_rate);

  s.regression.rho = cfg.rho;
  s.regression.tau = 1.0;
  s.regression.tau_gamma = 1.0;
  s.regression.psi = 0.0;
  for (Eigen::Index t = 0; t < data.period_count(); ++t) {
    s.loadings.push_back(Eigen::MatrixXd::Ones(g, H));
    s.regression.zeta.push_back(Eigen::MatrixXd::Zero(H, p));
    s.regression.gamma.emplace_back(H, Eigen::MatrixXd::Zero(g, p));
  }
  s.allocation = update_allocations(s, data, rng);
  s.aux = update_aux(s, data, rng);
  s.validate();
  return s;
}

Allocation update_allocations(const ChainState& state, const ArealDataset& data, Rng& rng) {
  const Eigen::Index K = state.atoms.size(), H = state.factors();
  Eigen::ArrayXd log_norm(K), half_inv(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    log_norm(k) = -0.5 * std::log(2.0 * std::numbers::pi * state.atoms.sigma2(k));
    half_inv(k) = 0.5 / state.atoms.sigma2(k);
  }
  const Eigen::MatrixXd mj = state.scores * state.atoms.jumps.asDiagonal();  // H x K

  Allocation out(data.periods.size());
  Eigen::ArrayXd log_w(K);
  Eigen::VectorXd w(K);
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    const auto& period = data.periods[t];
    const auto& lambda = state.loadings[t];
    out[t].resize(period.y.size());
    for (Eigen::Index j = 0; j < data.areas(); ++j) {
      const Eigen::MatrixXd joint = lambda.row(j).transpose().asDiagonal() * mj;  // H x K
      Eigen::ArrayXd log_c(K);
      for (Eigen::Index k = 0; k < K; ++k) log_c(k) = safe_log(joint.col(k).sum());
      const auto& y = period.y[j];
      auto& area = out[t][j];
      area.factor.resize(y.size());
      area.atom.resize(y.size());
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        log_w = log_c + log_norm - half_inv * (y(i) - state.atoms.mu.array()).square();
        const double top = log_w.maxCoeff();
        if (!std::isfinite(top)) throw std::runtime_error("observation outside numeric support");
        w = (log_w - top).exp().matrix();
        const Eigen::Index k = rng.categorical(w);
        if (k < 0) throw std::runtime_error("observation outside numeric support");
        const Eigen::Index h = H == 1 ? 0 : rng.categorical(joint.col(k));
        if (h < 0) throw std::runtime_error("observation outside numeric support");
        area.atom(i) = static_cast<int>(k);
        area.factor(i) = static_cast<int>(h);
      }
    }
  }
  return out;
}

Eigen::VectorXd atom_counts(const Allocation& allocation, Eigen::Index atoms) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(atoms);
  for (const auto& period : allocation)
    for (const auto& area : period)
      for (Eigen::Index i = 0; i < area.atom.size(); ++i) n(area.atom(i)) += 1.0;
  return n;
}

Eigen::MatrixXd factor_atom_counts(const Allocation& allocation, Eigen::Index factors, Eigen::Index atoms) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(factors, atoms);
  for (const auto& period : allocation)
    for (const auto& area : period)
      for (Eigen::Index i = 0; i < area.atom.size(); ++i) n(area.factor(i), area.atom(i)) += 1.0;
  return n;
}

Eigen::MatrixXd area_factor_counts(const std::vector<AreaAllocation>& period, Eigen::Index factors) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(period.size()), factors);
  for (std::size_t j = 0; j < period.size(); ++j)
    for (Eigen::Index i = 0; i < period[j].factor.size(); ++i)
      n(static_cast<Eigen::Index>(j), period[j].factor(i)) += 1.0;
  return n;
}

NigPosterior nig_posterior(const BaseMeasure& base, double mu0, Eigen::Index n, double sum, double sumsq) {
  const double nd = static_cast<double>(n);
  NigPosterior post;
  post.a = base.a0 + 0.5 * nd;
  if (std::isinf(base.kappa0)) {
    post.kappa = base.kappa0;
    post.mu = mu0;
    post.b = base.b0 + 0.5 * std::max(sumsq - 2.0 * mu0 * sum + nd * mu0 * mu0, 0.0);
    return post;
  }
  post.kappa = base.kappa0 + nd;
  post.mu = (base.kappa0 * mu0 + sum) / post.kappa;
  post.b = base.b0;
  if (n > 0) {
    const double mean = sum / nd;
    const double ss = std::max(sumsq - nd * mean * mean, 0.0);
    post.b += 0.5 * ss + 0.5 * base.kappa0 * nd * (mean - mu0) * (mean - mu0) / post.kappa;
  }
  return post;
}

Atom<double> draw_nig(const NigPosterior& post, Rng& rng) {
  Atom<double> a;
  a.sigma2 = rng.inverse_gamma(post.a, post.b);
  a.mu = std::isinf(post.kappa) ? post.mu : post.mu + std::sqrt(a.sigma2 / post.kappa) * rng.normal();
  return a;
}

Atoms update_atoms(const ChainState& state, const ArealDataset& data, const BaseMeasure& base, double mu0,
                   Rng& rng) {
  const Eigen::Index K = state.atoms.size();
  Eigen::VectorXd n = Eigen::VectorXd::Zero(K), sum = n, sumsq = n;
  for (std::size_t t = 0; t < data.periods.size(); ++t)
    for (std::size_t j = 0; j < data.periods[t].y.size(); ++j) {
      const auto& y = data.periods[t].y[j];
      const auto& area = state.allocation[t][j];
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const int k = area.atom(i);
        n(k) += 1.0;
        sum(k) += y(i);
        sumsq(k) += y(i) * y(i);
      }
    }
  Atoms out = state.atoms;
  for (Eigen::Index k = 0; k < K; ++k)
    out.set_atom(k, draw_nig(nig_posterior(base, mu0, static_cast<Eigen::Index>(n(k)), sum(k), sumsq(k)), rng));
  return out;
}

std::vector<Eigen::VectorXd> area_total_mass(const ChainState& state) {
  const Eigen::VectorXd mass = factor_mass(state.scores, state.atoms.jumps);
  std::vector<Eigen::VectorXd> out;
  for (const auto& lambda : state.loadings) out.push_back(lambda * mass);
  return out;
}

AuxScale update_aux(const ChainState& state, const ArealDataset& data, Rng& rng) {
  const auto totals = area_total_mass(state);
  AuxScale out(totals.size());
  for (std::size_t t = 0; t < totals.size(); ++t) {
    out[t].resize(totals[t].size());
    for (Eigen::Index j = 0; j < totals[t].size(); ++j)
      out[t](j) = rng.gamma(static_cast<double>(data.periods[t].y[j].size()), totals[t](j));
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> jump_conditional(const ChainState& state, double alpha) {
  const Eigen::Index K = state.atoms.size();
  Eigen::VectorXd shape = atom_counts(state.allocation, K).array() + alpha / static_cast<double>(K);
  Eigen::RowVectorXd exposure = Eigen::RowVectorXd::Zero(state.factors());
  for (std::size_t t = 0; t < state.loadings.size(); ++t) exposure += state.aux[t].transpose() * state.loadings[t];
  Eigen::VectorXd rate = (exposure * state.scores).transpose().array() + 1.0;
  return {shape, rate};
}

Eigen::VectorXd update_jumps(const ChainState& state, double alpha, Rng& rng) {
  const auto [shape, rate] = jump_conditional(state, alpha);
  Eigen::VectorXd out(shape.size());
  for (Eigen::Index k = 0; k < shape.size(); ++k) out(k) = rng.gamma(shape(k), rate(k));
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> score_conditional(const ChainState& state, double shape, double rate) {
  const Eigen::Index H = state.factors(), K = state.atoms.size();
  Eigen::MatrixXd a = factor_atom_counts(state.allocation, H, K).array() + shape;
  Eigen::VectorXd exposure = Eigen::VectorXd::Zero(H);
  for (std::size_t t = 0; t < state.loadings.size(); ++t)
    exposure += state.loadings[t].transpose() * state.aux[t];
  Eigen::MatrixXd b = (exposure * state.atoms.jumps.transpose()).array() + rate;
  return {a, b};
}

Eigen::MatrixXd update_scores(const ChainState& state, double shape, double rate, Rng& rng) {
  const auto [a, b] = score_conditional(state, shape, rate);
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (Eigen::Index h = 0; h < a.rows(); ++h)
    for (Eigen::Index k = 0; k < a.cols(); ++k) out(h, k) = rng.gamma(a(h, k), b(h, k));
  return out;
}

double loading_log_target(double x, double count, double u_times_mass, double cond_mean, double cond_prec) {
  if (std::abs(x) > kLogLambdaBound) return -std::numeric_limits<double>::infinity();
  const double r = x - cond_mean;
  return count * x - u_times_mass * std::exp(x) - 0.5 * cond_prec * r * r;
}

LoadingTuner::LoadingTuner(Eigen::Index periods, Eigen::Index areas, double initial_step) {
  const double init = initial_step > 0.0 ? std::log(initial_step) : -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < periods; ++t) {
    log_step.push_back(Eigen::VectorXd::Constant(areas, init));
    accepted.push_back(Eigen::VectorXd::Zero(areas));
    proposed.push_back(Eigen::VectorXd::Zero(areas));
  }
}

void LoadingTuner::adapt(double target, long batch_index) {
  const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(std::max(batch_index, 1L))));
  for (std::size_t t = 0; t < log_step.size(); ++t) {
    for (Eigen::Index j = 0; j < log_step[t].size(); ++j) {
      if (proposed[t](j) == 0.0 || !std::isfinite(log_step[t](j))) continue;
      log_step[t](j) += accepted[t](j) / proposed[t](j) > target ? delta : -delta;
    }
    accepted[t].setZero();
    proposed[t].setZero();
  }
}

void update_loadings(ChainState& state, const SamplerContext& ctx, LoadingTuner& tuner, Rng& rng) {
  const auto& data = ctx.data;
  const Eigen::Index H = state.factors(), g = data.areas();
  const Eigen::VectorXd mass = factor_mass(state.scores, state.atoms.jumps);
  const double tau = state.regression.tau;
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    const Eigen::MatrixXd counts = area_factor_counts(state.allocation[t], H);
    const auto& u = state.aux[t];
    auto& lambda = state.loadings[t];
    for (Eigen::Index h = 0; h < H; ++h) {
      const Eigen::VectorXd mean =
          regression_mean(state.regression.psi, data.periods[t].C, state.regression.effects(static_cast<Eigen::Index>(t), h));
      Eigen::VectorXd x = lambda.col(h).array().log();
      Eigen::VectorXd e = x - mean;
      for (Eigen::Index j = 0; j < g; ++j) {
        const double q_jj = tau * ctx.structure(j, j);
        const double off = tau * ctx.structure.row(j).dot(e) - q_jj * e(j);
        const double cond_mean = mean(j) - off / q_jj;
        const double um = u(j) * mass(h);
        const double step = std::exp(tuner.log_step[t](j));
        const double proposal = x(j) + step * rng.normal();
        const double log_ratio = loading_log_target(proposal, counts(j, h), um, cond_mean, q_jj) -
                                 loading_log_target(x(j), counts(j, h), um, cond_mean, q_jj);
        tuner.proposed[t](j) += 1.0;
        tuner.total_proposed += 1.0;
        if (log_ratio >= 0.0 || std::log(rng.open_uniform()) < log_ratio) {
          x(j) = proposal;
          e(j) = proposal - mean(j);
          tuner.accepted[t](j) += 1.0;
          tuner.total_accepted += 1.0;
        }
      }
      lambda.col(h) = x.array().exp().max(std::numeric_limits<double>::min()).matrix();
    }
  }
}

void update_regression(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const auto& data = ctx.data;
  const auto& prior = ctx.config.regression;
  auto& reg = state.regression;
  const CarPrecision car = ctx.precision(reg.tau);
  const Eigen::Index H = state.factors();

  for (std::size_t t = 0; t < data.periods.size(); ++t)
    for (Eigen::Index h = 0; h < H; ++h) {
      const Eigen::VectorXd log_lambda = state.loadings[t].col(h).array().log();
      reg.set_effects(static_cast<Eigen::Index>(t), h,
                      log_lambda_regression_update(log_lambda, reg.psi, data.periods[t].C, car, reg.tau_gamma, prior,
                                                   rng));
    }

  std::vector<Eigen::VectorXd> offsets;
  for (std::size_t t = 0; t < data.periods.size(); ++t)
    for (Eigen::Index h = 0; h < H; ++h) {
      const Eigen::VectorXd log_lambda = state.loadings[t].col(h).array().log();
      offsets.push_back(log_lambda -
                        regression_mean(0.0, data.periods[t].C, reg.effects(static_cast<Eigen::Index>(t), h)));
    }
  reg.psi = update_psi(offsets, car, prior, rng);

  std::vector<Eigen::VectorXd> interactions;
  for (const auto& period : reg.gamma)
    for (const auto& gamma_h : period)
      for (Eigen::Index m = 0; m < gamma_h.cols(); ++m) interactions.push_back(gamma_h.col(m));
  if (!interactions.empty()) {
    const auto [a, b] =
        car_scale_conditional(interactions, ctx.structure, prior.tau_gamma_shape, prior.tau_gamma_rate);
    reg.tau_gamma = rng.gamma(a, b);
  }
}

std::vector<Eigen::VectorXd> loading_residuals(const ChainState& state, const ArealDataset& data) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t t = 0; t < data.periods.size(); ++t)
    for (Eigen::Index h = 0; h < state.factors(); ++h) {
      const Eigen::VectorXd log_lambda = state.loadings[t].col(h).array().log();
      out.push_back(log_lambda - regression_mean(state.regression.psi, data.periods[t].C,
                                                 state.regression.effects(static_cast<Eigen::Index>(t), h)));
    }
  return out;
}

void update_tau(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const auto residuals = loading_residuals(state, ctx.data);
  state.regression.tau = update_tau(residuals, ctx.structure, ctx.config.regression.tau_shape,
                                    ctx.config.regression.tau_rate, rng);
}

double adaptation_probability(double b0, double b1, long iteration) {
  return std::exp(-b0 - b1 * static_cast<double>(iteration));
}

Eigen::MatrixXd residual_angles(const Eigen::MatrixXd& residuals) {
  const Eigen::Index H = residuals.cols();
  Eigen::MatrixXd angles = Eigen::MatrixXd::Zero(H, H);
  for (Eigen::Index a = 0; a < H; ++a)
    for (Eigen::Index b = a + 1; b < H; ++b)
      angles(a, b) = angles(b, a) = angular_separation(residuals.col(a), residuals.col(b));
  return angles;
}

namespace {

template <typename Matrix>
void erase_row(Matrix& m, Eigen::Index r) {
  Matrix out(m.rows() - 1, m.cols());
  out.topRows(r) = m.topRows(r);
  out.bottomRows(m.rows() - r - 1) = m.bottomRows(m.rows() - r - 1);
  m = std::move(out);
}

template <typename Matrix>
void erase_col(Matrix& m, Eigen::Index c) {
  Matrix out(m.rows(), m.cols() - 1);
  out.leftCols(c) = m.leftCols(c);
  out.rightCols(m.cols() - c - 1) = m.rightCols(m.cols() - c - 1);
  m = std::move(out);
}

}  // namespace

void remove_factor(ChainState& state, Eigen::Index h) {
  if (state.factors() <= 1) throw std::logic_error("cannot remove the only factor");
  if (h < 0 || h >= state.factors()) throw std::out_of_range("factor index out of range");
  erase_row(state.scores, h);
  for (auto& lambda : state.loadings) erase_col(lambda, h);
  for (auto& zeta : state.regression.zeta) erase_row(zeta, h);
  for (auto& gamma : state.regression.gamma) gamma.erase(gamma.begin() + h);
  // Allocations referencing h are stale; they are redrawn before any use.
  for (auto& period : state.allocation)
    for (auto& area : period) area.factor.setZero();
}

void add_factor(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const auto& cfg = ctx.config;
  const auto& data = ctx.data;
  const Eigen::Index K = state.atoms.size(), H = state.factors(), g = data.areas(), p = data.covariates();
  auto& reg = state.regression;

  Eigen::MatrixXd scores(H + 1, K);
  scores.topRows(H) = state.scores;
  for (Eigen::Index k = 0; k < K; ++k) scores(H, k) = rng.gamma(cfg.score_shape, cfg.score_rate);
  state.scores = std::move(scores);

  const CarPrecision error_car = ctx.precision(reg.tau);
  const CarPrecision gamma_car = ctx.precision(reg.tau_gamma);
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    FactorEffects born;
    born.zeta.resize(p);
    for (Eigen::Index m = 0; m < p; ++m)
      born.zeta(m) = cfg.regression.zeta_mean + std::sqrt(cfg.regression.zeta_var) * rng.normal();
    born.gamma.resize(g, p);
    for (Eigen::Index m = 0; m < p; ++m) born.gamma.col(m) = sample_gmrf(gamma_car, rng);
    const Eigen::VectorXd log_lambda =
        regression_mean(reg.psi, data.periods[t].C, born) + sample_gmrf(error_car, rng);

    Eigen::MatrixXd zeta(H + 1, p);
    zeta.topRows(H) = reg.zeta[t];
    zeta.row(H) = born.zeta.transpose();
    reg.zeta[t] = std::move(zeta);
    reg.gamma[t].push_back(born.gamma);

    Eigen::MatrixXd lambda(g, H + 1);
    lambda.leftCols(H) = state.loadings[t];
    lambda.col(H) = log_lambda.array().max(-kLogLambdaBound).min(kLogLambdaBound).exp().matrix();
    state.loadings[t] = std::move(lambda);
  }
}

AdaptationOutcome adaptation_step(ChainState& state, const SamplerContext& ctx, long iteration, Rng& rng) {
  const auto& cfg = ctx.config;
  if (iteration >= cfg.burn_in) return AdaptationOutcome::none;
  if (!(rng.uniform() < adaptation_probability(cfg.adapt_b0, cfg.adapt_b1, iteration)))
    return AdaptationOutcome::none;

  const Eigen::Index H = state.factors();
  if (H >= 2) {
    const Eigen::MatrixXd angles = residual_angles(residual_matrix(ctx.grid, state.view(), true));
    Eigen::Index a = 0, b = 1;
    double closest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < H; ++i)
      for (Eigen::Index j = i + 1; j < H; ++j)
        if (angles(i, j) < closest) {
          closest = angles(i, j);
          a = i;
          b = j;
        }
    if (closest < cfg.beta0) {
      remove_factor(state, rng.uniform() < 0.5 ? a : b);
      return AdaptationOutcome::removed;
    }
    if (!(closest > cfg.beta0)) return AdaptationOutcome::none;
  }
  if (H >= cfg.max_factors) return AdaptationOutcome::none;
  add_factor(state, ctx, rng);
  return AdaptationOutcome::added;
}

Eigen::VectorXd observation_loglik(const ChainState& state, const ArealDataset& data) {
  const Eigen::Index K = state.atoms.size();
  Eigen::ArrayXd log_norm(K), half_inv(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    log_norm(k) = -0.5 * std::log(2.0 * std::numbers::pi * state.atoms.sigma2(k));
    half_inv(k) = 0.5 / state.atoms.sigma2(k);
  }
  Eigen::VectorXd out(data.observation_count());
  Eigen::Index pos = 0;
  Eigen::ArrayXd log_w(K);
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    const Eigen::MatrixXd atom_weight =
        (state.loadings[t] * state.scores) * state.atoms.jumps.asDiagonal();  // g x K
    for (Eigen::Index j = 0; j < data.areas(); ++j) {
      const double total = atom_weight.row(j).sum();
      Eigen::ArrayXd log_c(K);
      for (Eigen::Index k = 0; k < K; ++k) log_c(k) = safe_log(atom_weight(j, k) / total);
      const auto& y = data.periods[t].y[j];
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        log_w = log_c + log_norm - half_inv * (y(i) - state.atoms.mu.array()).square();
        const double top = log_w.maxCoeff();
        out(pos++) = top + std::log((log_w - top).exp().sum());
      }
    }
  }
  return out;
}

void update_invariant_directions(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const auto& data = ctx.data;
  const auto& cfg = ctx.config;
  const auto& prior = cfg.regression;
  auto& reg = state.regression;
  const Eigen::Index H = state.factors(), K = state.atoms.size(), g = data.areas(), p = data.covariates();
  const auto T = static_cast<double>(data.period_count());
  auto shift_log_loadings = [&](std::size_t t, Eigen::Index h, const Eigen::VectorXd& delta) {
    state.loadings[t].col(h) =
        (state.loadings[t].col(h).array().log() + delta.array()).max(-kLogLambdaBound).min(kLogLambdaBound).exp().matrix();
  };

  // Global level: psi and every log-loading move together.
  if (prior.psi_var > 0.0) {
    const double next = prior.psi_mean + std::sqrt(prior.psi_var) * rng.normal();
    const Eigen::VectorXd delta = Eigen::VectorXd::Constant(g, next - reg.psi);
    for (std::size_t t = 0; t < state.loadings.size(); ++t)
      for (Eigen::Index h = 0; h < H; ++h) shift_log_loadings(t, h, delta);
    reg.psi = next;
  }

  // Common shift of one covariate's effects across factors, per period.
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    const auto& C = data.periods[t].C;
    for (Eigen::Index m = 0; m < p; ++m) {
      if (prior.zeta_var > 0.0) {
        const double mean = prior.zeta_mean - reg.zeta[t].col(m).mean();
        const double delta = mean + std::sqrt(prior.zeta_var / static_cast<double>(H)) * rng.normal();
        reg.zeta[t].col(m).array() += delta;
        for (Eigen::Index h = 0; h < H; ++h) shift_log_loadings(t, h, delta * C.col(m));
      }
      Eigen::VectorXd gamma_mean = Eigen::VectorXd::Zero(g);
      for (Eigen::Index h = 0; h < H; ++h) gamma_mean += reg.gamma[t][h].col(m);
      gamma_mean /= static_cast<double>(H);
      const CarPrecision car = ctx.precision(static_cast<double>(H) * reg.tau_gamma);
      const Eigen::VectorXd delta = -gamma_mean + sample_gmrf(car, rng);
      for (Eigen::Index h = 0; h < H; ++h) {
        reg.gamma[t][h].col(m) += delta;
        shift_log_loadings(t, h, C.col(m).cwiseProduct(delta));
      }
    }
  }

  // Per-factor scale: lambda_h * c with m_h / c. Random-walk MH on log c with
  // a step matched to the curvature of the Gaussian part.
  const double one_s_one = ctx.structure.sum();
  for (Eigen::Index h = 0; h < H; ++h) {
    double lin = 0.0;
    for (std::size_t t = 0; t < data.periods.size(); ++t) {
      const Eigen::VectorXd e = state.loadings[t].col(h).array().log().matrix() -
                                regression_mean(reg.psi, data.periods[t].C, reg.effects(static_cast<Eigen::Index>(t), h));
      lin += (ctx.structure * e).sum();
    }
    const double quad = reg.tau * T * one_s_one;
    const double mass = state.scores.row(h).sum();
    const double a = cfg.score_shape * static_cast<double>(K);
    auto log_target = [&](double d) {
      return -reg.tau * lin * d - 0.5 * quad * d * d - a * d - cfg.score_rate * mass * std::exp(-d);
    };
    const double step = 1.0 / std::sqrt(quad + a);
    const double d = step * rng.normal();
    if (std::log(rng.open_uniform()) < log_target(d) - log_target(0.0)) {
      state.scores.row(h) *= std::exp(-d);
      state.scores.row(h) = state.scores.row(h).cwiseMax(std::numeric_limits<double>::min());
      const Eigen::VectorXd delta = Eigen::VectorXd::Constant(g, d);
      for (std::size_t t = 0; t < state.loadings.size(); ++t) shift_log_loadings(t, h, delta);
    }
  }
}

void gibbs_sweep(ChainState& state, const SamplerContext& ctx, LoadingTuner& tuner, Rng& rng) {
  const auto& cfg = ctx.config;
  const auto& data = ctx.data;
  state.allocation = update_allocations(state, data, rng);
  {
    Atoms next = update_atoms(state, data, cfg.base, ctx.mu0, rng);
    state.atoms.mu = next.mu;
    state.atoms.sigma2 = next.sigma2;
  }
  if (cfg.invariance_moves) update_invariant_directions(state, ctx, rng);
  state.aux = update_aux(state, data, rng);
  state.atoms.jumps = update_jumps(state, cfg.alpha, rng);
  state.scores = update_scores(state, cfg.score_shape, cfg.score_rate, rng);
  update_loadings(state, ctx, tuner, rng);
  update_regression(state, ctx, rng);
  update_tau(state, ctx, rng);
}

ChainState draw_prior_state(const SamplerContext& ctx, Eigen::Index factors, Rng& rng) {
  const auto& cfg = ctx.config;
  const auto& data = ctx.data;
  const auto& prior = cfg.regression;
  const Eigen::Index K = cfg.atoms, g = data.areas(), p = data.covariates();
  ChainState s;
  s.atoms = Atoms(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Atom<double> a = draw_nig({ctx.mu0, cfg.base.kappa0, cfg.base.a0, cfg.base.b0}, rng);
    s.atoms.mu(k) = a.mu;
    s.atoms.sigma2(k) = a.sigma2;
    s.atoms.jumps(k) = rng.gamma(cfg.alpha / static_cast<double>(K), 1.0);
  }
  s.scores.resize(factors, K);
  for (Eigen::Index h = 0; h < factors; ++h)
    for (Eigen::Index k = 0; k < K; ++k) s.scores(h, k) = rng.gamma(cfg.score_shape, cfg.score_rate);

  auto& reg = s.regression;
  reg.rho = cfg.rho;
  reg.tau = rng.gamma(prior.tau_shape, prior.tau_rate);
  reg.tau_gamma = rng.gamma(prior.tau_gamma_shape, prior.tau_gamma_rate);
  reg.psi = prior.psi_mean + std::sqrt(prior.psi_var) * rng.normal();
  const CarPrecision error_car = ctx.precision(reg.tau);
  const CarPrecision gamma_car = ctx.precision(reg.tau_gamma);
  for (const auto& period : data.periods) {
    Eigen::MatrixXd zeta(factors, p), lambda(g, factors);
    std::vector<Eigen::MatrixXd> gamma;
    for (Eigen::Index h = 0; h < factors; ++h) {
      FactorEffects e;
      e.zeta.resize(p);
      for (Eigen::Index m = 0; m < p; ++m) e.zeta(m) = prior.zeta_mean + std::sqrt(prior.zeta_var) * rng.normal();
      e.gamma.resize(g, p);
      for (Eigen::Index m = 0; m < p; ++m) e.gamma.col(m) = sample_gmrf(gamma_car, rng);
      const Eigen::VectorXd log_lambda = regression_mean(reg.psi, period.C, e) + sample_gmrf(error_car, rng);
      lambda.col(h) = log_lambda.array().max(-kLogLambdaBound).min(kLogLambdaBound).exp().matrix();
      zeta.row(h) = e.zeta.transpose();
      gamma.push_back(std::move(e.gamma));
    }
    s.loadings.push_back(std::move(lambda));
    reg.zeta.push_back(std::move(zeta));
    reg.gamma.push_back(std::move(gamma));
  }
  return s;
}

void simulate_observations(const ChainState& state, ArealDataset& data, Rng& rng) {
  const Eigen::Index K = state.atoms.size();
  const Eigen::MatrixXd mj = state.scores * state.atoms.jumps.asDiagonal();  // H x K
  for (std::size_t t = 0; t < data.periods.size(); ++t) {
    const Eigen::MatrixXd atom_weight = state.loadings[t] * mj;  // g x K
    for (Eigen::Index j = 0; j < data.areas(); ++j) {
      auto& y = data.periods[t].y[static_cast<std::size_t>(j)];
      const Eigen::VectorXd w = atom_weight.row(j).transpose();
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        Eigen::Index k = rng.categorical(w);
        if (k < 0) k = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(K));
        y(i) = rng.normal(state.atoms.mu(k), std::sqrt(state.atoms.sigma2(k)));
      }
    }
  }
}

ChainDraws run_chain(const ArealDataset& data, const ChainConfig& config) {
  const SamplerContext ctx(data, config);
  const auto& cfg = ctx.config;
  Rng rng(cfg.seed);
  ChainState state = initialize_state(ctx, rng);
  LoadingTuner tuner(data.period_count(), data.areas(), cfg.mh_initial_step);

  ChainDraws out;
  out.config = cfg;
  out.grid = ctx.grid;
  out.area_ids = data.area_ids;
  out.covariate_names = data.covariate_names;
  for (const auto& period : data.periods) out.period_labels.push_back(period.label);
  const long stored = (cfg.iterations - cfg.burn_in + cfg.thinning - 1) / cfg.thinning;
  out.draws.reserve(static_cast<std::size_t>(stored));
  if (cfg.store_loglik) out.loglik.resize(stored, data.observation_count());
  out.h_trace.reserve(static_cast<std::size_t>(cfg.iterations));

  long batch = 0;
  for (long i = 0; i < cfg.iterations; ++i) {
    try {
      if (cfg.adaptive && i < cfg.burn_in) {
        switch (adaptation_step(state, ctx, i, rng)) {
          case AdaptationOutcome::added: ++out.added; break;
          case AdaptationOutcome::removed: ++out.removed; break;
          case AdaptationOutcome::none: break;
        }
      }
      gibbs_sweep(state, ctx, tuner, rng);
      if (i < cfg.burn_in && (i + 1) % cfg.mh_batch == 0) tuner.adapt(cfg.mh_target_acceptance, ++batch);
      if (i + 1 == cfg.burn_in) tuner.total_accepted = tuner.total_proposed = 0.0;
    } catch (const std::exception& e) {
      throw std::runtime_error("iteration " + std::to_string(i) + ": " + e.what());
    }
    out.h_trace.push_back(static_cast<int>(state.factors()));

    if (i >= cfg.burn_in && (i - cfg.burn_in) % cfg.thinning == 0) {
      state.validate();
      if (cfg.store_loglik)
        out.loglik.row(static_cast<Eigen::Index>(out.draws.size())) = observation_loglik(state, data).transpose();
      out.draws.push_back({state.atoms, state.scores, state.loadings, state.regression});
    }
  }
  out.loading_acceptance = tuner.acceptance_rate();
  return out;
}

}  // namespace nlmfm
