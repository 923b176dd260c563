#include "nlmfm/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nlmfm {

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine similarity of vectors of different lengths");
  const double nu = u.norm(), nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw std::domain_error("degenerate residual vector");
  return u.dot(v) / (nu * nv);
}

double angular_separation(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
  return std::acos(std::clamp(cosine_similarity(u, v), -1.0, 1.0));
}

Eigen::MatrixXd alignment_cost(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s) {
  if (ref.rows() != s.rows()) throw std::invalid_argument("residual matrices are on different grids");
  Eigen::MatrixXd cost(ref.cols(), s.cols());
  for (Eigen::Index i = 0; i < ref.cols(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j) cost(i, j) = 1.0 - cosine_similarity(ref.col(i), s.col(j));
  return cost;
}

std::vector<int> hungarian_assign(const Eigen::MatrixXd& cost) {
  // Kuhn-Munkres with potentials on the transposed problem: each of the n
  // columns ("workers") is assigned one of the m >= n rows ("jobs").
  const auto n = static_cast<int>(cost.cols());
  const auto m = static_cast<int>(cost.rows());
  if (n > m) throw std::invalid_argument("assignment needs at least as many rows as columns");
  if (!cost.allFinite()) throw std::invalid_argument("assignment cost must be finite");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> owner(m + 1, 0), way(m + 1, 0);
  for (int worker = 1; worker <= n; ++worker) {
    owner[0] = worker;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_of(n, -1);
  for (int j = 1; j <= m; ++j)
    if (owner[j] != 0) row_of[owner[j] - 1] = j - 1;
  return row_of;
}

Eigen::MatrixXi hungarian_match(const Eigen::MatrixXd& cost) {
  const auto row_of = hungarian_assign(cost);
  Eigen::MatrixXi P = Eigen::MatrixXi::Zero(cost.rows(), cost.cols());
  for (std::size_t j = 0; j < row_of.size(); ++j) P(row_of[j], static_cast<Eigen::Index>(j)) = 1;
  return P;
}

int AlignmentOperator::source_of(Eigen::Index i) const {
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    if (P(i, j)) return static_cast<int>(j);
  return -1;
}

std::vector<bool> AlignmentOperator::matched() const {
  std::vector<bool> out(static_cast<std::size_t>(P.rows()));
  for (Eigen::Index i = 0; i < P.rows(); ++i) out[static_cast<std::size_t>(i)] = source_of(i) >= 0;
  return out;
}

Eigen::MatrixXd AlignmentOperator::matrix() const { return d.asDiagonal() * P.cast<double>(); }

Eigen::VectorXd diagonal_procrustes(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s, const Eigen::MatrixXi& P,
                                    const std::function<void(const std::string&)>& warn) {
  if (ref.rows() != s.rows()) throw std::invalid_argument("residual matrices are on different grids");
  if (P.rows() != ref.cols() || P.cols() != s.cols()) throw std::invalid_argument("assignment shape mismatch");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(ref.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      if (!P(i, j)) continue;
      const double norm2 = s.col(j).squaredNorm();
      if (!(norm2 > 0.0)) throw std::domain_error("zero-norm matched residual column");
      d(i) = ref.col(i).dot(s.col(j)) / norm2;
      if (d(i) < 0.0) {
        if (warn)
          warn("scaling for reference factor " + std::to_string(i) + " was negative (" + std::to_string(d(i)) +
               "); clamped to 0");
        d(i) = 0.0;
      }
    }
  return d;
}

AlignmentOperator fit_alignment(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s,
                                const std::function<void(const std::string&)>& warn) {
  AlignmentOperator op;
  op.P = hungarian_match(alignment_cost(ref, s));
  op.d = diagonal_procrustes(ref, s, op.P, warn);
  return op;
}

AlignedFactors apply_alignment(const AlignmentOperator& op, const Eigen::MatrixXd& residuals,
                               const Eigen::MatrixXd& loadings) {
  if (residuals.cols() != op.source_factors() || loadings.cols() != op.source_factors())
    throw std::invalid_argument("alignment operator does not match the factor count");
  constexpr double floor = 1e-10;
  AlignedFactors out;
  out.residuals = Eigen::MatrixXd::Zero(residuals.rows(), op.reference_factors());
  out.loadings = Eigen::MatrixXd::Zero(loadings.rows(), op.reference_factors());
  out.matched = op.matched();
  for (Eigen::Index i = 0; i < op.reference_factors(); ++i) {
    const int j = op.source_of(i);
    if (j < 0) continue;
    if (!(op.d(i) > 0.0)) throw std::domain_error("singular alignment operator");
    out.residuals.col(i) = op.d(i) * residuals.col(j);
    for (Eigen::Index a = 0; a < loadings.rows(); ++a) {
      double v = loadings(a, j) / op.d(i);
      if (!(v >= floor)) {
        v = floor;
        ++out.clamped_loadings;
      }
      out.loadings(a, i) = v;
    }
  }
  return out;
}

Eigen::MatrixXd rotate_scores(const AlignmentOperator& op, const Eigen::MatrixXd& scores) {
  if (scores.rows() != op.source_factors()) throw std::invalid_argument("alignment operator does not match scores");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(op.reference_factors(), scores.cols());
  for (Eigen::Index i = 0; i < op.reference_factors(); ++i)
    if (const int j = op.source_of(i); j >= 0) out.row(i) = op.d(i) * scores.row(j);
  return out;
}

std::vector<RmseRow> rmse_improvement(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& before,
                                      const Eigen::MatrixXd& after) {
  if (ref.rows() != before.rows() || ref.rows() != after.rows() || ref.cols() != before.cols() ||
      ref.cols() != after.cols())
    throw std::invalid_argument("RMSE inputs must share shape");
  std::vector<RmseRow> rows;
  const double n = static_cast<double>(ref.rows());
  for (Eigen::Index h = 0; h < ref.cols(); ++h) {
    RmseRow r;
    r.before = std::sqrt((ref.col(h) - before.col(h)).squaredNorm() / n);
    r.after = std::sqrt((ref.col(h) - after.col(h)).squaredNorm() / n);
    r.improvement_percent = r.before > 0.0 ? 100.0 * (1.0 - r.after / r.before) : 0.0;
    rows.push_back(r);
  }
  return rows;
}

EffectDraws redraw_effects(const std::vector<Eigen::MatrixXd>& loading_means, const std::vector<Eigen::MatrixXd>& C,
                           const Eigen::MatrixXd& W, double rho, const RegressionPrior& prior, long draws,
                           long burn_in, Rng& rng) {
  if (loading_means.empty() || loading_means.size() != C.size())
    throw std::invalid_argument("effect redraw needs one loading matrix and design per period");
  if (draws < 1 || burn_in < 0) throw std::invalid_argument("effect redraw needs draws >= 1 and burn_in >= 0");
  const Eigen::Index H = loading_means.front().cols(), g = W.rows(), p = C.front().cols();
  std::vector<Eigen::MatrixXd> log_lambda;
  for (const auto& lambda : loading_means) {
    if (lambda.rows() != g || lambda.cols() != H) throw std::invalid_argument("loading means have inconsistent shape");
    if ((lambda.array() <= 0.0).any()) throw std::domain_error("loading means must be positive");
    log_lambda.push_back(lambda.array().log().matrix());
  }

  CarPrecision unit = build_precision(W, 1.0, rho);
  const Eigen::MatrixXd structure = unit.Q;
  RegressionState state;
  state.rho = rho;
  state.psi = prior.psi_var == 0.0 ? prior.psi_mean : 0.0;
  for (std::size_t t = 0; t < C.size(); ++t) {
    state.zeta.push_back(Eigen::MatrixXd::Constant(H, p, prior.zeta_var == 0.0 ? prior.zeta_mean : 0.0));
    state.gamma.emplace_back(H, Eigen::MatrixXd::Zero(g, p));
  }

  EffectDraws out;
  for (long it = 0; it < burn_in + draws; ++it) {
    const CarPrecision car = build_precision(W, state.tau, rho);
    for (std::size_t t = 0; t < C.size(); ++t)
      for (Eigen::Index h = 0; h < H; ++h)
        state.set_effects(static_cast<Eigen::Index>(t), h,
                          log_lambda_regression_update(log_lambda[t].col(h), state.psi, C[t], car, state.tau_gamma,
                                                       prior, rng));
    std::vector<Eigen::VectorXd> offsets;
    for (std::size_t t = 0; t < C.size(); ++t)
      for (Eigen::Index h = 0; h < H; ++h)
        offsets.push_back(log_lambda[t].col(h) - regression_mean(0.0, C[t], state.effects(static_cast<Eigen::Index>(t), h)));
    state.psi = update_psi(offsets, car, prior, rng);

    std::vector<Eigen::VectorXd> interactions;
    for (const auto& period : state.gamma)
      for (const auto& gamma_h : period)
        for (Eigen::Index m = 0; m < p; ++m) interactions.push_back(gamma_h.col(m));
    if (!interactions.empty()) {
      const auto [a, b] = car_scale_conditional(interactions, structure, prior.tau_gamma_shape, prior.tau_gamma_rate);
      state.tau_gamma = rng.gamma(a, b);
    }

    std::vector<Eigen::VectorXd> residuals;
    for (std::size_t t = 0; t < C.size(); ++t)
      for (Eigen::Index h = 0; h < H; ++h)
        residuals.push_back(log_lambda[t].col(h) -
                            regression_mean(state.psi, C[t], state.effects(static_cast<Eigen::Index>(t), h)));
    state.tau = update_tau(residuals, structure, prior.tau_shape, prior.tau_rate, rng);

    if (it >= burn_in) out.draws.push_back(state);
  }
  return out;
}

}  // namespace nlmfm
