#include "nlmfm/metrics.hpp"

#include "nlmfm/postprocess.hpp"
#include "nlmfm/align.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nlmfm {

WaicParts waic_parts(const Eigen::MatrixXd& loglik) {
  const Eigen::Index S = loglik.rows();
  if (S < 2) throw std::invalid_argument("WAIC needs at least two draws");
  if (!loglik.allFinite()) throw std::domain_error("WAIC: non-finite log-likelihood");
  WaicParts w;
  for (Eigen::Index i = 0; i < loglik.cols(); ++i) {
    const auto col = loglik.col(i);
    const double top = col.maxCoeff();
    w.lppd += top + std::log((col.array() - top).exp().sum() / static_cast<double>(S));
    const double mean = col.mean();
    w.p_waic += (col.array() - mean).square().sum() / static_cast<double>(S - 1);
  }
  w.waic = w.lppd - w.p_waic;
  return w;
}

double waic(const Eigen::MatrixXd& loglik) { return waic_parts(loglik).waic; }

double kl_divergence(const Grid& p_true, const Grid& p_est) {
  p_true.validate();
  p_est.validate();
  if (p_true.x.size() != p_est.x.size() || p_true.x != p_est.x)
    throw std::invalid_argument("KL divergence inputs are on different grids");
  if ((p_true.values.array() < 0.0).any() || (p_est.values.array() < 0.0).any())
    throw std::domain_error("KL divergence inputs must be non-negative");
  const Grid p = normalized(p_true);
  const Grid q = normalized(p_est);
  const auto n = p.size();
  constexpr double threshold = 1e-300;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = p.values(i);
    if (pi < threshold) continue;
    if (!(q.values(i) > 0.0)) return std::numeric_limits<double>::infinity();
    // trapezoid weight of point i
    double w = 0.0;
    if (i > 0) w += 0.5 * (p.x(i) - p.x(i - 1));
    if (i + 1 < n) w += 0.5 * (p.x(i + 1) - p.x(i));
    total += w * pi * std::log(pi / q.values(i));
  }
  return total;
}

CoverageSummary coverage_bias_mae(std::span<const double> truth, const std::vector<std::vector<double>>& draws) {
  if (truth.size() != draws.size()) throw std::invalid_argument("truth and draw streams must match");
  if (truth.empty()) throw std::invalid_argument("no quantities to score");
  CoverageSummary out;
  out.quantities = truth.size();
  double covered = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const SummaryRow row = summarize(draws[i]);
    if (row.lo <= truth[i] && truth[i] <= row.hi) covered += 1.0;
    out.bias += row.mean - truth[i];
    out.mae += std::abs(row.mean - truth[i]);
  }
  const double n = static_cast<double>(truth.size());
  out.coverage_percent = 100.0 * covered / n;
  out.bias /= n;
  out.mae /= n;
  return out;
}

}  // namespace nlmfm

namespace nlmfm {

Eigen::MatrixXd predictive_densities(const ChainDraws& draws, Eigen::Index period) {
  if (draws.draws.empty()) throw std::invalid_argument("no draws");
  const auto g = static_cast<Eigen::Index>(draws.area_ids.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(draws.grid.size(), g);
  for (const auto& d : draws.draws) {
    const Eigen::MatrixXd pstar = factor_density_matrix(draws.grid, d.scores, d.atoms);  // n x H
    const Eigen::MatrixXd w = factor_weight_matrix(d.loadings.at(static_cast<std::size_t>(period)), d.scores,
                                                   d.atoms.jumps);  // g x H
    out += pstar * w.transpose();
  }
  return out / static_cast<double>(draws.draws.size());
}

double mean_area_kl(const ChainDraws& draws, const SimTruth& truth) {
  const Eigen::MatrixXd pred = predictive_densities(draws, 0);
  if (truth.weights.rows() != pred.cols()) throw std::invalid_argument("truth and draws disagree on the area count");
  double total = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    total += kl_divergence(truth.area_density(j, draws.grid), Grid{draws.grid, pred.col(j)});
  return total / static_cast<double>(pred.cols());
}

std::vector<int> match_components(const ChainDraws& relabeled, const SimTruth& truth) {
  const Eigen::MatrixXd R = mean_residuals(relabeled);
  const Eigen::Index Hc = truth.weights.cols(), g = truth.weights.rows(), n = relabeled.grid.size();
  if (R.cols() < Hc)
    throw std::runtime_error("fit has " + std::to_string(R.cols()) + " factors, fewer than the " +
                             std::to_string(Hc) + " true components");
  Eigen::VectorXd pbar = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < g; ++j) pbar += truth.area_density(j, relabeled.grid).values;
  pbar /= static_cast<double>(g);
  Eigen::MatrixXd T(n, Hc);
  for (Eigen::Index h = 0; h < Hc; ++h) T.col(h) = normalized(truth.component_density(h, relabeled.grid)).values - pbar;
  const auto row_of = hungarian_assign(alignment_cost(R, T));
  return row_of;
}

int default_baseline_component(const SimTruth& truth) {
  for (Eigen::Index h = 0; h < truth.zeta.rows(); ++h)
    if ((truth.zeta.row(h).array() == 0.0).all()) return static_cast<int>(h);
  return 0;
}

EffectRecovery effect_recovery(const ChainDraws& relabeled, const SimTruth& truth, int baseline_component) {
  const Eigen::Index Hc = truth.zeta.rows(), p = truth.zeta.cols(), g = truth.weights.rows();
  if (baseline_component < 0 || baseline_component >= Hc) throw std::out_of_range("baseline component out of range");
  EffectRecovery out;
  out.factor_of_component = match_components(relabeled, truth);
  out.baseline = baseline_component;
  const int fb = out.factor_of_component[static_cast<std::size_t>(baseline_component)];

  std::vector<double> main_truth, area_truth;
  std::vector<std::vector<double>> main_draws, area_draws;
  for (Eigen::Index h = 0; h < Hc; ++h) {
    if (h == baseline_component) continue;
    const int fh = out.factor_of_component[static_cast<std::size_t>(h)];
    for (Eigen::Index m = 0; m < p; ++m) {
      main_truth.push_back(truth.zeta(h, m) - truth.zeta(baseline_component, m));
      std::vector<double> v;
      for (const auto& d : relabeled.draws) v.push_back(d.regression.zeta[0](fh, m) - d.regression.zeta[0](fb, m));
      main_draws.push_back(std::move(v));
      for (Eigen::Index j = 0; j < g; ++j) {
        area_truth.push_back(main_truth.back() + truth.gamma[h](j, m) - truth.gamma[baseline_component](j, m));
        std::vector<double> a;
        for (const auto& d : relabeled.draws)
          a.push_back(d.regression.zeta[0](fh, m) + d.regression.gamma[0][fh](j, m) - d.regression.zeta[0](fb, m) -
                      d.regression.gamma[0][fb](j, m));
        area_draws.push_back(std::move(a));
      }
    }
  }
  out.main_truth = main_truth;
  for (const auto& v : main_draws) out.main_summary.push_back(summarize(v));
  out.main = coverage_bias_mae(main_truth, main_draws);
  out.area = coverage_bias_mae(area_truth, area_draws);
  return out;
}

}  // namespace nlmfm
