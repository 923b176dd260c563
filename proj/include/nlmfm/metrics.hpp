#pragma once
#ifndef NLMFM_METRICS_HPP
#define NLMFM_METRICS_HPP

#include "nlmfm/grid_io.hpp"
#include "nlmfm/postprocess.hpp"
#include "nlmfm/sampler.hpp"
#include "nlmfm/simgen.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace nlmfm {

/// WAIC on the log predictive density scale: lppd - p_WAIC, where
/// lppd = sum_i log mean_s exp(l_si) and p_WAIC = sum_i var_s(l_si).
struct WaicParts {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
};
WaicParts waic_parts(const Eigen::MatrixXd& loglik);
double waic(const Eigen::MatrixXd& loglik);

/// Grid KL divergence KL(p_true || p_est). Both inputs are renormalised on the
/// grid; points where p_true < 1e-300 are skipped. Returns +inf when p_est
/// vanishes where p_true does not.
double kl_divergence(const Grid& p_true, const Grid& p_est);

/// Coverage (percent of quantities whose 95% interval holds the truth), mean
/// bias and MAE of posterior means.
struct CoverageSummary {
  double coverage_percent = 0.0;
  double bias = 0.0;
  double mae = 0.0;
  std::size_t quantities = 0;
};
CoverageSummary coverage_bias_mae(std::span<const double> truth, const std::vector<std::vector<double>>& draws);

// --- simulation-study scoring ------------------------------------------------

/// Posterior mean predictive density of every area of one period (n x g).
Eigen::MatrixXd predictive_densities(const ChainDraws& draws, Eigen::Index period = 0);

/// Mean over areas of KL(true area density || posterior mean predictive density).
double mean_area_kl(const ChainDraws& draws, const SimTruth& truth);

/// Fitted factor matched to each true component by the assignment on
/// 1 - cosine between posterior mean residuals and true residuals (the true
/// residual is the component density minus the mean true area density).
/// Needs at least as many fitted factors as components.
std::vector<int> match_components(const ChainDraws& relabeled, const SimTruth& truth);

/// Recovery of contrasts against a baseline component b:
///   main: zeta_{h,m} - zeta_{b,m} for every h != b and covariate m;
///   area: eta_{j,h,m} - eta_{j,b,m} with eta = zeta + gamma.
struct EffectRecovery {
  std::vector<int> factor_of_component;
  int baseline = 0;
  std::vector<double> main_truth;          // (h != b, m) in row-major order
  std::vector<SummaryRow> main_summary;
  CoverageSummary main;
  CoverageSummary area;
};
EffectRecovery effect_recovery(const ChainDraws& relabeled, const SimTruth& truth, int baseline_component);

/// Component whose true zeta row is all zero, else 0.
int default_baseline_component(const SimTruth& truth);

}  // namespace nlmfm

#endif  // NLMFM_METRICS_HPP
