#pragma once
#ifndef NLMFM_POSTPROCESS_HPP
#define NLMFM_POSTPROCESS_HPP

// Label switching, baseline contrasts, area effects, weight changes and
// interval summaries over stored draws.

#include "nlmfm/sampler.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nlmfm {

/// Residual factor densities of one draw on the grid (n x H, normalised factors).
Eigen::MatrixXd draw_residuals(const ChainDraw& draw, const Eigen::VectorXd& grid);

/// Reorders a draw's factors: new factor a is old factor order[a].
void permute_draw(ChainDraw& draw, const std::vector<int>& order);

/// Permutation matching `residuals` to `reference` with minimal summed squared
/// column distance; order[a] is the column of `residuals` placed at slot a.
std::vector<int> best_permutation(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& residuals);

/// Relabels every draw in place against the running mean of the already
/// aligned residual densities (seeded by the first draw). Returns the
/// permutation applied to each draw.
std::vector<std::vector<int>> relabel_draws(ChainDraws& draws);

/// Posterior mean residual matrix over all draws.
Eigen::MatrixXd mean_residuals(const ChainDraws& draws);

/// Factor whose mean residual density has the largest positive mass above the
/// grid median.
int default_reference_factor(const Eigen::MatrixXd& residual_mean, const Eigen::VectorXd& grid);

/// zeta*_h = zeta_h - zeta_{h*}, gamma*_h = gamma_h - gamma_{h*} in every draw
/// and period.
ChainDraws baseline_contrast(const ChainDraws& draws, int reference);

/// eta_{h,m} = zeta_{h,m} + gamma_{h,m} for one draw and period: one g x p
/// matrix per factor.
std::vector<Eigen::MatrixXd> area_effect(const RegressionState& regression, Eigen::Index period);

/// Delta s = s^{to} - s^{from} for one draw, g x H.
Eigen::MatrixXd weight_change(const ChainDraw& draw, Eigen::Index from, Eigen::Index to);

/// Posterior mean with 2.5% / 97.5% quantiles (type-7 linear interpolation:
/// position (n - 1) q between order statistics).
struct SummaryRow {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool excludes_zero = false;
};

double quantile_type7(std::vector<double> values, double q);
SummaryRow summarize(std::span<const double> draws);

/// Per-area summary table: area_id, quantity, mean, lo, hi, excludes_zero.
struct AreaSummary {
  std::string area_id;
  std::string quantity;
  SummaryRow row;
};
std::string area_summary_csv(const std::vector<AreaSummary>& rows);
std::vector<AreaSummary> read_area_summary_csv(const std::filesystem::path& path);

}  // namespace nlmfm

#endif  // NLMFM_POSTPROCESS_HPP
