#pragma once
#ifndef NLMFM_DATASET_HPP
#define NLMFM_DATASET_HPP

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace nlmfm {

/// Observations and area covariates of one period.
struct PeriodData {
  std::string label;
  std::vector<Eigen::VectorXd> y;  // one vector per area
  Eigen::MatrixXd C;               // g x p
};

/// Areal data: one or two periods sharing the areas, covariate count and
/// adjacency. Row j of C, W and every loading matrix is area_ids[j].
struct ArealDataset {
  std::vector<std::string> area_ids;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd W;
  std::vector<PeriodData> periods;

  Eigen::Index areas() const { return W.rows(); }
  Eigen::Index covariates() const { return periods.empty() ? 0 : periods.front().C.cols(); }
  Eigen::Index period_count() const { return static_cast<Eigen::Index>(periods.size()); }
  Eigen::Index observation_count() const;
  /// Pooled mean and variance of every observation.
  std::pair<double, double> pooled_moments() const;
  std::pair<double, double> observation_range() const;

  void validate() const;
};

/// Directory layout: observations.csv (area_id, period, y, PINCP, SEX, RAC1P,
/// SCHL; code columns may be empty), covariates.csv (area_id, period, c1..cp),
/// adjacency.txt (edge list over the sorted area ids).
void write_dataset(const std::filesystem::path& dir, const ArealDataset& data);
ArealDataset read_dataset(const std::filesystem::path& dir);

}  // namespace nlmfm

#endif  // NLMFM_DATASET_HPP
