#pragma once
#ifndef NLMFM_SIMGEN_HPP
#define NLMFM_SIMGEN_HPP

// Synthetic areal data: Beta covariates, Gaussian components and softmax
// weights built from main effects plus area-level interactions.

#include "nlmfm/dataset.hpp"
#include "nlmfm/grid_io.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nlmfm {

struct SimConfig {
  Eigen::Index areas = 100;
  Eigen::Index per_area = 100;
  Eigen::Index covariates = 2;
  Eigen::VectorXd means = (Eigen::VectorXd(3) << -2.0, 0.0, 2.0).finished();
  double sd = 1.5;
  Eigen::MatrixXd zeta = (Eigen::MatrixXd(3, 2) << 1.0, -2.0, 0.0, 0.0, -2.0, 1.0).finished();  // H x p
  double interaction_sd = 1.0;
  double beta_a = 2.0;
  double beta_b = 5.0;
  std::uint64_t seed = 1;

  Eigen::Index components() const { return means.size(); }
  void validate() const;
};

struct SimTruth {
  Eigen::MatrixXd weights;             // g x H
  Eigen::MatrixXd zeta;                // H x p
  std::vector<Eigen::MatrixXd> gamma;  // per component, g x p
  Eigen::VectorXi component_counts;    // draws per component, summed over areas
  Eigen::VectorXd means;
  double sd = 0.0;

  /// Component density h on a grid.
  Grid component_density(Eigen::Index h, const Eigen::VectorXd& x) const;
  /// True density of area j on a grid.
  Grid area_density(Eigen::Index j, const Eigen::VectorXd& x) const;
};

struct Simulation {
  ArealDataset data;
  SimTruth truth;
};

/// Row-wise softmax of C zeta_h' + sum_m C_m gamma_{h,m}.
Eigen::MatrixXd softmax_weights(const Eigen::MatrixXd& C, const Eigen::MatrixXd& zeta,
                                const std::vector<Eigen::MatrixXd>& gamma);

Simulation generate(const SimConfig& config);

/// truth_weights.csv, truth_zeta.csv, truth_gamma_h{h}.csv and truth_components.csv
/// (x, then one density column per component on `grid`).
void write_truth(const std::filesystem::path& dir, const SimTruth& truth, const Eigen::VectorXd& grid);
SimTruth read_truth(const std::filesystem::path& dir);

}  // namespace nlmfm

#endif  // NLMFM_SIMGEN_HPP
