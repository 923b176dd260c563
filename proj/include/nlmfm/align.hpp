#pragma once
#ifndef NLMFM_ALIGN_HPP
#define NLMFM_ALIGN_HPP

// Cross-dataset factor alignment. Residual matrices hold one factor per
// column (n grid points x H factors). The operator O = D P maps the factors
// of a dataset S onto those of a reference dataset: P is an H_ref x H_S
// partial permutation, D a non-negative diagonal over reference slots.

#include "nlmfm/gmrf.hpp"
#include "nlmfm/random.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace nlmfm {

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);
/// arccos of the cosine similarity, clamped into [-1, 1] first.
double angular_separation(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);

/// C_{i,j} = 1 - cos(ref_i, s_j).
Eigen::MatrixXd alignment_cost(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s);

/// Minimum-cost assignment of every column to a distinct row (requires
/// cols <= rows). Returns row_of[j] for each column j.
std::vector<int> hungarian_assign(const Eigen::MatrixXd& cost);
/// Same result as a 0/1 matrix with P(row_of[j], j) = 1.
Eigen::MatrixXi hungarian_match(const Eigen::MatrixXd& cost);

struct AlignmentOperator {
  Eigen::MatrixXi P;  // H_ref x H_S
  Eigen::VectorXd d;  // length H_ref; zero on unmatched slots

  Eigen::Index reference_factors() const { return P.rows(); }
  Eigen::Index source_factors() const { return P.cols(); }
  /// Source factor matched to reference slot i, or -1.
  int source_of(Eigen::Index i) const;
  std::vector<bool> matched() const;
  /// Dense O = D P.
  Eigen::MatrixXd matrix() const;
};

/// Diagonal Procrustes over matched slots:
///   d_i = <ref_i, s_sigma(i)> / ||s_sigma(i)||^2, negatives clamped to 0.
/// `warn` receives one message per clamped coefficient.
Eigen::VectorXd diagonal_procrustes(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s, const Eigen::MatrixXi& P,
                                    const std::function<void(const std::string&)>& warn = {});

/// Hungarian matching on the cosine cost followed by diagonal Procrustes.
AlignmentOperator fit_alignment(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& s,
                                const std::function<void(const std::string&)>& warn = {});

struct AlignedFactors {
  Eigen::MatrixXd residuals;  // n x H_ref, zero columns on unmatched slots
  Eigen::MatrixXd loadings;   // g x H_ref, zero columns on unmatched slots
  std::vector<bool> matched;
  long clamped_loadings = 0;
};

/// R_rot = O R_S and Lambda_rot = Lambda_S O^{-1} on the matched block, with
/// rotated loadings floored at 1e-10 (count reported).
AlignedFactors apply_alignment(const AlignmentOperator& op, const Eigen::MatrixXd& residuals,
                               const Eigen::MatrixXd& loadings);

/// Scores follow the inverse of the loadings: m_rot = D P m, so every
/// lambda_{j,h} M_h product (hence every weight) is preserved.
Eigen::MatrixXd rotate_scores(const AlignmentOperator& op, const Eigen::MatrixXd& scores);

/// Column-wise RMSE against the reference before and after rotation.
struct RmseRow {
  double before = 0.0;
  double after = 0.0;
  double improvement_percent = 0.0;
};
std::vector<RmseRow> rmse_improvement(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& before,
                                      const Eigen::MatrixXd& after);

/// Posterior sample of regression effects given loadings fixed at their
/// (rotated) posterior means: Gibbs over (zeta, gamma, psi, tau, tau_gamma)
/// of the regression layer alone.
struct EffectDraws {
  std::vector<RegressionState> draws;
};
EffectDraws redraw_effects(const std::vector<Eigen::MatrixXd>& loading_means, const std::vector<Eigen::MatrixXd>& C,
                           const Eigen::MatrixXd& W, double rho, const RegressionPrior& prior, long draws,
                           long burn_in, Rng& rng);

}  // namespace nlmfm

#endif  // NLMFM_ALIGN_HPP
