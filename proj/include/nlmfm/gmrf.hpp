#pragma once
#ifndef NLMFM_GMRF_HPP
#define NLMFM_GMRF_HPP

// Conditional autoregressive precision, GMRF draws, and the conjugate
// Gaussian regression layer for log-loadings:
//
//   log lambda_h = psi + C zeta_h + sum_m C_{.,m} o gamma_{h,m} + eps_h,
//   eps_h ~ N(0, (tau (F - rho W))^{-1}).

#include "nlmfm/random.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nlmfm {

/// Checks W is a symmetric 0/1 matrix with zero diagonal and no isolated areas.
void validate_adjacency(const Eigen::MatrixXd& W);

/// Parses "i j" edge lines (0-based, '#' comments allowed) into a symmetric
/// adjacency of size g. Throws on indices outside [0, g).
Eigen::MatrixXd parse_edge_list(const std::string& text, Eigen::Index g);
Eigen::MatrixXd load_edge_list(const std::filesystem::path& path, Eigen::Index g);
std::string format_edge_list(const Eigen::MatrixXd& W);

/// Rook adjacency of g areas laid out row-major on a near-square lattice.
Eigen::MatrixXd lattice_adjacency(Eigen::Index g);

/// Q = tau (F - rho W) together with its Cholesky factor.
struct CarPrecision {
  Eigen::MatrixXd adjacency;
  Eigen::VectorXd degree;
  double tau = 1.0;
  double rho = 0.9;
  Eigen::MatrixXd Q;
  Eigen::LLT<Eigen::MatrixXd> llt;

  Eigen::Index size() const { return Q.rows(); }
  /// F - rho W, i.e. Q / tau.
  Eigen::MatrixXd structure() const { return Q / tau; }
};

CarPrecision build_precision(const Eigen::MatrixXd& W, double tau, double rho);

/// One draw from N(0, Q^{-1}).
Eigen::VectorXd sample_gmrf(const CarPrecision& precision, Rng& rng);

/// Full conditional of the coefficients of a linear Gaussian model
///   z ~ N(X beta, Q_lik^{-1}),  beta ~ N(m0, P0^{-1}).
/// Prior precision diagonals equal to +inf pin the coefficient to its prior
/// mean; the remaining coefficients are conditioned on the pinned values.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;  // over the free coefficients only
  std::vector<Eigen::Index> free;  // indices of the free coefficients
};

GaussianPosterior linear_gaussian_posterior(const Eigen::VectorXd& z, const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& q_lik, const Eigen::VectorXd& prior_mean,
                                            const Eigen::MatrixXd& prior_precision);

Eigen::VectorXd draw_linear_gaussian(const GaussianPosterior& posterior, Rng& rng);

struct RegressionPrior {
  double psi_mean = 0.0;
  double psi_var = 100.0;
  double zeta_mean = 0.0;
  double zeta_var = 100.0;
  double tau_shape = 1.0;
  double tau_rate = 1.0;
  double tau_gamma_shape = 1.0;
  double tau_gamma_rate = 1.0;
};

/// Main effects zeta_h (length p) and spatial interactions gamma_h (g x p,
/// column m is gamma_{h,m}) of one factor in one period.
struct FactorEffects {
  Eigen::VectorXd zeta;
  Eigen::MatrixXd gamma;
};

/// Regression-layer state. zeta[t] is H x p; gamma[t][h] is g x p.
struct RegressionState {
  double psi = 0.0;
  std::vector<Eigen::MatrixXd> zeta;
  std::vector<std::vector<Eigen::MatrixXd>> gamma;
  double tau = 1.0;
  double rho = 0.9;
  double tau_gamma = 1.0;

  Eigen::Index periods() const { return static_cast<Eigen::Index>(zeta.size()); }
  Eigen::Index factors() const { return zeta.empty() ? 0 : zeta.front().rows(); }
  FactorEffects effects(Eigen::Index t, Eigen::Index h) const;
  void set_effects(Eigen::Index t, Eigen::Index h, const FactorEffects& e);
};

/// [C | diag(C_{.,1}) | ... | diag(C_{.,p})], the design of (zeta_h, gamma_h).
Eigen::MatrixXd effect_design(const Eigen::MatrixXd& C);

/// psi + C zeta + sum_m C_{.,m} o gamma_{.,m}
Eigen::VectorXd regression_mean(double psi, const Eigen::MatrixXd& C, const FactorEffects& effects);

/// Draws (zeta_h, gamma_h) from their joint Gaussian full conditional given
/// log lambda_h, psi, tau, tau_gamma. `car` carries tau (F - rho W).
FactorEffects log_lambda_regression_update(const Eigen::VectorXd& log_lambda_h, double psi,
                                           const Eigen::MatrixXd& C, const CarPrecision& car,
                                           double tau_gamma, const RegressionPrior& prior, Rng& rng);

/// Full-conditional posterior used by the update above (exposed for oracles).
GaussianPosterior effect_posterior(const Eigen::VectorXd& log_lambda_h, double psi, const Eigen::MatrixXd& C,
                                   const CarPrecision& car, double tau_gamma, const RegressionPrior& prior);

/// Draws the shared baseline psi given every factor's offset-free residual
/// log lambda - (C zeta + interactions), over all periods.
double update_psi(std::span<const Eigen::VectorXd> offsets_removed, const CarPrecision& car,
                  const RegressionPrior& prior, Rng& rng);

/// Shape and rate of the scale conditional Gamma(a + n g / 2, b + sum_i v_i' S v_i / 2),
/// where S = F - rho W is the unscaled structure.
std::pair<double, double> car_scale_conditional(std::span<const Eigen::VectorXd> vectors,
                                                const Eigen::MatrixXd& structure, double shape, double rate);

/// Draws tau given every residual eps_h = log lambda_h - mean_h.
double update_tau(std::span<const Eigen::VectorXd> residuals, const Eigen::MatrixXd& structure, double shape,
                  double rate, Rng& rng);

}  // namespace nlmfm

#endif  // NLMFM_GMRF_HPP
