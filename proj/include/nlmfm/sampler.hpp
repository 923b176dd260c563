#pragma once
#ifndef NLMFM_SAMPLER_HPP
#define NLMFM_SAMPLER_HPP

// Adaptive Gibbs sampler. The normalisation constant of every area density is
// handled by a per-area auxiliary u_j ~ Gamma(n_j, T_j), under which jumps and
// scores are conditionally gamma and loadings get a one-dimensional
// Metropolis-Hastings update on the log scale.
//
// One iteration runs: adaptation (burn-in only) -> allocations -> atoms ->
// auxiliaries -> jumps -> scores -> loadings -> regression layer -> tau.

#include "nlmfm/dataset.hpp"
#include "nlmfm/gmrf.hpp"
#include "nlmfm/model.hpp"
#include "nlmfm/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nlmfm {

using Atoms = AtomSet<double>;

/// Normal-inverse-gamma base measure: mu | s2 ~ N(mu0, s2 / kappa0), s2 ~ IG(a0, b0).
/// kappa0 = +inf pins every atom location at mu0. When mu0 is unset the
/// pooled data mean is used.
struct BaseMeasure {
  std::optional<double> mu0;
  double kappa0 = 0.1;
  double a0 = 2.0;
  double b0 = 1.0;
};

/// Evaluation grid: `points` equispaced values over [lo, hi]; unset bounds
/// default to the data range widened by `padding`.
struct GridSpec {
  Eigen::Index points = 512;
  std::optional<double> lo;
  std::optional<double> hi;
  double padding = 1.0;
};

struct ChainConfig {
  long iterations = 6000;
  long burn_in = 2000;
  long thinning = 1;
  int initial_factors = 2;
  int max_factors = 20;  // births are skipped at this many factors
  int atoms = 50;
  double alpha = 1.0;  // gamma-process total mass; J_k ~ Gamma(alpha / K, 1)
  double beta0 = 0.1;  // redundancy threshold angle, radians
  double adapt_b0 = 1.0;
  double adapt_b1 = 5e-4;
  bool adaptive = true;
  std::uint64_t seed = 1;

  BaseMeasure base;
  double score_shape = 1.0;  // m_{h,k} ~ Gamma(score_shape, score_rate)
  double score_rate = 1.0;
  RegressionPrior regression;
  double rho = 0.9;

  double mh_initial_step = 0.5;
  double mh_target_acceptance = 0.44;
  long mh_batch = 50;

  GridSpec grid;
  bool store_loglik = true;
  // Exact moves along directions the likelihood ignores (global level,
  // common effect shifts, per-factor lambda/m scale); off gives the plain
  // one-site update cycle.
  bool invariance_moves = true;

  void validate() const;
};

/// Allocation of every observation to a (factor, atom) pair, per period and area.
struct AreaAllocation {
  Eigen::VectorXi factor;
  Eigen::VectorXi atom;
};
using Allocation = std::vector<std::vector<AreaAllocation>>;

/// Per-period auxiliary scales u_j.
using AuxScale = std::vector<Eigen::VectorXd>;

struct ChainState {
  Atoms atoms;
  Eigen::MatrixXd scores;                 // H x K
  std::vector<Eigen::MatrixXd> loadings;  // per period, g x H
  RegressionState regression;
  Allocation allocation;
  AuxScale aux;

  Eigen::Index factors() const { return scores.rows(); }
  MixtureView<double> view() const { return {atoms, scores, loadings}; }
  /// Throws if any positivity or dimension invariant is broken.
  void validate() const;
};

/// Fixed ingredients shared by every update: data, configuration, the
/// unscaled CAR structure F - rho W and the evaluation grid.
struct SamplerContext {
  const ArealDataset& data;
  ChainConfig config;
  Eigen::MatrixXd structure;
  Eigen::VectorXd grid;
  double mu0 = 0.0;

  SamplerContext(const ArealDataset& data, ChainConfig config);
  CarPrecision precision(double tau) const;
  Eigen::Index atoms() const { return config.atoms; }
};

/// Evaluation grid implied by the grid settings and the data range.
Eigen::VectorXd make_grid(const GridSpec& spec, const ArealDataset& data);

ChainState initialize_state(const SamplerContext& ctx, Rng& rng);

// --- individual conditional updates -----------------------------------------

Allocation update_allocations(const ChainState& state, const ArealDataset& data, Rng& rng);

/// Per-atom data counts n_{.k}.
Eigen::VectorXd atom_counts(const Allocation& allocation, Eigen::Index atoms);
/// n_{h,k} summed over periods.
Eigen::MatrixXd factor_atom_counts(const Allocation& allocation, Eigen::Index factors, Eigen::Index atoms);
/// n_{j,h} of one period.
Eigen::MatrixXd area_factor_counts(const std::vector<AreaAllocation>& period, Eigen::Index factors);

/// Normal-inverse-gamma posterior hyperparameters for a set of points.
struct NigPosterior {
  double mu = 0.0;
  double kappa = 0.0;
  double a = 0.0;
  double b = 0.0;
};
NigPosterior nig_posterior(const BaseMeasure& base, double mu0, Eigen::Index n, double sum, double sumsq);
Atom<double> draw_nig(const NigPosterior& post, Rng& rng);

/// New kernel parameters for every atom; atoms without data come from the base measure.
Atoms update_atoms(const ChainState& state, const ArealDataset& data, const BaseMeasure& base, double mu0,
                   Rng& rng);

/// T_j = sum_l lambda_{j,l} sum_k m_{l,k} J_k for each area of each period.
std::vector<Eigen::VectorXd> area_total_mass(const ChainState& state);
AuxScale update_aux(const ChainState& state, const ArealDataset& data, Rng& rng);

/// Shape/rate of every jump's gamma full conditional.
std::pair<Eigen::VectorXd, Eigen::VectorXd> jump_conditional(const ChainState& state, double alpha);
Eigen::VectorXd update_jumps(const ChainState& state, double alpha, Rng& rng);

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> score_conditional(const ChainState& state, double shape, double rate);
Eigen::MatrixXd update_scores(const ChainState& state, double shape, double rate, Rng& rng);

/// Log target of x = log lambda_{j,h} up to a constant:
///   n x - u M e^x - prec (x - cond_mean)^2 / 2.
double loading_log_target(double x, double count, double u_times_mass, double cond_mean, double cond_prec);

/// Random-walk state for the loading updates: log proposal step per period and area.
struct LoadingTuner {
  std::vector<Eigen::VectorXd> log_step;
  std::vector<Eigen::VectorXd> accepted;  // current batch
  std::vector<Eigen::VectorXd> proposed;
  double total_accepted = 0.0;
  double total_proposed = 0.0;

  LoadingTuner() = default;
  LoadingTuner(Eigen::Index periods, Eigen::Index areas, double initial_step);
  /// Moves each step toward the target acceptance and clears the batch.
  void adapt(double target, long batch_index);
  double acceptance_rate() const { return total_proposed > 0 ? total_accepted / total_proposed : 0.0; }
};

/// One MH sweep over every loading, in place.
void update_loadings(ChainState& state, const SamplerContext& ctx, LoadingTuner& tuner, Rng& rng);

/// Gibbs updates for (zeta, gamma) of every factor and period, psi and tau_gamma.
void update_regression(ChainState& state, const SamplerContext& ctx, Rng& rng);
/// Residuals eps_{t,h} = log lambda^t_h - regression mean.
std::vector<Eigen::VectorXd> loading_residuals(const ChainState& state, const ArealDataset& data);
void update_tau(ChainState& state, const SamplerContext& ctx, Rng& rng);

// --- adaptation ----------------------------------------------------------------

double adaptation_probability(double b0, double b1, long iteration);

/// Pairwise angles between residual factor densities (H x H, zero diagonal).
Eigen::MatrixXd residual_angles(const Eigen::MatrixXd& residuals);

enum class AdaptationOutcome { none, added, removed };

/// Removes factor h everywhere it appears.
void remove_factor(ChainState& state, Eigen::Index h);
/// Appends a factor whose scores, effects and loadings are drawn from their priors.
void add_factor(ChainState& state, const SamplerContext& ctx, Rng& rng);

/// The burn-in birth/death move: with probability p_adapt, remove one member
/// of the closest pair of factors whose residual densities lie within beta0
/// radians, otherwise (all pairs further apart) add a factor.
AdaptationOutcome adaptation_step(ChainState& state, const SamplerContext& ctx, long iteration, Rng& rng);

/// Moves along the likelihood-invariant directions of the parameterisation:
/// psi with every log-loading, a common shift of one covariate's zeta or
/// gamma across factors, and lambda_h * c with m_h / c. Each is a draw from
/// the conditional along its direction, so the posterior is preserved.
/// Must run while the auxiliaries are stale (they are redrawn afterwards).
void update_invariant_directions(ChainState& state, const SamplerContext& ctx, Rng& rng);

/// One full update cycle, allocations through tau, without adaptation or
/// step-size tuning.
void gibbs_sweep(ChainState& state, const SamplerContext& ctx, LoadingTuner& tuner, Rng& rng);

/// Independent draw of every parameter from its prior (allocations and
/// auxiliaries are left empty).
ChainState draw_prior_state(const SamplerContext& ctx, Eigen::Index factors, Rng& rng);

/// Overwrites every observation in `data` with a draw from p_j under `state`,
/// keeping the per-area sample sizes.
void simulate_observations(const ChainState& state, ArealDataset& data, Rng& rng);

// --- the chain -------------------------------------------------------------------

struct ChainDraw {
  Atoms atoms;
  Eigen::MatrixXd scores;
  std::vector<Eigen::MatrixXd> loadings;
  RegressionState regression;

  MixtureView<double> view() const { return {atoms, scores, loadings}; }
};

struct ChainDraws {
  ChainConfig config;
  Eigen::VectorXd grid;
  std::vector<std::string> area_ids;
  std::vector<std::string> period_labels;
  std::vector<std::string> covariate_names;
  std::vector<ChainDraw> draws;
  Eigen::MatrixXd loglik;      // draws x observations
  std::vector<int> h_trace;    // H after each iteration
  double loading_acceptance = 0.0;
  long added = 0;
  long removed = 0;

  Eigen::Index factors() const { return draws.empty() ? 0 : draws.front().scores.rows(); }
};

/// log p_j(y) for every observation, flattened period-major then area then observation.
Eigen::VectorXd observation_loglik(const ChainState& state, const ArealDataset& data);

/// Runs the full chain. Errors raised by an update are rethrown with the
/// iteration index attached.
ChainDraws run_chain(const ArealDataset& data, const ChainConfig& config);

}  // namespace nlmfm

#endif  // NLMFM_SAMPLER_HPP
