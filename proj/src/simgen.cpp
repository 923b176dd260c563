#include "nlmfm/simgen.hpp"

#include "nlmfm/csv.hpp"
#include "nlmfm/gmrf.hpp"
#include "nlmfm/model.hpp"
#include "nlmfm/random.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace nlmfm {

void SimConfig::validate() const {
  if (areas < 2) throw std::invalid_argument("simulation needs at least two areas");
  if (per_area < 1) throw std::invalid_argument("simulation needs at least one observation per area");
  if (covariates < 1) throw std::invalid_argument("simulation needs at least one covariate");
  if (means.size() < 1) throw std::invalid_argument("simulation needs at least one component");
  if (!(sd > 0.0)) throw std::invalid_argument("component sd must be positive");
  if (!(interaction_sd >= 0.0)) throw std::invalid_argument("interaction sd must be non-negative");
  if (!(beta_a > 0.0 && beta_b > 0.0)) throw std::invalid_argument("Beta parameters must be positive");
  if (zeta.rows() != means.size() || zeta.cols() != covariates)
    throw std::invalid_argument("zeta must have one row per component and one column per covariate");
}

Eigen::MatrixXd softmax_weights(const Eigen::MatrixXd& C, const Eigen::MatrixXd& zeta,
                                const std::vector<Eigen::MatrixXd>& gamma) {
  const Eigen::Index g = C.rows(), H = zeta.rows();
  if (static_cast<Eigen::Index>(gamma.size()) != H) throw std::invalid_argument("one gamma matrix per component");
  Eigen::MatrixXd logits = C * zeta.transpose();
  for (Eigen::Index h = 0; h < H; ++h) logits.col(h) += C.cwiseProduct(gamma[h]).rowwise().sum();
  Eigen::MatrixXd w(g, H);
  for (Eigen::Index j = 0; j < g; ++j) {
    const Eigen::RowVectorXd e = (logits.row(j).array() - logits.row(j).maxCoeff()).exp().matrix();
    w.row(j) = e / e.sum();
  }
  return w;
}

Simulation generate(const SimConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Eigen::Index g = config.areas, p = config.covariates, H = config.components();

  Simulation sim;
  auto& data = sim.data;
  auto& truth = sim.truth;
  for (Eigen::Index j = 0; j < g; ++j) {
    char id[32];
    std::snprintf(id, sizeof id, "a%04ld", static_cast<long>(j));
    data.area_ids.emplace_back(id);
  }
  for (Eigen::Index m = 0; m < p; ++m) data.covariate_names.push_back("c" + std::to_string(m + 1));
  data.W = lattice_adjacency(g);

  PeriodData period;
  period.label = "1";
  period.C.resize(g, p);
  for (Eigen::Index j = 0; j < g; ++j)
    for (Eigen::Index m = 0; m < p; ++m) period.C(j, m) = rng.beta(config.beta_a, config.beta_b);

  truth.zeta = config.zeta;
  truth.means = config.means;
  truth.sd = config.sd;
  for (Eigen::Index h = 0; h < H; ++h) {
    Eigen::MatrixXd gamma(g, p);
    for (Eigen::Index j = 0; j < g; ++j)
      for (Eigen::Index m = 0; m < p; ++m) gamma(j, m) = config.interaction_sd * rng.normal();
    truth.gamma.push_back(std::move(gamma));
  }
  truth.weights = softmax_weights(period.C, truth.zeta, truth.gamma);
  truth.component_counts = Eigen::VectorXi::Zero(H);

  for (Eigen::Index j = 0; j < g; ++j) {
    Eigen::VectorXd y(config.per_area);
    const Eigen::VectorXd w = truth.weights.row(j).transpose();
    for (Eigen::Index i = 0; i < config.per_area; ++i) {
      const Eigen::Index h = rng.categorical(w, 1.0);
      ++truth.component_counts(h);
      y(i) = rng.normal(config.means(h), config.sd);
    }
    period.y.push_back(std::move(y));
  }
  data.periods.push_back(std::move(period));
  data.validate();
  return sim;
}

Grid SimTruth::component_density(Eigen::Index h, const Eigen::VectorXd& x) const {
  Grid out{x, Eigen::VectorXd(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) out.values(i) = gaussian_pdf(x(i), means(h), sd * sd);
  return out;
}

Grid SimTruth::area_density(Eigen::Index j, const Eigen::VectorXd& x) const {
  Grid out{x, Eigen::VectorXd::Zero(x.size())};
  for (Eigen::Index h = 0; h < weights.cols(); ++h) out.values += weights(j, h) * component_density(h, x).values;
  return out;
}

namespace {

std::vector<std::string> numbered(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(stem + std::to_string(i + 1));
  return out;
}

}  // namespace

void write_truth(const std::filesystem::path& dir, const SimTruth& truth, const Eigen::VectorXd& grid) {
  const Eigen::Index H = truth.weights.cols();
  csv::write_matrix(dir / "truth_weights.csv", numbered("w", H), truth.weights);
  csv::write_matrix(dir / "truth_zeta.csv", numbered("c", truth.zeta.cols()), truth.zeta);
  for (Eigen::Index h = 0; h < H; ++h)
    csv::write_matrix(dir / ("truth_gamma_h" + std::to_string(h + 1) + ".csv"), numbered("c", truth.zeta.cols()),
                      truth.gamma[h]);
  Eigen::MatrixXd comps(grid.size(), H + 1);
  comps.col(0) = grid;
  for (Eigen::Index h = 0; h < H; ++h) comps.col(h + 1) = truth.component_density(h, grid).values;
  std::vector<std::string> header{"x"};
  for (const auto& n : numbered("h", H)) header.push_back(n);
  csv::write_matrix(dir / "truth_components.csv", header, comps);
  Eigen::MatrixXd params(H, 2);
  params.col(0) = truth.means;
  params.col(1).setConstant(truth.sd);
  csv::write_matrix(dir / "truth_params.csv", {"mean", "sd"}, params);
}

SimTruth read_truth(const std::filesystem::path& dir) {
  SimTruth truth;
  truth.weights = csv::read_matrix(dir / "truth_weights.csv");
  truth.zeta = csv::read_matrix(dir / "truth_zeta.csv");
  const Eigen::Index H = truth.weights.cols();
  for (Eigen::Index h = 0; h < H; ++h)
    truth.gamma.push_back(csv::read_matrix(dir / ("truth_gamma_h" + std::to_string(h + 1) + ".csv")));
  const Eigen::MatrixXd params = csv::read_matrix(dir / "truth_params.csv");
  if (params.rows() != H || params.cols() != 2) throw std::runtime_error("truth_params.csv has the wrong shape");
  truth.means = params.col(0);
  truth.sd = params(0, 1);
  return truth;
}

}  // namespace nlmfm
