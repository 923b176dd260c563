#include "nlmfm/gmrf.hpp"

#include "nlmfm/csv.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nlmfm {

void validate_adjacency(const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols()) throw std::invalid_argument("adjacency must be square");
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (W(i, i) != 0.0) throw std::invalid_argument("adjacency must have a zero diagonal");
    double degree = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      const double w = W(i, j);
      if (w != 0.0 && w != 1.0) throw std::invalid_argument("adjacency entries must be 0 or 1");
      if (w != W(j, i)) throw std::invalid_argument("adjacency must be symmetric");
      degree += w;
    }
    if (degree == 0.0)
      throw std::invalid_argument("area " + std::to_string(i) + " has no neighbours; isolated areas are not supported");
  }
}

Eigen::MatrixXd parse_edge_list(const std::string& text, Eigen::Index g) {
  if (g < 1) throw std::invalid_argument("edge list needs at least one area");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(g, g);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    long i = 0, j = 0;
    if (!(fields >> i)) continue;
    std::string rest;
    if (!(fields >> j) || (fields >> rest))
      throw std::runtime_error("edge list line " + std::to_string(line_no) + ": expected two indices");
    if (i < 0 || j < 0 || i >= g || j >= g)
      throw std::runtime_error("edge list line " + std::to_string(line_no) + ": unknown area index");
    if (i == j) throw std::runtime_error("edge list line " + std::to_string(line_no) + ": self loop");
    W(i, j) = 1.0;
    W(j, i) = 1.0;
  }
  return W;
}

Eigen::MatrixXd load_edge_list(const std::filesystem::path& path, Eigen::Index g) {
  return parse_edge_list(csv::read_text(path), g);
}

std::string format_edge_list(const Eigen::MatrixXd& W) {
  std::string out;
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = i + 1; j < W.cols(); ++j)
      if (W(i, j) != 0.0) out += std::to_string(i) + " " + std::to_string(j) + "\n";
  return out;
}

Eigen::MatrixXd lattice_adjacency(Eigen::Index g) {
  if (g < 2) throw std::invalid_argument("lattice adjacency needs at least two areas");
  const auto cols = static_cast<Eigen::Index>(std::ceil(std::sqrt(static_cast<double>(g))));
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(g, g);
  for (Eigen::Index a = 0; a < g; ++a) {
    const Eigen::Index c = a % cols;
    if (c + 1 < cols && a + 1 < g) W(a, a + 1) = W(a + 1, a) = 1.0;
    if (a + cols < g) W(a, a + cols) = W(a + cols, a) = 1.0;
  }
  return W;
}

CarPrecision build_precision(const Eigen::MatrixXd& W, double tau, double rho) {
  validate_adjacency(W);
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  CarPrecision car;
  car.adjacency = W;
  car.degree = W.rowwise().sum();
  car.tau = tau;
  car.rho = rho;
  car.Q = -tau * rho * W;
  car.Q.diagonal() = tau * car.degree;
  car.llt.compute(car.Q);
  if (car.llt.info() != Eigen::Success) throw std::runtime_error("graph yields singular precision");
  return car;
}

Eigen::VectorXd sample_gmrf(const CarPrecision& precision, Rng& rng) {
  // Q = L L'  =>  x = L^{-T} z has covariance Q^{-1}.
  Eigen::VectorXd z = rng.standard_normal(precision.size());
  return precision.llt.matrixU().solve(z);
}

GaussianPosterior linear_gaussian_posterior(const Eigen::VectorXd& z, const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& q_lik, const Eigen::VectorXd& prior_mean,
                                            const Eigen::MatrixXd& prior_precision) {
  const Eigen::Index d = X.cols();
  if (X.rows() != z.size() || q_lik.rows() != z.size() || q_lik.cols() != z.size())
    throw std::invalid_argument("linear Gaussian posterior: likelihood dimensions disagree");
  if (prior_mean.size() != d || prior_precision.rows() != d || prior_precision.cols() != d)
    throw std::invalid_argument("linear Gaussian posterior: prior dimensions disagree");

  GaussianPosterior post;
  post.mean = prior_mean;
  std::vector<Eigen::Index> pinned;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::isinf(prior_precision(i, i)))
      pinned.push_back(i);
    else
      post.free.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(post.free.size());
  if (nf == 0) {
    post.precision.resize(0, 0);
    return post;
  }

  Eigen::VectorXd offset = z;
  for (Eigen::Index i : pinned) offset -= X.col(i) * prior_mean(i);

  Eigen::MatrixXd Xf(X.rows(), nf);
  Eigen::MatrixXd P0f(nf, nf);
  Eigen::VectorXd m0f(nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    Xf.col(a) = X.col(post.free[a]);
    m0f(a) = prior_mean(post.free[a]);
    for (Eigen::Index b = 0; b < nf; ++b) P0f(a, b) = prior_precision(post.free[a], post.free[b]);
  }

  const Eigen::MatrixXd QX = q_lik * Xf;
  post.precision = Xf.transpose() * QX + P0f;
  const Eigen::VectorXd rhs = QX.transpose() * offset + P0f * m0f;
  Eigen::LLT<Eigen::MatrixXd> llt(post.precision);
  if (llt.info() != Eigen::Success) throw std::runtime_error("singular posterior precision");
  const Eigen::VectorXd free_mean = llt.solve(rhs);
  for (Eigen::Index a = 0; a < nf; ++a) post.mean(post.free[a]) = free_mean(a);
  return post;
}

Eigen::VectorXd draw_linear_gaussian(const GaussianPosterior& posterior, Rng& rng) {
  Eigen::VectorXd draw = posterior.mean;
  const auto nf = static_cast<Eigen::Index>(posterior.free.size());
  if (nf == 0) return draw;
  Eigen::LLT<Eigen::MatrixXd> llt(posterior.precision);
  if (llt.info() != Eigen::Success) throw std::runtime_error("singular posterior precision");
  const Eigen::VectorXd noise = llt.matrixU().solve(rng.standard_normal(nf));
  for (Eigen::Index a = 0; a < nf; ++a) draw(posterior.free[a]) += noise(a);
  return draw;
}

FactorEffects RegressionState::effects(Eigen::Index t, Eigen::Index h) const {
  return {zeta[t].row(h).transpose(), gamma[t][h]};
}

void RegressionState::set_effects(Eigen::Index t, Eigen::Index h, const FactorEffects& e) {
  zeta[t].row(h) = e.zeta.transpose();
  gamma[t][h] = e.gamma;
}

Eigen::MatrixXd effect_design(const Eigen::MatrixXd& C) {
  const Eigen::Index g = C.rows(), p = C.cols();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(g, p + p * g);
  X.leftCols(p) = C;
  for (Eigen::Index m = 0; m < p; ++m) X.block(0, p + m * g, g, g).diagonal() = C.col(m);
  return X;
}

Eigen::VectorXd regression_mean(double psi, const Eigen::MatrixXd& C, const FactorEffects& effects) {
  return (C * effects.zeta + C.cwiseProduct(effects.gamma).rowwise().sum()).array() + psi;
}

GaussianPosterior effect_posterior(const Eigen::VectorXd& log_lambda_h, double psi, const Eigen::MatrixXd& C,
                                   const CarPrecision& car, double tau_gamma, const RegressionPrior& prior) {
  const Eigen::Index g = C.rows(), p = C.cols();
  if (log_lambda_h.size() != g || car.size() != g)
    throw std::invalid_argument("regression update: area counts disagree");
  const Eigen::Index d = p + p * g;
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(d);
  m0.head(p).setConstant(prior.zeta_mean);
  Eigen::MatrixXd P0 = Eigen::MatrixXd::Zero(d, d);
  const double zeta_precision =
      prior.zeta_var == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / prior.zeta_var;
  P0.topLeftCorner(p, p).diagonal().setConstant(zeta_precision);
  const Eigen::MatrixXd gamma_precision = tau_gamma * car.structure();
  for (Eigen::Index m = 0; m < p; ++m) P0.block(p + m * g, p + m * g, g, g) = gamma_precision;
  const Eigen::VectorXd z = log_lambda_h.array() - psi;
  return linear_gaussian_posterior(z, effect_design(C), car.Q, m0, P0);
}

FactorEffects log_lambda_regression_update(const Eigen::VectorXd& log_lambda_h, double psi,
                                           const Eigen::MatrixXd& C, const CarPrecision& car,
                                           double tau_gamma, const RegressionPrior& prior, Rng& rng) {
  const Eigen::Index g = C.rows(), p = C.cols();
  const Eigen::VectorXd beta = draw_linear_gaussian(effect_posterior(log_lambda_h, psi, C, car, tau_gamma, prior), rng);
  FactorEffects out;
  out.zeta = beta.head(p);
  out.gamma.resize(g, p);
  for (Eigen::Index m = 0; m < p; ++m) out.gamma.col(m) = beta.segment(p + m * g, g);
  return out;
}

double update_psi(std::span<const Eigen::VectorXd> offsets_removed, const CarPrecision& car,
                  const RegressionPrior& prior, Rng& rng) {
  if (prior.psi_var == 0.0) return prior.psi_mean;
  // 1' Q is the row-sum vector of Q.
  const Eigen::VectorXd q_ones = car.Q.rowwise().sum();
  double precision = 1.0 / prior.psi_var;
  double linear = prior.psi_mean / prior.psi_var;
  for (const auto& z : offsets_removed) {
    precision += q_ones.sum();
    linear += q_ones.dot(z);
  }
  return linear / precision + rng.normal() / std::sqrt(precision);
}

std::pair<double, double> car_scale_conditional(std::span<const Eigen::VectorXd> vectors,
                                                const Eigen::MatrixXd& structure, double shape, double rate) {
  double quad = 0.0;
  double count = 0.0;
  for (const auto& v : vectors) {
    quad += v.dot(structure * v);
    count += static_cast<double>(v.size());
  }
  return {shape + 0.5 * count, rate + 0.5 * quad};
}

double update_tau(std::span<const Eigen::VectorXd> residuals, const Eigen::MatrixXd& structure, double shape,
                  double rate, Rng& rng) {
  const auto [a, b] = car_scale_conditional(residuals, structure, shape, rate);
  return rng.gamma(a, b);
}

}  // namespace nlmfm
