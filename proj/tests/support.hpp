#pragma once

#include "nlmfm/dataset.hpp"
#include "nlmfm/gmrf.hpp"
#include "nlmfm/random.hpp"
#include "nlmfm/sampler.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace test_support {

// Kolmogorov asymptotic tail, Q_KS(lambda).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double p = 0.0;
  for (int k = 1; k < 200; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return d;
}

// Two-sample KS p-value (asymptotic, with the Stephens correction).
inline double ks_two_sample_p(const std::vector<double>& a, const std::vector<double>& b) {
  const double ne = double(a.size()) * double(b.size()) / double(a.size() + b.size());
  const double d = ks_statistic(a, b);
  return kolmogorov_tail((std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d);
}

inline double ks_one_sample_p(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  return kolmogorov_tail((std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d);
}

// Gamma(shape n, rate b) CDF for integer n.
inline double gamma_cdf_integer_shape(double x, int n, double rate) {
  if (x <= 0.0) return 0.0;
  const double z = rate * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < n; ++k) {
    term *= z / k;
    sum += term;
  }
  return 1.0 - std::exp(-z) * sum;
}

// Exhaustive minimum over injective column->row maps.
inline double brute_force_min_cost(const Eigen::MatrixXd& cost) {
  const int m = int(cost.rows()), n = int(cost.cols());
  std::vector<int> rows(m);
  std::iota(rows.begin(), rows.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int j = 0; j < n; ++j) c += cost(rows[j], j);
    best = std::min(best, c);
  } while (std::next_permutation(rows.begin(), rows.end()));
  return best;
}

inline nlmfm::ArealDataset toy_dataset(Eigen::Index g, Eigen::Index n, Eigen::Index p, Eigen::Index periods,
                                       std::uint64_t seed) {
  nlmfm::Rng rng(seed);
  nlmfm::ArealDataset d;
  for (Eigen::Index j = 0; j < g; ++j) d.area_ids.push_back("a" + std::to_string(100 + j));
  for (Eigen::Index m = 0; m < p; ++m) d.covariate_names.push_back("c" + std::to_string(m + 1));
  d.W = nlmfm::lattice_adjacency(g);
  for (Eigen::Index t = 0; t < periods; ++t) {
    nlmfm::PeriodData pd;
    pd.label = std::to_string(2016 + 4 * t);
    pd.C.resize(g, p);
    for (Eigen::Index j = 0; j < g; ++j)
      for (Eigen::Index m = 0; m < p; ++m) pd.C(j, m) = rng.uniform();
    for (Eigen::Index j = 0; j < g; ++j) {
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.uniform() < 0.5 ? rng.normal(-1.5, 0.7) : rng.normal(1.5, 0.7);
      pd.y.push_back(y);
    }
    d.periods.push_back(pd);
  }
  return d;
}

// Random positive mixture state without allocations.
inline nlmfm::ChainState random_state(nlmfm::Rng& rng, Eigen::Index g, Eigen::Index H, Eigen::Index K,
                                      Eigen::Index periods = 1, Eigen::Index p = 1) {
  nlmfm::ChainState s;
  s.atoms = nlmfm::Atoms(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    s.atoms.mu(k) = rng.normal(0.0, 2.0);
    s.atoms.sigma2(k) = 0.2 + rng.uniform();
    s.atoms.jumps(k) = 0.05 + rng.uniform();
  }
  s.scores = Eigen::MatrixXd::NullaryExpr(H, K, [&] { return 0.05 + 2.0 * rng.uniform(); });
  for (Eigen::Index t = 0; t < periods; ++t) {
    s.loadings.push_back(Eigen::MatrixXd::NullaryExpr(g, H, [&] { return std::exp(rng.normal()); }));
    s.regression.zeta.push_back(Eigen::MatrixXd::NullaryExpr(H, p, [&] { return rng.normal(); }));
    std::vector<Eigen::MatrixXd> gamma;
    for (Eigen::Index h = 0; h < H; ++h) gamma.push_back(Eigen::MatrixXd::NullaryExpr(g, p, [&] { return rng.normal(); }));
    s.regression.gamma.push_back(gamma);
  }
  return s;
}

inline nlmfm::ChainDraw to_draw(const nlmfm::ChainState& s) {
  return {s.atoms, s.scores, s.loadings, s.regression};
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nlmfm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test_support
