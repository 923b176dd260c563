#pragma once
#ifndef NLMFM_RANDOM_HPP
#define NLMFM_RANDOM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace nlmfm {

/// Seeded random source used by every sampler component. Draws are a pure
/// function of the seed and the call sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Uniform on (0, 1), never exactly zero.
  double open_uniform() {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    return u;
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// log of a Gamma(shape, 1) draw; stays finite for tiny shapes where the
  /// draw itself would underflow.
  double log_gamma1(double shape) {
    if (!(shape > 0.0)) throw std::domain_error("gamma shape must be positive");
    if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(engine_));
    const double boosted = std::gamma_distribution<double>(shape + 1.0, 1.0)(engine_);
    return std::log(boosted) + std::log(open_uniform()) / shape;
  }

  /// Gamma with shape/rate parameterisation, floored at the smallest normal
  /// double so positivity invariants hold.
  double gamma(double shape, double rate) {
    if (!(rate > 0.0)) throw std::domain_error("gamma rate must be positive");
    const double v = std::exp(log_gamma1(shape) - std::log(rate));
    return std::max(v, std::numeric_limits<double>::min());
  }

  double inverse_gamma(double shape, double scale) { return scale / gamma(shape, 1.0); }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  /// Index drawn with probability proportional to non-negative weights;
  /// returns -1 when every weight is zero.
  template <typename Derived>
  Eigen::Index categorical(const Eigen::MatrixBase<Derived>& weights, double total) {
    if (!(total > 0.0)) return -1;
    double target = uniform() * total;
    const Eigen::Index n = weights.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= weights(i);
      if (target < 0.0) return i;
    }
    for (Eigen::Index i = n - 1; i >= 0; --i)
      if (weights(i) > 0.0) return i;
    return -1;
  }

  template <typename Derived>
  Eigen::Index categorical(const Eigen::MatrixBase<Derived>& weights) {
    return categorical(weights, weights.sum());
  }

  Eigen::VectorXd standard_normal(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

  /// Independent child stream, for work that must not perturb this one.
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nlmfm

#endif  // NLMFM_RANDOM_HPP
