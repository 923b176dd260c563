#include "doctest.h"
#include "support.hpp"

#include "nlmfm/gmrf.hpp"

#include <limits>

using namespace nlmfm;

namespace {

Eigen::MatrixXd path_graph(Eigen::Index g) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(g, g);
  for (Eigen::Index i = 0; i + 1 < g; ++i) W(i, i + 1) = W(i + 1, i) = 1.0;
  return W;
}

Eigen::MatrixXd empirical_covariance(const CarPrecision& car, long n, Rng& rng) {
  const Eigen::Index g = car.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(g, g);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(g);
  for (long i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_gmrf(car, rng);
    acc += x * x.transpose();
    mean += x;
  }
  mean /= double(n);
  return acc / double(n) - mean * mean.transpose();
}

}  // namespace

TEST_CASE("build_precision") {
  const auto car = build_precision(path_graph(2), 1.0, 0.5);
  Eigen::MatrixXd expected(2, 2);
  expected << 1.0, -0.5, -0.5, 1.0;
  CHECK((car.Q - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((build_precision(path_graph(2), 2.0, 0.5).Q - 2.0 * expected).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd cycle = path_graph(4);
  cycle(0, 3) = cycle(3, 0) = 1.0;
  const auto c4 = build_precision(cycle, 1.0, 0.9);
  CHECK((c4.Q.transpose().array() == c4.Q.array()).all());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c4.Q);
  // eigenvalues of 2 - 0.9 * 2cos(2 pi k / 4)
  CHECK(es.eigenvalues().minCoeff() == doctest::Approx(0.2));
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(3.8));

  Eigen::MatrixXd bad = path_graph(3);
  bad(0, 1) = 0.0;
  CHECK_THROWS_AS(build_precision(bad, 1.0, 0.5), std::invalid_argument);
  Eigen::MatrixXd isolated = Eigen::MatrixXd::Zero(3, 3);
  isolated(0, 1) = isolated(1, 0) = 1.0;
  CHECK_THROWS_WITH(build_precision(isolated, 1.0, 0.5), doctest::Contains("isolated"));
  CHECK_THROWS(build_precision(path_graph(3), 1.0, 1.0));
}

TEST_CASE("edge lists") {
  const auto W = parse_edge_list("# comment\n0 1\n1 2  # trailing\n\n2 1\n", 3);
  CHECK(W == path_graph(3));
  CHECK(parse_edge_list(format_edge_list(W), 3) == W);
  CHECK_THROWS_WITH(parse_edge_list("0 5\n", 3), doctest::Contains("unknown area index"));
  CHECK_THROWS_WITH(parse_edge_list("1 1\n", 3), doctest::Contains("self loop"));
  CHECK_THROWS(parse_edge_list("0 1 2\n", 3));
}

TEST_CASE("sample_gmrf") {
  Rng rng(42);
  SUBCASE("identity precision gives standard normal marginals") {
    CarPrecision id;
    id.Q = Eigen::MatrixXd::Identity(3, 3);
    id.llt.compute(id.Q);
    const Eigen::MatrixXd S = empirical_covariance(id, 100000, rng);
    for (int i = 0; i < 3; ++i) CHECK(std::sqrt(S(i, i)) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("two-node path correlation") {
    const auto car = build_precision(path_graph(2), 1.0, 0.5);
    const Eigen::MatrixXd S = empirical_covariance(car, 100000, rng);
    CHECK(std::abs(S(0, 1) / std::sqrt(S(0, 0) * S(1, 1)) - 0.5) < 0.02);
  }
  SUBCASE("determinism") {
    const auto car = build_precision(path_graph(4), 1.0, 0.9);
    Rng a(9), b(9);
    CHECK(sample_gmrf(car, a) == sample_gmrf(car, b));
  }
}

TEST_CASE("regression update: degenerate priors") {
  Rng rng(1);
  const Eigen::Index g = 5, p = 2;
  const auto car = build_precision(lattice_adjacency(g), 2.0, 0.9);
  Eigen::MatrixXd C = Eigen::MatrixXd::Random(g, p).cwiseAbs();
  const Eigen::VectorXd z = Eigen::VectorXd::Random(g);

  RegressionPrior pinned;
  pinned.zeta_mean = 0.7;
  pinned.zeta_var = 0.0;
  // gamma pinned through an infinite-precision prior in the generic solver
  const Eigen::Index d = p + p * g;
  Eigen::VectorXd m0 = Eigen::VectorXd::Constant(d, 0.7);
  Eigen::MatrixXd P0 = Eigen::MatrixXd::Zero(d, d);
  P0.diagonal().setConstant(std::numeric_limits<double>::infinity());
  const auto post = linear_gaussian_posterior(z, effect_design(C), car.Q, m0, P0);
  CHECK(draw_linear_gaussian(post, rng) == m0);

  const FactorEffects e = log_lambda_regression_update(z, 0.0, C, car, 1.0, pinned, rng);
  CHECK(e.zeta(0) == 0.7);
  CHECK(e.zeta(1) == 0.7);

  // C = 0 carries no information about zeta
  RegressionPrior prior;
  prior.zeta_mean = 0.3;
  prior.zeta_var = 4.0;
  const auto flat = effect_posterior(z, 0.0, Eigen::MatrixXd::Zero(g, p), car, 1.0, prior);
  CHECK(flat.mean(0) == doctest::Approx(0.3));
  const Eigen::MatrixXd cov = flat.precision.inverse();
  CHECK(cov(0, 0) == doctest::Approx(4.0));
  CHECK(cov(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("regression update matches a dense-solver oracle") {
  Rng rng(17);
  const Eigen::Index g = 5, p = 2;
  const Eigen::MatrixXd W = lattice_adjacency(g);
  const double tau = 1.7, rho = 0.9, tau_gamma = 0.6, psi = 0.4;
  const auto car = build_precision(W, tau, rho);
  Eigen::MatrixXd C(g, p);
  for (Eigen::Index j = 0; j < g; ++j) C.row(j) << rng.beta(2, 5), rng.beta(2, 5);
  const Eigen::VectorXd log_lambda = rng.standard_normal(g);
  RegressionPrior prior;
  prior.zeta_mean = 0.2;
  prior.zeta_var = 3.0;

  // oracle: beta = (zeta, gamma_1, gamma_2); X = [C, diag(C1), diag(C2)]
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(g, g);
  F.diagonal() = W.rowwise().sum();
  const Eigen::MatrixXd S = F - rho * W;
  Eigen::MatrixXd X(g, p + p * g);
  X << C, Eigen::MatrixXd(C.col(0).asDiagonal()), Eigen::MatrixXd(C.col(1).asDiagonal());
  Eigen::MatrixXd P0 = Eigen::MatrixXd::Zero(p + p * g, p + p * g);
  P0.topLeftCorner(p, p) = Eigen::MatrixXd::Identity(p, p) / prior.zeta_var;
  P0.block(p, p, g, g) = tau_gamma * S;
  P0.block(p + g, p + g, g, g) = tau_gamma * S;
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(p + p * g);
  m0.head(p).setConstant(prior.zeta_mean);
  const Eigen::MatrixXd Q = tau * S;
  const Eigen::VectorXd zres = log_lambda.array() - psi;
  const Eigen::MatrixXd A = X.transpose() * Q * X + P0;
  const Eigen::VectorXd oracle = A.fullPivLu().solve(X.transpose() * Q * zres + P0 * m0);

  const auto post = effect_posterior(log_lambda, psi, C, car, tau_gamma, prior);
  CHECK((post.mean - oracle).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.precision - A).cwiseAbs().maxCoeff() < 1e-10);

  // the draw's sample mean approaches the oracle
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += log_lambda_regression_update(log_lambda, psi, C, car, tau_gamma, prior, rng).zeta;
  mean /= n;
  const Eigen::MatrixXd cov = A.inverse();
  for (int m = 0; m < p; ++m) CHECK(std::abs(mean(m) - oracle(m)) < 5.0 * std::sqrt(cov(m, m) / n));
}

TEST_CASE("update_tau conditional") {
  // g = 2, H = 1 by hand: S = [[1, -rho], [-rho, 1]], e = (1, 2)
  const double rho = 0.5;
  Eigen::MatrixXd S(2, 2);
  S << 1.0, -rho, -rho, 1.0;
  std::vector<Eigen::VectorXd> e{(Eigen::VectorXd(2) << 1.0, 2.0).finished()};
  const auto [a, b] = car_scale_conditional(e, S, 3.0, 0.5);
  CHECK(a == doctest::Approx(3.0 + 1.0));
  CHECK(b == doctest::Approx(0.5 + 0.5 * (1.0 + 4.0 - 2.0 * rho * 2.0)));

  std::vector<Eigen::VectorXd> zero{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  const auto [a0, b0] = car_scale_conditional(zero, S, 3.0, 0.5);
  CHECK(a0 == 5.0);
  CHECK(b0 == 0.5);

  Rng rng(4);
  auto mean_tau = [&](double scale) {
    std::vector<Eigen::VectorXd> r{scale * e[0]};
    double s = 0.0;
    for (int i = 0; i < 4000; ++i) s += update_tau(r, S, 3.0, 0.5, rng);
    return s / 4000.0;
  };
  CHECK(mean_tau(0.3) > mean_tau(1.0));
}

TEST_CASE("update_psi is exact with one offset") {
  Rng rng(2);
  const auto car = build_precision(lattice_adjacency(4), 1.5, 0.9);
  RegressionPrior prior;
  prior.psi_var = 2.0;
  std::vector<Eigen::VectorXd> z{Eigen::VectorXd::Constant(4, 1.0)};
  const double q = car.Q.sum();
  const double post_var = 1.0 / (q + 0.5);
  const double post_mean = post_var * q;
  double s = 0.0, s2 = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double v = update_psi(z, car, prior, rng);
    s += v;
    s2 += v * v;
  }
  CHECK(std::abs(s / n - post_mean) < 5.0 * std::sqrt(post_var / n));
  CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(post_var).epsilon(0.03));
  prior.psi_var = 0.0;
  prior.psi_mean = -0.25;
  CHECK(update_psi(z, car, prior, rng) == -0.25);
}
