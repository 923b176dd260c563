#include "doctest.h"
#include "support.hpp"

#include "nlmfm/metrics.hpp"
#include "nlmfm/simgen.hpp"

#include <limits>

using namespace nlmfm;

namespace {

Grid gaussian_grid(const Eigen::VectorXd& x, double mu, double sd) {
  Grid g{x, Eigen::VectorXd(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) g.values(i) = gaussian_pdf(x(i), mu, sd * sd);
  return g;
}

double gaussian_kl(double m1, double s1, double m2, double s2) {
  return std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
}

}  // namespace

TEST_CASE("waic") {
  const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(7, 4, -1.3);
  CHECK(waic(c) == doctest::Approx(4 * -1.3));
  CHECK(waic_parts(c).p_waic < 1e-25);

  Eigen::MatrixXd two(2, 1);
  two << std::log(0.5), std::log(0.25);
  const auto w = waic_parts(two);
  CHECK(w.lppd == doctest::Approx(std::log(0.375)).epsilon(1e-14));
  CHECK(w.p_waic == doctest::Approx(0.5 * std::log(2.0) * std::log(2.0)).epsilon(1e-14));
  CHECK(w.waic == doctest::Approx(w.lppd - w.p_waic));

  Rng rng(2);
  Eigen::MatrixXd L = Eigen::MatrixXd::NullaryExpr(30, 12, [&] { return rng.normal(-2.0, 0.5); });
  const double base = waic(L);
  Eigen::MatrixXd rows = L.colwise().reverse();
  Eigen::MatrixXd cols = L.rowwise().reverse();
  CHECK(waic(rows) == doctest::Approx(base).epsilon(1e-13));
  CHECK(waic(cols) == doctest::Approx(base).epsilon(1e-13));

  // log-sum-exp keeps very negative log-likelihoods finite
  CHECK(std::isfinite(waic(Eigen::MatrixXd::Constant(3, 2, -2000.0))));
  L(3, 4) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(waic(L), std::domain_error);
  CHECK_THROWS(waic(Eigen::MatrixXd::Zero(1, 3)));
}

TEST_CASE("kl_divergence") {
  const Eigen::VectorXd x = equispaced_grid(-14.0, 14.0, 512);
  const Grid p = gaussian_grid(x, 0.0, 1.0);
  CHECK(std::abs(kl_divergence(p, p)) < 1e-10);
  CHECK(kl_divergence(p, gaussian_grid(x, 1.0, 1.0)) == doctest::Approx(0.5).epsilon(1e-4));
  const Grid q = gaussian_grid(x, 1.0, 2.0);
  CHECK(std::abs(kl_divergence(p, q) - gaussian_kl(0, 1, 1, 2)) < 1e-4);
  CHECK(std::abs(kl_divergence(q, p) - gaussian_kl(1, 2, 0, 1)) < 1e-4);
  CHECK(std::abs(kl_divergence(p, q) - kl_divergence(q, p)) > 0.1);

  // renormalisation: scaling either input changes nothing
  Grid scaled = q;
  scaled.values *= 3.7;
  CHECK(kl_divergence(p, scaled) == doctest::Approx(kl_divergence(p, q)).epsilon(1e-12));

  Grid zero = q;
  zero.values.head(300).setZero();
  CHECK(std::isinf(kl_divergence(p, zero)));
  CHECK_THROWS(kl_divergence(p, gaussian_grid(equispaced_grid(-10.0, 10.0, 512), 0, 1)));

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Grid a = gaussian_grid(x, rng.normal(0, 1), 0.5 + rng.uniform());
    const Grid b = gaussian_grid(x, rng.normal(0, 1), 0.5 + rng.uniform());
    CHECK(kl_divergence(a, b) >= -1e-10);
  }
}

TEST_CASE("coverage_bias_mae") {
  std::vector<std::vector<double>> draws{{0.0, 1.0, 2.0, 3.0, 4.0}, {-1.0, 0.0, 1.0}};
  std::vector<double> at_mean{2.0, 0.0};
  auto c = coverage_bias_mae(at_mean, draws);
  CHECK(c.coverage_percent == 100.0);
  CHECK(c.bias == 0.0);
  CHECK(c.mae == 0.0);

  std::vector<double> outside{10.0, -10.0};
  c = coverage_bias_mae(outside, draws);
  CHECK(c.coverage_percent == 0.0);
  CHECK(c.bias == doctest::Approx(0.5 * ((2.0 - 10.0) + (0.0 + 10.0))));
  CHECK(c.mae == doctest::Approx(9.0));

  // coverage never drops as intervals widen
  std::vector<double> truth{3.95, 0.99};
  const double narrow = coverage_bias_mae(truth, draws).coverage_percent;
  std::vector<std::vector<double>> wide{{-1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0}, {-2.0, 0.0, 2.0}};
  CHECK(coverage_bias_mae(truth, wide).coverage_percent >= narrow);
  CHECK_THROWS(coverage_bias_mae(std::vector<double>{1.0}, draws));
}

TEST_CASE("simulation scoring on a perfect fit") {
  SimConfig sc;
  sc.areas = 9;
  sc.per_area = 5;
  sc.seed = 4;
  const Simulation sim = generate(sc);
  // A single draw reproducing the truth exactly: one atom per component,
  // scores picking it, loadings equal to the true weights.
  ChainDraw d;
  d.atoms = Atoms(3);
  d.atoms.mu = sim.truth.means;
  d.atoms.sigma2.setConstant(sc.sd * sc.sd);
  d.scores = Eigen::MatrixXd::Identity(3, 3);
  d.scores.array() += 1e-300;
  d.loadings = {sim.truth.weights};
  d.regression.zeta = {sim.truth.zeta};
  d.regression.gamma = {sim.truth.gamma};
  ChainDraws draws;
  draws.grid = equispaced_grid(-10.0, 10.0, 512);
  draws.area_ids = sim.data.area_ids;
  draws.period_labels = {"1"};
  draws.covariate_names = sim.data.covariate_names;
  draws.draws = {d, d};
  CHECK(mean_area_kl(draws, sim.truth) < 1e-10);
  CHECK(match_components(draws, sim.truth) == std::vector<int>{0, 1, 2});
  CHECK(default_baseline_component(sim.truth) == 1);
  const auto rec = effect_recovery(draws, sim.truth, 1);
  CHECK(rec.main_truth == std::vector<double>{1.0, -2.0, -2.0, 1.0});
  CHECK(rec.main.mae < 1e-12);
  CHECK(rec.area.mae < 1e-12);
}
