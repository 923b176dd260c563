#include "doctest.h"
#include "support.hpp"

#include "nlmfm/model.hpp"
#include "nlmfm/sampler.hpp"

#include <map>

using namespace nlmfm;
using test_support::random_state;
using test_support::toy_dataset;

namespace {

// State over `data` with every observation allocated to (factor 0, atom 0).
ChainState state_for(const ArealDataset& data, Rng& rng, Eigen::Index H, Eigen::Index K) {
  ChainState s = random_state(rng, data.areas(), H, K, data.period_count(), data.covariates());
  s.regression.tau = 1.0;
  s.allocation.resize(data.periods.size());
  for (std::size_t t = 0; t < data.periods.size(); ++t)
    for (const auto& y : data.periods[t].y)
      s.allocation[t].push_back({Eigen::VectorXi::Zero(y.size()), Eigen::VectorXi::Zero(y.size())});
  s.aux = update_aux(s, data, rng);
  return s;
}

ChainConfig small_config() {
  ChainConfig c;
  c.iterations = 40;
  c.burn_in = 20;
  c.atoms = 6;
  c.grid.points = 128;
  return c;
}

}  // namespace

TEST_CASE("update_allocations") {
  Rng rng(1);
  SUBCASE("H = K = 1") {
    const auto data = toy_dataset(4, 7, 1, 1, 2);
    const ChainState s = state_for(data, rng, 1, 1);
    const auto a = update_allocations(s, data, rng);
    for (const auto& area : a[0]) {
      CHECK((area.factor.array() == 0).all());
      CHECK((area.atom.array() == 0).all());
    }
  }
  SUBCASE("dominant atom") {
    auto data = toy_dataset(2, 5, 1, 1, 2);
    for (auto& y : data.periods[0].y) y.setConstant(100.0);
    ChainState s = state_for(data, rng, 2, 2);
    s.atoms.mu << -100.0, 100.0;
    s.atoms.sigma2 << 1.0, 1.0;
    const auto a = update_allocations(s, data, rng);
    for (const auto& area : a[0]) CHECK((area.atom.array() == 1).all());
  }
  SUBCASE("frequencies match the exact categorical") {
    auto data = toy_dataset(2, 1, 1, 1, 3);
    data.periods[0].y[0](0) = 0.4;
    ChainState s = state_for(data, rng, 2, 3);
    Eigen::MatrixXd exact(2, 3);
    for (int h = 0; h < 2; ++h)
      for (int k = 0; k < 3; ++k)
        exact(h, k) = s.loadings[0](0, h) * s.scores(h, k) * s.atoms.jumps(k) *
                      gaussian_pdf(0.4, s.atoms.mu(k), s.atoms.sigma2(k));
    exact /= exact.sum();
    Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(2, 3);
    const int n = 100000;
    for (int r = 0; r < n; ++r) {
      const auto a = update_allocations(s, data, rng);
      freq(a[0][0].factor(0), a[0][0].atom(0)) += 1.0 / n;
    }
    CHECK((freq - exact).cwiseAbs().maxCoeff() < 0.01);
  }
  SUBCASE("numeric support error") {
    auto data = toy_dataset(2, 1, 1, 1, 3);
    data.periods[0].y[0](0) = 1e200;
    ChainState s = state_for(data, rng, 1, 2);
    CHECK_THROWS_WITH(update_allocations(s, data, rng), doctest::Contains("observation outside numeric support"));
  }
}

TEST_CASE("atom updates") {
  BaseMeasure base;
  base.kappa0 = 0.5;
  base.a0 = 2.0;
  base.b0 = 1.5;
  const double mu0 = 0.2;
  const std::vector<double> y{1.1, -0.3, 2.4, 0.9, 1.7};

  // oracle: fold the points in one at a time
  double mu = mu0, kappa = base.kappa0, a = base.a0, b = base.b0;
  for (double v : y) {
    b += 0.5 * kappa * (v - mu) * (v - mu) / (kappa + 1.0);
    mu = (kappa * mu + v) / (kappa + 1.0);
    kappa += 1.0;
    a += 0.5;
  }
  double sum = 0.0, sumsq = 0.0;
  for (double v : y) {
    sum += v;
    sumsq += v * v;
  }
  const NigPosterior post = nig_posterior(base, mu0, 5, sum, sumsq);
  CHECK(post.mu == doctest::Approx(mu).epsilon(1e-13));
  CHECK(post.kappa == doctest::Approx(kappa));
  CHECK(post.a == doctest::Approx(a));
  CHECK(post.b == doctest::Approx(b).epsilon(1e-13));

  const NigPosterior empty = nig_posterior(base, mu0, 0, 0.0, 0.0);
  CHECK(empty.mu == mu0);
  CHECK(empty.kappa == base.kappa0);
  CHECK(empty.a == base.a0);
  CHECK(empty.b == base.b0);

  BaseMeasure pinned = base;
  pinned.kappa0 = std::numeric_limits<double>::infinity();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) CHECK(draw_nig(nig_posterior(pinned, mu0, 5, sum, sumsq), rng).mu == mu0);

  // atoms without data are prior draws: their sample moments match the base measure
  const auto data = toy_dataset(2, 3, 1, 1, 1);
  ChainState s = state_for(data, rng, 1, 2);  // atom 1 receives no data
  std::vector<double> mus, s2s;
  for (int i = 0; i < 20000; ++i) {
    const Atoms next = update_atoms(s, data, base, mu0, rng);
    mus.push_back(next.mu(1));
    s2s.push_back(1.0 / next.sigma2(1));
  }
  const double prec_mean = std::accumulate(s2s.begin(), s2s.end(), 0.0) / s2s.size();
  CHECK(prec_mean == doctest::Approx(base.a0 / base.b0).epsilon(0.03));
  const double mu_mean = std::accumulate(mus.begin(), mus.end(), 0.0) / mus.size();
  CHECK(std::abs(mu_mean - mu0) < 0.1);
}

TEST_CASE("update_aux") {
  Rng rng(5);
  auto data = toy_dataset(2, 1, 1, 1, 1);
  ChainState s = state_for(data, rng, 1, 1);
  s.scores.setOnes();
  s.atoms.jumps.setOnes();
  s.loadings[0].setOnes();
  const int n = 100000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) m1 += update_aux(s, data, rng)[0](0) / n;
  s.loadings[0].setConstant(2.0);
  for (int i = 0; i < n; ++i) m2 += update_aux(s, data, rng)[0](0) / n;
  CHECK(m1 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(m2 == doctest::Approx(0.5).epsilon(0.02));

  data = toy_dataset(2, 3, 1, 1, 1);
  s = state_for(data, rng, 1, 1);
  const double T = area_total_mass(s)[0](0);
  std::vector<double> u;
  for (int i = 0; i < 5000; ++i) u.push_back(update_aux(s, data, rng)[0](0));
  CHECK(test_support::ks_one_sample_p(u, [&](double x) { return test_support::gamma_cdf_integer_shape(x, 3, T); }) >
        0.01);
}

TEST_CASE("jump and score conditionals") {
  Rng rng(2);
  // one area, one factor, two atoms: allocation puts 3 points on atom 0
  ChainState s;
  s.atoms = Atoms(2);
  s.atoms.jumps << 0.7, 1.3;
  s.scores.resize(1, 2);
  s.scores << 0.5, 2.0;
  s.loadings = {Eigen::MatrixXd::Constant(1, 1, 1.5)};
  s.aux = {Eigen::VectorXd::Constant(1, 0.8)};
  s.allocation = {{{Eigen::VectorXi::Zero(3), Eigen::VectorXi::Zero(3)}}};
  const double alpha = 2.0;
  const auto [shape, rate] = jump_conditional(s, alpha);
  CHECK(shape(0) == doctest::Approx(1.0 + 3.0));
  CHECK(shape(1) == doctest::Approx(1.0));
  CHECK(rate(0) == doctest::Approx(1.0 + 0.8 * 1.5 * 0.5));
  CHECK(rate(1) == doctest::Approx(1.0 + 0.8 * 1.5 * 2.0));

  const auto [a, b] = score_conditional(s, 2.0, 3.0);
  CHECK(a(0, 0) == doctest::Approx(2.0 + 3.0));
  CHECK(a(0, 1) == doctest::Approx(2.0));
  CHECK(b(0, 0) == doctest::Approx(3.0 + 0.7 * 0.8 * 1.5));
  CHECK(b(0, 1) == doctest::Approx(3.0 + 1.3 * 0.8 * 1.5));

  // no data and u -> 0 recovers the priors
  ChainState prior = s;
  prior.aux[0].setZero();
  prior.allocation = {{{Eigen::VectorXi(0), Eigen::VectorXi(0)}}};
  const auto [ps, pr] = jump_conditional(prior, alpha);
  CHECK((ps.array() == 1.0).all());
  CHECK((pr.array() == 1.0).all());
  const auto [sa, sb] = score_conditional(prior, 2.0, 3.0);
  CHECK((sa.array() == 2.0).all());
  CHECK((sb.array() == 3.0).all());

  // more data on an atom stochastically increases its jump and score
  double j0 = 0.0, j1 = 0.0, m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::VectorXd J = update_jumps(s, alpha, rng);
    const Eigen::MatrixXd M = update_scores(s, 1.0, 1.0, rng);
    j0 += J(0);
    j1 += J(1);
    m0 += M(0, 0);
    m1 += M(0, 1);
  }
  CHECK(j0 > j1);
  CHECK(m0 > m1);
}

TEST_CASE("loading MH") {
  SUBCASE("target equals the direct density ratio") {
    const double n = 4.0, um = 2.5, mean = 0.3, prec = 1.7;
    auto direct = [&](double x) {
      const double lambda = std::exp(x);
      return std::pow(lambda, n) * std::exp(-um * lambda) * std::exp(-0.5 * prec * (x - mean) * (x - mean));
    };
    for (double x : {-1.0, 0.2, 0.9})
      for (double y : {-0.5, 0.4, 1.3})
        CHECK(std::exp(loading_log_target(y, n, um, mean, prec) - loading_log_target(x, n, um, mean, prec)) ==
              doctest::Approx(direct(y) / direct(x)).epsilon(1e-12));
  }

  const auto data = toy_dataset(2, 3, 1, 1, 8);
  ChainConfig cfg = small_config();
  const SamplerContext ctx(data, cfg);

  SUBCASE("zero step leaves the state unchanged") {
    Rng rng(4);
    ChainState s = state_for(data, rng, 2, 3);
    const Eigen::MatrixXd before = s.loadings[0];
    LoadingTuner tuner(1, 2, 0.0);
    update_loadings(s, ctx, tuner, rng);
    CHECK(s.loadings[0] == before);
    CHECK(tuner.acceptance_rate() == 1.0);
  }

  SUBCASE("stationary marginal matches the numerically normalised target") {
    Rng rng(6);
    ChainState s = state_for(data, rng, 1, 2);
    s.regression.tau = 2.0;
    s.regression.psi = 0.1;
    s.regression.zeta[0].setConstant(0.5);
    s.regression.gamma[0][0].setZero();
    s.aux[0] << 0.9, 1.6;
    const double M = factor_mass(s.scores, s.atoms.jumps)(0);
    const Eigen::VectorXd mu = regression_mean(s.regression.psi, data.periods[0].C, s.regression.effects(0, 0));
    const double counts = 3.0;  // every observation on factor 0
    auto log_joint = [&](double x0, double x1) {
      const Eigen::Vector2d e(x0 - mu(0), x1 - mu(1));
      return counts * (x0 + x1) - s.aux[0](0) * M * std::exp(x0) - s.aux[0](1) * M * std::exp(x1) -
             0.5 * s.regression.tau * e.dot(ctx.structure * e);
    };
    const int G = 600;
    const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(G, -8.0, 8.0);
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(G);
    double top = -1e300;
    for (int a = 0; a < G; ++a)
      for (int b = 0; b < G; ++b) top = std::max(top, log_joint(xs(a), xs(b)));
    for (int a = 0; a < G; ++a)
      for (int b = 0; b < G; ++b) marginal(a) += std::exp(log_joint(xs(a), xs(b)) - top);
    // trapezoid cumulative integral, interpolated linearly between nodes
    Eigen::VectorXd cdf(G);
    cdf(0) = 0.0;
    for (int a = 1; a < G; ++a) cdf(a) = cdf(a - 1) + 0.5 * (marginal(a) + marginal(a - 1));
    cdf /= cdf(G - 1);
    auto cdf_at = [&](double x) {
      const double pos = std::clamp((x + 8.0) / 16.0 * (G - 1), 0.0, double(G - 1));
      const int i = std::min(int(pos), G - 2);
      const double w = pos - i;
      return (1 - w) * cdf(i) + w * cdf(i + 1);
    };

    LoadingTuner tuner(1, 2, 1.0);
    std::vector<double> draws;
    for (int it = 0; it < 200000; ++it) {
      update_loadings(s, ctx, tuner, rng);
      if (it >= 1000 && it % 40 == 0) draws.push_back(std::log(s.loadings[0](0, 0)));
    }
    CHECK(test_support::ks_one_sample_p(draws, cdf_at) > 0.01);
  }
}

TEST_CASE("adaptation") {
  CHECK(adaptation_probability(1.0, 0.001, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  double prev = 1.0;
  for (long i = 0; i < 10000; i += 100) {
    const double p = adaptation_probability(1.0, 5e-4, i);
    CHECK(p <= prev);
    prev = p;
  }

  const auto data = toy_dataset(6, 10, 1, 1, 3);
  ChainConfig cfg = small_config();
  cfg.adapt_b0 = 0.0;
  cfg.adapt_b1 = 0.0;  // the coin always succeeds
  const SamplerContext ctx(data, cfg);
  Rng rng(5);

  SUBCASE("identical factors: one is removed") {
    ChainState s = state_for(data, rng, 2, cfg.atoms);
    s.scores.row(1) = s.scores.row(0);
    CHECK(adaptation_step(s, ctx, 0, rng) == AdaptationOutcome::removed);
    CHECK(s.factors() == 1);
    s.validate();
    for (Eigen::Index j = 0; j < data.areas(); ++j)
      CHECK(factor_weights<double>(j, s.loadings[0], s.scores, s.atoms.jumps).sum() == doctest::Approx(1.0));
  }
  SUBCASE("well separated factors: one is added") {
    ChainState s = state_for(data, rng, 2, cfg.atoms);
    s.atoms.mu.setLinSpaced(-2.0, 2.0);
    s.scores.setConstant(1e-6);
    s.scores(0, 0) = 1.0;
    s.scores(1, cfg.atoms - 1) = 1.0;
    CHECK(adaptation_step(s, ctx, 0, rng) == AdaptationOutcome::added);
    CHECK(s.factors() == 3);
    s.validate();
    CHECK(s.regression.zeta[0].rows() == 3);
    CHECK(s.regression.gamma[0].size() == 3);
  }
  SUBCASE("no adaptation after burn-in") {
    ChainState s = state_for(data, rng, 2, cfg.atoms);
    CHECK(adaptation_step(s, ctx, cfg.burn_in, rng) == AdaptationOutcome::none);
  }
  SUBCASE("removal at H = 1 is an error") {
    ChainState s = state_for(data, rng, 1, cfg.atoms);
    CHECK_THROWS_AS(remove_factor(s, 0), std::logic_error);
  }
  SUBCASE("angles") {
    Eigen::MatrixXd R(3, 2);
    R << 1, 0, 0, 1, 0, 0;
    CHECK(residual_angles(R)(0, 1) == doctest::Approx(M_PI / 2));
  }
}

TEST_CASE("run_chain") {
  const auto data = toy_dataset(4, 12, 1, 2, 4);
  ChainConfig cfg = small_config();

  SUBCASE("one stored draw") {
    cfg.iterations = 21;
    const auto d = run_chain(data, cfg);
    CHECK(d.draws.size() == 1);
    CHECK(d.loglik.rows() == 1);
    CHECK(d.loglik.cols() == data.observation_count());
  }
  SUBCASE("determinism and fixed H after burn-in") {
    cfg.iterations = 120;
    cfg.burn_in = 60;
    cfg.thinning = 3;
    cfg.adapt_b0 = 0.0;
    cfg.adapt_b1 = 0.0;
    const auto a = run_chain(data, cfg);
    const auto b = run_chain(data, cfg);
    CHECK(a.draws.size() == 20);
    CHECK(a.h_trace == b.h_trace);
    CHECK(a.loglik == b.loglik);
    CHECK(a.draws.back().scores == b.draws.back().scores);
    for (long i = cfg.burn_in; i < cfg.iterations; ++i) CHECK(a.h_trace[i] == a.h_trace[cfg.burn_in - 1]);
    for (const auto& d : a.draws) {
      CHECK(d.loadings.size() == 2);
      for (const auto& lambda : d.loadings)
        for (Eigen::Index j = 0; j < lambda.rows(); ++j)
          CHECK(factor_weights<double>(j, lambda, d.scores, d.atoms.jumps).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(a.added + a.removed > 0);
  }
  SUBCASE("invalid configuration") {
    cfg.burn_in = cfg.iterations;
    CHECK_THROWS_AS(run_chain(data, cfg), std::invalid_argument);
  }
}

TEST_CASE("prior draws and simulated observations") {
  const auto data = toy_dataset(4, 5, 2, 2, 4);
  ChainConfig cfg = small_config();
  const SamplerContext ctx(data, cfg);
  Rng rng(12);
  const ChainState s = draw_prior_state(ctx, 3, rng);
  CHECK(s.factors() == 3);
  CHECK(s.loadings.size() == 2);
  auto copy = data;
  simulate_observations(s, copy, rng);
  CHECK(copy.periods[1].y[3].size() == 5);
  CHECK(copy.periods[1].y[3] != data.periods[1].y[3]);
}
