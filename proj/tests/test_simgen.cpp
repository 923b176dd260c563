#include "doctest.h"
#include "support.hpp"

#include "nlmfm/simgen.hpp"

using namespace nlmfm;

TEST_CASE("softmax weights") {
  Rng rng(1);
  const Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(7, 2, [&] { return rng.beta(2, 5); });
  const std::vector<Eigen::MatrixXd> zero_gamma(3, Eigen::MatrixXd::Zero(7, 2));
  const Eigen::MatrixXd w0 = softmax_weights(C, Eigen::MatrixXd::Zero(3, 2), zero_gamma);
  CHECK((w0.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  std::vector<Eigen::MatrixXd> gamma;
  for (int h = 0; h < 3; ++h) gamma.push_back(Eigen::MatrixXd::NullaryExpr(7, 2, [&] { return 30.0 * rng.normal(); }));
  const Eigen::MatrixXd zeta = Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return 30.0 * rng.normal(); });
  const Eigen::MatrixXd w = softmax_weights(C, zeta, gamma);
  for (Eigen::Index j = 0; j < 7; ++j) {
    CHECK(std::abs(w.row(j).sum() - 1.0) < 1e-12);
    CHECK((w.row(j).array() > 0.0).all());
    // direct formula
    Eigen::Vector3d logit;
    for (int h = 0; h < 3; ++h) logit(h) = C.row(j).dot(zeta.row(h)) + C.row(j).dot(gamma[h].row(j));
    const Eigen::Vector3d e = (logit.array() - logit.maxCoeff()).exp();
    CHECK((w.row(j).transpose() - e / e.sum()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("generate") {
  SimConfig sc;
  sc.areas = 16;
  sc.per_area = 20;
  const Simulation a = generate(sc), b = generate(sc);
  CHECK(a.data.periods[0].y[5] == b.data.periods[0].y[5]);
  CHECK(a.truth.gamma[2] == b.truth.gamma[2]);
  CHECK(a.data.areas() == 16);
  CHECK(a.data.periods[0].y[0].size() == 20);
  CHECK(a.data.W == lattice_adjacency(16));
  CHECK((a.data.periods[0].C.array() > 0.0).all());
  CHECK((a.data.periods[0].C.array() < 1.0).all());
  CHECK((a.truth.weights.array() > 0.0).all());
  sc.seed = 2;
  CHECK(generate(sc).data.periods[0].y[5] != a.data.periods[0].y[5]);

  sc.zeta.setZero();
  sc.interaction_sd = 0.0;
  const Simulation flat = generate(sc);
  CHECK((flat.truth.weights.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  sc.areas = 0;
  CHECK_THROWS(generate(sc));
}

TEST_CASE("component frequencies follow the weights") {
  SimConfig sc;
  sc.areas = 4;
  sc.per_area = 250000;
  sc.seed = 3;
  const Simulation sim = generate(sc);
  const Eigen::VectorXd expected = sim.truth.weights.colwise().mean().transpose();
  const Eigen::VectorXd freq = sim.truth.component_counts.cast<double>() / double(sc.areas * sc.per_area);
  CHECK((freq - expected).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("truth files round-trip") {
  SimConfig sc;
  sc.areas = 9;
  sc.per_area = 3;
  const Simulation sim = generate(sc);
  const auto dir = test_support::scratch_dir("truth");
  const Eigen::VectorXd x = equispaced_grid(-8.0, 8.0, 64);
  write_truth(dir, sim.truth, x);
  const SimTruth back = read_truth(dir);
  CHECK(back.weights == sim.truth.weights);
  CHECK(back.zeta == sim.truth.zeta);
  CHECK(back.gamma[1] == sim.truth.gamma[1]);
  CHECK(back.means == sim.truth.means);
  CHECK(back.sd == sim.truth.sd);
  CHECK(back.area_density(4, x).values.isApprox(sim.truth.area_density(4, x).values, 1e-15));
}
