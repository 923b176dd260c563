#pragma once
#ifndef NLMFM_MODEL_HPP
#define NLMFM_MODEL_HPP

// Deterministic density and weight computations for the normalised latent
// measure factor model. Everything here is a pure function of its inputs and
// templated on the scalar type; the sampler instantiates it with double.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlmfm {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Gaussian kernel parameters of one mixture atom.
template <typename Scalar>
struct Atom {
  Scalar mu{0};
  Scalar sigma2{1};
};

/// Truncated gamma-process atoms: kernel parameters plus their jumps J_k.
/// Stored column-wise so the kernel parameters vectorise.
template <typename Scalar>
struct AtomSet {
  VectorX<Scalar> mu;
  VectorX<Scalar> sigma2;
  VectorX<Scalar> jumps;

  AtomSet() = default;
  explicit AtomSet(Eigen::Index k)
      : mu(VectorX<Scalar>::Zero(k)),
        sigma2(VectorX<Scalar>::Ones(k)),
        jumps(VectorX<Scalar>::Ones(k)) {}

  Eigen::Index size() const { return jumps.size(); }
  Atom<Scalar> atom(Eigen::Index k) const { return {mu(k), sigma2(k)}; }
  void set_atom(Eigen::Index k, const Atom<Scalar>& a) {
    mu(k) = a.mu;
    sigma2(k) = a.sigma2;
  }

  void validate() const {
    if (jumps.size() < 1) throw std::invalid_argument("atom set must hold at least one atom");
    if (mu.size() != jumps.size() || sigma2.size() != jumps.size())
      throw std::invalid_argument("atom set: mu, sigma2 and jumps lengths differ");
    if ((sigma2.array() <= Scalar(0)).any())
      throw std::domain_error("atom set: kernel variance must be positive");
    if ((jumps.array() <= Scalar(0)).any())
      throw std::domain_error("atom set: jumps must be strictly positive");
  }
};

/// A function tabulated on a strictly increasing grid.
template <typename Scalar>
struct DensityGrid {
  VectorX<Scalar> x;
  VectorX<Scalar> values;

  Eigen::Index size() const { return x.size(); }

  void validate() const {
    if (x.size() < 2) throw std::invalid_argument("density grid needs at least two points");
    if (values.size() != x.size())
      throw std::invalid_argument("density grid: x and values lengths differ");
    for (Eigen::Index i = 1; i < x.size(); ++i)
      if (!(x(i) > x(i - 1))) throw std::invalid_argument("density grid: x must be strictly increasing");
  }
};

/// n equispaced points on [lo, hi].
template <typename Scalar>
VectorX<Scalar> equispaced_grid(Scalar lo, Scalar hi, Eigen::Index n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("grid needs n >= 2 and hi > lo");
  return VectorX<Scalar>::LinSpaced(n, lo, hi);
}

/// Trapezoid rule on the grid.
template <typename Scalar>
Scalar grid_integral(const VectorX<Scalar>& x, const VectorX<Scalar>& values) {
  Scalar total(0);
  for (Eigen::Index i = 1; i < x.size(); ++i)
    total += Scalar(0.5) * (values(i) + values(i - 1)) * (x(i) - x(i - 1));
  return total;
}

template <typename Scalar>
Scalar grid_integral(const DensityGrid<Scalar>& d) {
  return grid_integral(d.x, d.values);
}

/// Rescales d so it integrates to one on its grid.
template <typename Scalar>
DensityGrid<Scalar> normalized(DensityGrid<Scalar> d) {
  const Scalar area = grid_integral(d);
  if (!(area > Scalar(0))) throw std::domain_error("cannot normalise a density with non-positive mass");
  d.values /= area;
  return d;
}

template <typename Scalar>
Scalar gaussian_log_pdf(Scalar x, Scalar mu, Scalar sigma2) {
  using std::log;
  const Scalar r = x - mu;
  return Scalar(-0.5) * (log(Scalar(2) * std::numbers::pi_v<Scalar> * sigma2) + r * r / sigma2);
}

template <typename Scalar>
Scalar gaussian_pdf(Scalar x, Scalar mu, Scalar sigma2) {
  using std::exp;
  return exp(gaussian_log_pdf(x, mu, sigma2));
}

namespace detail {

template <typename Scalar>
void check_shapes(Eigen::Index j, const MatrixX<Scalar>& lambda, const MatrixX<Scalar>& m,
                  const VectorX<Scalar>& jumps) {
  if (lambda.cols() != m.rows())
    throw std::invalid_argument("dimension mismatch: loadings have " + std::to_string(lambda.cols()) +
                                " factors, scores have " + std::to_string(m.rows()));
  if (m.cols() != jumps.size())
    throw std::invalid_argument("dimension mismatch: scores have " + std::to_string(m.cols()) +
                                " atoms, jumps have " + std::to_string(jumps.size()));
  if (j < 0 || j >= lambda.rows())
    throw std::out_of_range("area index " + std::to_string(j) + " out of range");
}

// Tabulates every atom's kernel on the grid: n x K.
template <typename Scalar>
MatrixX<Scalar> kernel_table(const VectorX<Scalar>& x, const AtomSet<Scalar>& atoms) {
  MatrixX<Scalar> table(x.size(), atoms.size());
  for (Eigen::Index k = 0; k < atoms.size(); ++k)
    for (Eigen::Index i = 0; i < x.size(); ++i) table(i, k) = gaussian_pdf(x(i), atoms.mu(k), atoms.sigma2(k));
  return table;
}

}  // namespace detail

/// Per-factor atom mass M_h = sum_k m_{h,k} J_k.
template <typename Scalar>
VectorX<Scalar> factor_mass(const MatrixX<Scalar>& m, const VectorX<Scalar>& jumps) {
  if (m.cols() != jumps.size()) throw std::invalid_argument("dimension mismatch between scores and jumps");
  return m * jumps;
}

/// T_{j,h} = lambda_{j,h} sum_k m_{h,k} J_k for one area.
template <typename Scalar>
VectorX<Scalar> group_weight_mass(Eigen::Index j, const MatrixX<Scalar>& lambda, const MatrixX<Scalar>& m,
                                  const VectorX<Scalar>& jumps) {
  detail::check_shapes(j, lambda, m, jumps);
  return lambda.row(j).transpose().cwiseProduct(m * jumps);
}

/// Factor weights s_{j,.} of area j: a point on the H-simplex.
template <typename Scalar>
VectorX<Scalar> factor_weights(Eigen::Index j, const MatrixX<Scalar>& lambda, const MatrixX<Scalar>& m,
                               const VectorX<Scalar>& jumps) {
  VectorX<Scalar> mass = group_weight_mass(j, lambda, m, jumps);
  const Scalar total = mass.sum();
  if (!(total > Scalar(0))) throw std::logic_error("factor weights: total mass is zero");
  return mass / total;
}

/// All areas' weights at once, g x H.
template <typename Scalar>
MatrixX<Scalar> factor_weight_matrix(const MatrixX<Scalar>& lambda, const MatrixX<Scalar>& m,
                                     const VectorX<Scalar>& jumps) {
  MatrixX<Scalar> s = lambda * factor_mass(m, jumps).asDiagonal();
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    const Scalar total = s.row(j).sum();
    if (!(total > Scalar(0))) throw std::logic_error("factor weights: total mass is zero");
    s.row(j) /= total;
  }
  return s;
}

/// Latent factor density p*_h tabulated on x.
template <typename Scalar>
DensityGrid<Scalar> factor_density(Eigen::Index h, const VectorX<Scalar>& x, const MatrixX<Scalar>& m,
                                   const AtomSet<Scalar>& atoms) {
  if (h < 0 || h >= m.rows()) throw std::out_of_range("factor index " + std::to_string(h) + " out of range");
  if (m.cols() != atoms.size()) throw std::invalid_argument("dimension mismatch between scores and atoms");
  const VectorX<Scalar> w = m.row(h).transpose().cwiseProduct(atoms.jumps);
  const Scalar total = w.sum();
  if (!(total > Scalar(0))) throw std::logic_error("factor density: zero atom mass");
  return {x, detail::kernel_table(x, atoms) * (w / total)};
}

/// All factor densities as columns of an n x H matrix.
template <typename Scalar>
MatrixX<Scalar> factor_density_matrix(const VectorX<Scalar>& x, const MatrixX<Scalar>& m,
                                      const AtomSet<Scalar>& atoms) {
  if (m.cols() != atoms.size()) throw std::invalid_argument("dimension mismatch between scores and atoms");
  MatrixX<Scalar> w = m * atoms.jumps.asDiagonal();  // H x K
  for (Eigen::Index h = 0; h < w.rows(); ++h) w.row(h) /= w.row(h).sum();
  return detail::kernel_table(x, atoms) * w.transpose();
}

/// Area density p_j in its single-ratio form over all (factor, atom) pairs.
template <typename Scalar>
DensityGrid<Scalar> group_density(Eigen::Index j, const VectorX<Scalar>& x, const MatrixX<Scalar>& lambda,
                                  const MatrixX<Scalar>& m, const AtomSet<Scalar>& atoms) {
  detail::check_shapes(j, lambda, m, atoms.jumps);
  // sum_l lambda_{j,l} m_{l,k} J_k, per atom
  const VectorX<Scalar> atom_weight = (lambda.row(j) * m).transpose().cwiseProduct(atoms.jumps);
  const Scalar total = atom_weight.sum();
  if (!(total > Scalar(0))) throw std::logic_error("group density: zero mass");
  return {x, detail::kernel_table(x, atoms) * (atom_weight / total)};
}

/// Unweighted pointwise average of area densities sharing one grid.
template <typename Scalar>
DensityGrid<Scalar> mean_density(std::span<const DensityGrid<Scalar>> densities) {
  if (densities.empty()) throw std::invalid_argument("mean density of an empty area set");
  DensityGrid<Scalar> out{densities.front().x, VectorX<Scalar>::Zero(densities.front().size())};
  for (const auto& d : densities) {
    if (d.x.size() != out.x.size() || d.x != out.x)
      throw std::invalid_argument("mean density: inputs are on different grids");
    out.values += d.values;
  }
  out.values /= Scalar(densities.size());
  return out;
}

/// Mixture state needed to evaluate densities: shared atoms and scores, plus
/// one loading matrix per period.
template <typename Scalar>
struct MixtureView {
  const AtomSet<Scalar>& atoms;
  const MatrixX<Scalar>& scores;
  std::span<const MatrixX<Scalar>> loadings;
};

/// Residual factor densities r_h = p*_h - pbar as columns of an n x H matrix.
///
/// When `normalize` is set each p*_h is first rescaled to unit trapezoid mass
/// on the grid, so the columns integrate to zero up to rounding even when the
/// grid truncates the kernels. pbar averages p_j over every area of every
/// period, built from the same (normalised) factor densities.
template <typename Scalar>
MatrixX<Scalar> residual_matrix(const VectorX<Scalar>& x, const MixtureView<Scalar>& state, bool normalize = true) {
  MatrixX<Scalar> pstar = factor_density_matrix(x, state.scores, state.atoms);
  if (normalize) {
    for (Eigen::Index h = 0; h < pstar.cols(); ++h) {
      const Scalar area = grid_integral<Scalar>(x, pstar.col(h));
      if (!(area > Scalar(0))) throw std::domain_error("factor density has no mass on the grid");
      pstar.col(h) /= area;
    }
  }
  if (state.loadings.empty()) throw std::invalid_argument("residual densities need at least one period of loadings");
  VectorX<Scalar> mean_weight = VectorX<Scalar>::Zero(pstar.cols());
  Eigen::Index areas = 0;
  for (const auto& lambda : state.loadings) {
    const MatrixX<Scalar> s = factor_weight_matrix(lambda, state.scores, state.atoms.jumps);
    mean_weight += s.colwise().sum().transpose();
    areas += s.rows();
  }
  if (areas == 0) throw std::invalid_argument("mean density of an empty area set");
  mean_weight /= Scalar(areas);
  const VectorX<Scalar> pbar = pstar * mean_weight;
  return pstar.colwise() - pbar;
}

template <typename Scalar>
DensityGrid<Scalar> residual_density(Eigen::Index h, const VectorX<Scalar>& x, const MixtureView<Scalar>& state,
                                     bool normalize = true) {
  if (h < 0 || h >= state.scores.rows())
    throw std::out_of_range("factor index " + std::to_string(h) + " out of range");
  return {x, residual_matrix(x, state, normalize).col(h)};
}

}  // namespace nlmfm

#endif  // NLMFM_MODEL_HPP
