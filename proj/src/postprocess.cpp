#include "nlmfm/postprocess.hpp"

#include "nlmfm/align.hpp"
#include "nlmfm/csv.hpp"
#include "nlmfm/grid_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nlmfm {

Eigen::MatrixXd draw_residuals(const ChainDraw& draw, const Eigen::VectorXd& grid) {
  return residual_matrix(grid, draw.view(), true);
}

void permute_draw(ChainDraw& draw, const std::vector<int>& order) {
  const Eigen::Index H = draw.scores.rows();
  if (static_cast<Eigen::Index>(order.size()) != H) throw std::invalid_argument("permutation has the wrong length");
  std::vector<int> seen(order.size(), 0);
  for (int o : order) {
    if (o < 0 || o >= H || seen[static_cast<std::size_t>(o)]++) throw std::invalid_argument("not a permutation");
  }
  Eigen::MatrixXd scores(H, draw.scores.cols());
  for (Eigen::Index a = 0; a < H; ++a) scores.row(a) = draw.scores.row(order[a]);
  draw.scores = std::move(scores);
  for (auto& lambda : draw.loadings) {
    Eigen::MatrixXd out(lambda.rows(), H);
    for (Eigen::Index a = 0; a < H; ++a) out.col(a) = lambda.col(order[a]);
    lambda = std::move(out);
  }
  for (auto& zeta : draw.regression.zeta) {
    Eigen::MatrixXd out(H, zeta.cols());
    for (Eigen::Index a = 0; a < H; ++a) out.row(a) = zeta.row(order[a]);
    zeta = std::move(out);
  }
  for (auto& gamma : draw.regression.gamma) {
    std::vector<Eigen::MatrixXd> out;
    for (Eigen::Index a = 0; a < H; ++a) out.push_back(gamma[static_cast<std::size_t>(order[a])]);
    gamma = std::move(out);
  }
}

std::vector<int> best_permutation(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& residuals) {
  if (reference.rows() != residuals.rows() || reference.cols() != residuals.cols())
    throw std::invalid_argument("relabeling inputs must share shape");
  const Eigen::Index H = reference.cols();
  Eigen::MatrixXd cost(H, H);
  for (Eigen::Index a = 0; a < H; ++a)
    for (Eigen::Index b = 0; b < H; ++b) cost(a, b) = (reference.col(a) - residuals.col(b)).squaredNorm();
  // hungarian_assign gives, per column b, its slot a.
  const auto slot_of = hungarian_assign(cost);
  std::vector<int> order(static_cast<std::size_t>(H));
  for (std::size_t b = 0; b < slot_of.size(); ++b) order[static_cast<std::size_t>(slot_of[b])] = static_cast<int>(b);
  return order;
}

std::vector<std::vector<int>> relabel_draws(ChainDraws& draws) {
  std::vector<std::vector<int>> applied;
  if (draws.draws.empty()) return applied;
  const Eigen::Index H = draws.draws.front().scores.rows();
  for (const auto& d : draws.draws)
    if (d.scores.rows() != H)
      throw std::invalid_argument(
          "draws have different factor counts; only post-burn-in (fixed-H) draws can be relabeled");
  Eigen::MatrixXd reference;
  long aligned = 0;
  for (auto& d : draws.draws) {
    Eigen::MatrixXd r = draw_residuals(d, draws.grid);
    std::vector<int> order(static_cast<std::size_t>(H));
    if (aligned == 0) {
      std::iota(order.begin(), order.end(), 0);
      reference = r;
    } else {
      order = best_permutation(reference, r);
      permute_draw(d, order);
      Eigen::MatrixXd permuted(r.rows(), H);
      for (Eigen::Index a = 0; a < H; ++a) permuted.col(a) = r.col(order[static_cast<std::size_t>(a)]);
      reference += (permuted - reference) / static_cast<double>(aligned + 1);
    }
    ++aligned;
    applied.push_back(std::move(order));
  }
  return applied;
}

Eigen::MatrixXd mean_residuals(const ChainDraws& draws) {
  if (draws.draws.empty()) throw std::invalid_argument("no draws");
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(draws.grid.size(), draws.factors());
  for (const auto& d : draws.draws) {
    if (d.scores.rows() != draws.factors()) throw std::invalid_argument("draws have different factor counts");
    total += draw_residuals(d, draws.grid);
  }
  return total / static_cast<double>(draws.draws.size());
}

int default_reference_factor(const Eigen::MatrixXd& residual_mean, const Eigen::VectorXd& grid) {
  if (residual_mean.rows() != grid.size() || residual_mean.cols() < 1)
    throw std::invalid_argument("residual matrix does not match the grid");
  const double median = 0.5 * (grid(0) + grid(grid.size() - 1));
  int best = 0;
  double best_mass = -std::numeric_limits<double>::infinity();
  for (Eigen::Index h = 0; h < residual_mean.cols(); ++h) {
    double mass = 0.0;
    for (Eigen::Index i = 1; i < grid.size(); ++i) {
      if (grid(i) <= median) continue;
      const double a = std::max(residual_mean(i - 1, h), 0.0), b = std::max(residual_mean(i, h), 0.0);
      mass += 0.5 * (a + b) * (grid(i) - grid(i - 1));
    }
    if (mass > best_mass) {
      best_mass = mass;
      best = static_cast<int>(h);
    }
  }
  return best;
}

ChainDraws baseline_contrast(const ChainDraws& draws, int reference) {
  if (reference < 0 || reference >= draws.factors())
    throw std::out_of_range("baseline factor " + std::to_string(reference) + " out of range");
  ChainDraws out = draws;
  for (auto& d : out.draws) {
    for (auto& zeta : d.regression.zeta) {
      const Eigen::RowVectorXd base = zeta.row(reference);
      zeta.rowwise() -= base;
    }
    for (auto& gamma : d.regression.gamma) {
      const Eigen::MatrixXd base = gamma[static_cast<std::size_t>(reference)];
      for (auto& gh : gamma) gh -= base;
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd> area_effect(const RegressionState& regression, Eigen::Index period) {
  std::vector<Eigen::MatrixXd> out;
  const auto& zeta = regression.zeta.at(static_cast<std::size_t>(period));
  const auto& gamma = regression.gamma.at(static_cast<std::size_t>(period));
  for (Eigen::Index h = 0; h < zeta.rows(); ++h)
    out.push_back(gamma[static_cast<std::size_t>(h)].rowwise() + zeta.row(h));
  return out;
}

Eigen::MatrixXd weight_change(const ChainDraw& draw, Eigen::Index from, Eigen::Index to) {
  const auto n = static_cast<Eigen::Index>(draw.loadings.size());
  if (from < 0 || to < 0 || from >= n || to >= n) throw std::out_of_range("period index out of range");
  return factor_weight_matrix(draw.loadings[to], draw.scores, draw.atoms.jumps) -
         factor_weight_matrix(draw.loadings[from], draw.scores, draw.atoms.jumps);
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SummaryRow summarize(std::span<const double> draws) {
  if (draws.size() < 2) throw std::invalid_argument("summaries need at least two draws");
  SummaryRow row;
  row.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  std::vector<double> values(draws.begin(), draws.end());
  row.lo = quantile_type7(values, 0.025);
  row.hi = quantile_type7(std::move(values), 0.975);
  row.excludes_zero = row.lo > 0.0 || row.hi < 0.0;
  return row;
}

std::string area_summary_csv(const std::vector<AreaSummary>& rows) {
  std::string out = "area_id,quantity,mean,lo,hi,excludes_zero\n";
  for (const auto& r : rows)
    out += r.area_id + "," + r.quantity + "," + format_double(r.row.mean) + "," + format_double(r.row.lo) + "," +
           format_double(r.row.hi) + "," + (r.row.excludes_zero ? "1" : "0") + "\n";
  return out;
}

std::vector<AreaSummary> read_area_summary_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto ca = t.column("area_id"), cq = t.column("quantity"), cm = t.column("mean"), cl = t.column("lo"),
             ch = t.column("hi"), cz = t.column("excludes_zero");
  std::vector<AreaSummary> out;
  for (const auto& r : t.rows) {
    AreaSummary s;
    s.area_id = r[ca];
    s.quantity = r[cq];
    s.row.mean = csv::to_double(r[cm], path.string());
    s.row.lo = csv::to_double(r[cl], path.string());
    s.row.hi = csv::to_double(r[ch], path.string());
    s.row.excludes_zero = r[cz] == "1";
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nlmfm
