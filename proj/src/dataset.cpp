#include "nlmfm/dataset.hpp"

#include "nlmfm/csv.hpp"
#include "nlmfm/gmrf.hpp"
#include "nlmfm/grid_io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace nlmfm {

Eigen::Index ArealDataset::observation_count() const {
  Eigen::Index n = 0;
  for (const auto& period : periods)
    for (const auto& y : period.y) n += y.size();
  return n;
}

std::pair<double, double> ArealDataset::pooled_moments() const {
  double sum = 0.0, sumsq = 0.0;
  Eigen::Index n = 0;
  for (const auto& period : periods)
    for (const auto& y : period.y) {
      sum += y.sum();
      sumsq += y.squaredNorm();
      n += y.size();
    }
  if (n == 0) throw std::invalid_argument("dataset has no observations");
  const double mean = sum / static_cast<double>(n);
  return {mean, std::max(sumsq / static_cast<double>(n) - mean * mean, 0.0)};
}

std::pair<double, double> ArealDataset::observation_range() const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& period : periods)
    for (const auto& y : period.y)
      if (y.size()) {
        lo = std::min(lo, y.minCoeff());
        hi = std::max(hi, y.maxCoeff());
      }
  if (!(hi >= lo)) throw std::invalid_argument("dataset has no observations");
  return {lo, hi};
}

void ArealDataset::validate() const {
  const Eigen::Index g = areas();
  if (g < 1) throw std::invalid_argument("dataset has no areas");
  if (static_cast<Eigen::Index>(area_ids.size()) != g)
    throw std::invalid_argument("dataset: area id count does not match adjacency");
  validate_adjacency(W);
  if (periods.empty() || periods.size() > 2) throw std::invalid_argument("dataset must hold one or two periods");
  const Eigen::Index p = periods.front().C.cols();
  for (const auto& period : periods) {
    if (static_cast<Eigen::Index>(period.y.size()) != g || period.C.rows() != g)
      throw std::invalid_argument("period '" + period.label + "' does not cover every area");
    if (period.C.cols() != p) throw std::invalid_argument("periods disagree on the number of covariates");
    if (!period.C.allFinite()) throw std::invalid_argument("covariates must be finite");
    for (Eigen::Index j = 0; j < g; ++j) {
      if (period.y[j].size() < 1)
        throw std::invalid_argument("area " + area_ids[j] + " has no observations in period '" + period.label + "'");
      if (!period.y[j].allFinite()) throw std::invalid_argument("observations must be finite");
    }
  }
}

void write_dataset(const std::filesystem::path& dir, const ArealDataset& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  std::string obs = "area_id,period,y,PINCP,SEX,RAC1P,SCHL\n";
  std::string cov = "area_id,period";
  for (Eigen::Index m = 0; m < data.covariates(); ++m)
    cov += "," + (m < static_cast<Eigen::Index>(data.covariate_names.size()) ? data.covariate_names[m]
                                                                            : "c" + std::to_string(m + 1));
  cov += "\n";
  for (const auto& period : data.periods)
    for (Eigen::Index j = 0; j < data.areas(); ++j) {
      for (Eigen::Index i = 0; i < period.y[j].size(); ++i)
        obs += data.area_ids[j] + "," + period.label + "," + format_double(period.y[j](i)) + ",,,,\n";
      cov += data.area_ids[j] + "," + period.label;
      for (Eigen::Index m = 0; m < period.C.cols(); ++m) cov += "," + format_double(period.C(j, m));
      cov += "\n";
    }
  csv::write_text(dir / "observations.csv", obs);
  csv::write_text(dir / "covariates.csv", cov);
  csv::write_text(dir / "adjacency.txt", format_edge_list(data.W));
}

ArealDataset read_dataset(const std::filesystem::path& dir) {
  const auto obs = csv::read(dir / "observations.csv");
  const auto cov = csv::read(dir / "covariates.csv");
  const auto oa = obs.column("area_id"), op = obs.column("period"), oy = obs.column("y");
  const auto ca = cov.column("area_id"), cp = cov.column("period");

  std::vector<std::string> periods;
  std::map<std::string, std::size_t> area_index;
  for (const auto& row : cov.rows) {
    area_index.emplace(row[ca], 0);
    if (std::find(periods.begin(), periods.end(), row[cp]) == periods.end()) periods.push_back(row[cp]);
  }
  std::sort(periods.begin(), periods.end());

  ArealDataset data;
  for (auto& [id, index] : area_index) {
    index = data.area_ids.size();
    data.area_ids.push_back(id);
  }
  const auto g = static_cast<Eigen::Index>(data.area_ids.size());
  for (std::size_t c = 0; c < cov.header.size(); ++c)
    if (c != ca && c != cp) data.covariate_names.push_back(cov.header[c]);
  const auto p = static_cast<Eigen::Index>(data.covariate_names.size());

  std::map<std::string, std::size_t> period_index;
  for (const auto& label : periods) {
    period_index[label] = data.periods.size();
    PeriodData pd;
    pd.label = label;
    pd.C = Eigen::MatrixXd::Constant(g, p, std::numeric_limits<double>::quiet_NaN());
    pd.y.resize(g);
    data.periods.push_back(std::move(pd));
  }
  for (std::size_t r = 0; r < cov.rows.size(); ++r) {
    const auto& row = cov.rows[r];
    auto& pd = data.periods[period_index.at(row[cp])];
    const auto j = static_cast<Eigen::Index>(area_index.at(row[ca]));
    Eigen::Index m = 0;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (c != ca && c != cp) pd.C(j, m++) = csv::to_double(row[c], "covariates.csv row " + std::to_string(r + 1));
  }

  std::vector<std::vector<std::vector<double>>> values(periods.size(), std::vector<std::vector<double>>(g));
  for (std::size_t r = 0; r < obs.rows.size(); ++r) {
    const auto& row = obs.rows[r];
    auto pit = period_index.find(row[op]);
    auto ait = area_index.find(row[oa]);
    if (pit == period_index.end() || ait == area_index.end())
      throw std::runtime_error("observations.csv row " + std::to_string(r + 1) + ": area/period '" + row[oa] + "/" +
                               row[op] + "' has no covariates");
    values[pit->second][ait->second].push_back(csv::to_double(row[oy], "observations.csv row " + std::to_string(r + 1)));
  }
  for (std::size_t t = 0; t < periods.size(); ++t)
    for (Eigen::Index j = 0; j < g; ++j)
      data.periods[t].y[j] = Eigen::Map<const Eigen::VectorXd>(values[t][j].data(),
                                                               static_cast<Eigen::Index>(values[t][j].size()));

  data.W = load_edge_list(dir / "adjacency.txt", g);
  data.validate();
  return data;
}

}  // namespace nlmfm
