#include "nlmfm/ingest.hpp"

#include "nlmfm/csv.hpp"
#include "nlmfm/gmrf.hpp"
#include "nlmfm/grid_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace nlmfm {

void PumsRecord::validate() const {
  if (area_id.empty()) throw std::invalid_argument("record without area_id");
  if (SEX != 1 && SEX != 2) throw std::invalid_argument("SEX must be 1 or 2 (area " + area_id + ")");
  if (RAC1P < 1) throw std::invalid_argument("RAC1P must be at least 1 (area " + area_id + ")");
  if (SCHL < 1 || SCHL > 24) throw std::invalid_argument("SCHL must lie in 1..24 (area " + area_id + ")");
  if (!std::isfinite(PINCP)) throw std::invalid_argument("PINCP must be finite (area " + area_id + ")");
}

std::vector<PumsRecord> read_pums_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto ca = table.column("area_id"), ci = table.column("PINCP"), cs = table.column("SEX"),
             cr = table.column("RAC1P"), ce = table.column("SCHL");
  std::vector<PumsRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = path.string() + ":" + std::to_string(r + 2);
    PumsRecord rec;
    rec.area_id = row[ca];
    rec.PINCP = csv::to_double(row[ci], ctx);
    rec.SEX = static_cast<int>(csv::to_long(row[cs], ctx));
    rec.RAC1P = static_cast<int>(csv::to_long(row[cr], ctx));
    rec.SCHL = static_cast<int>(csv::to_long(row[ce], ctx));
    try {
      rec.validate();
    } catch (const std::exception& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::uint64_t record_key(const PumsRecord& r, std::uint64_t seed) {
  // FNV-1a over the canonical text of the record, then a splitmix64 finish
  // with the seed mixed in.
  const std::string text = r.area_id + "|" + format_double(r.PINCP) + "|" + std::to_string(r.SEX) + "|" +
                           std::to_string(r.RAC1P) + "|" + std::to_string(r.SCHL);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h + seed * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

AreaCovariates area_covariates(const std::vector<PumsRecord>& records, const std::string& area_id) {
  if (records.empty()) throw std::invalid_argument("area " + area_id + " has no records");
  double female = 0.0, male = 0.0, total = 0.0, white = 0.0, degree = 0.0;
  long nf = 0, nm = 0;
  for (const auto& r : records) {
    total += r.PINCP;
    if (r.SEX == 2) {
      female += r.PINCP;
      ++nf;
    } else {
      male += r.PINCP;
      ++nm;
    }
    if (r.RAC1P == 1) white += 1.0;
    if (r.SCHL >= 21) degree += 1.0;
  }
  if (nf == 0 || nm == 0)
    throw std::runtime_error("area " + area_id + " has no " + (nf == 0 ? "female" : "male") +
                             " records; gender covariate undefined");
  const double n = static_cast<double>(records.size());
  AreaCovariates c;
  c.gender = (female / static_cast<double>(nf) - male / static_cast<double>(nm)) / (total / n);
  c.white = white / n;
  c.education = degree / n;
  return c;
}

ArealDataset ingest(const std::vector<std::pair<std::string, std::vector<PumsRecord>>>& periods,
                    const std::string& adjacency, const IngestOptions& options, IngestReport* report) {
  if (periods.empty()) throw std::invalid_argument("ingest needs at least one period");
  if (options.subsample && *options.subsample < 1) throw std::invalid_argument("subsample size must be positive");

  std::set<std::string> ids;
  for (const auto& [label, records] : periods)
    for (const auto& r : records) ids.insert(r.area_id);
  ArealDataset data;
  data.area_ids.assign(ids.begin(), ids.end());  // std::set iterates in lexicographic order
  data.covariate_names = {"gender", "white", "education"};
  const auto g = static_cast<Eigen::Index>(data.area_ids.size());
  if (g < 2) throw std::invalid_argument("ingest needs at least two areas");
  try {
    data.W = parse_edge_list(adjacency, g);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("adjacency: ") + e.what() + " (" + std::to_string(g) + " areas)");
  }
  try {
    validate_adjacency(data.W);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("adjacency: ") + e.what());
  }

  for (const auto& [label, records] : periods) {
    std::map<std::string, std::vector<PumsRecord>> by_area;
    for (const auto& r : records) {
      r.validate();
      if (r.PINCP <= 0.0) {
        if (report) ++report->dropped_nonpositive[label][r.area_id];
        continue;
      }
      by_area[r.area_id].push_back(r);
    }
    PeriodData period;
    period.label = label;
    period.C.resize(g, 3);
    for (Eigen::Index j = 0; j < g; ++j) {
      const auto& id = data.area_ids[static_cast<std::size_t>(j)];
      auto it = by_area.find(id);
      if (it == by_area.end() || it->second.empty())
        throw std::runtime_error("area " + id + " has no positive-income records in period " + label);
      auto& recs = it->second;
      const AreaCovariates c = area_covariates(recs, id);
      period.C.row(j) << c.gender, c.white, c.education;

      if (options.subsample) {
        const auto want = static_cast<std::size_t>(*options.subsample);
        if (recs.size() < want && !options.allow_small_areas)
          throw std::runtime_error("area " + id + " has " + std::to_string(recs.size()) + " records in period " +
                                   label + ", fewer than the subsample size " + std::to_string(want) +
                                   " (use --allow-small-areas)");
        std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
        for (std::size_t i = 0; i < recs.size(); ++i) keyed.emplace_back(record_key(recs[i], options.seed), i);
        // Ties only occur for identical records, which are interchangeable.
        std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first < b.first;
          return recs[a.second].PINCP < recs[b.second].PINCP;
        });
        std::vector<PumsRecord> take;
        for (std::size_t i = 0; i < std::min(want, keyed.size()); ++i) take.push_back(recs[keyed[i].second]);
        recs = std::move(take);
      }
      // Canonical observation order so shuffled inputs give identical data.
      std::vector<double> y;
      for (const auto& r : recs) y.push_back(std::log(r.PINCP));
      std::sort(y.begin(), y.end());
      period.y.push_back(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
      if (report) report->kept[label][id] = static_cast<long>(y.size());
    }
    data.periods.push_back(std::move(period));
  }
  data.validate();
  return data;
}

}  // namespace nlmfm
