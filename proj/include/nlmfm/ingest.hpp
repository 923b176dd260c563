#pragma once
#ifndef NLMFM_INGEST_HPP
#define NLMFM_INGEST_HPP

// PUMS-format microdata to an ArealDataset: y = log PINCP and three area
// covariates (gender income gap, share white, share with a bachelor's
// degree or above).

#include "nlmfm/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nlmfm {

struct PumsRecord {
  std::string area_id;
  double PINCP = 0.0;
  int SEX = 1;
  int RAC1P = 1;
  int SCHL = 1;

  void validate() const;
};

/// Reads area_id, PINCP, SEX, RAC1P, SCHL columns (extra columns ignored).
std::vector<PumsRecord> read_pums_csv(const std::filesystem::path& path);

struct IngestOptions {
  std::optional<long> subsample = 200;  // per area, without replacement; nullopt keeps every record
  bool allow_small_areas = false;       // keep areas with fewer records than `subsample`
  std::uint64_t seed = 1;
};

struct IngestReport {
  // period label -> area id -> records dropped for PINCP <= 0
  std::map<std::string, std::map<std::string, long>> dropped_nonpositive;
  std::map<std::string, std::map<std::string, long>> kept;
};

struct AreaCovariates {
  double gender = 0.0;     // (mean female income - mean male income) / mean income
  double white = 0.0;      // share with RAC1P == 1
  double education = 0.0;  // share with SCHL >= 21
};

/// Covariates of one area's records (all with positive income).
AreaCovariates area_covariates(const std::vector<PumsRecord>& records, const std::string& area_id);

/// Builds the dataset; `periods` maps a label to that period's records and
/// `adjacency` is the edge list over the lexicographically sorted area ids.
ArealDataset ingest(const std::vector<std::pair<std::string, std::vector<PumsRecord>>>& periods,
                    const std::string& adjacency, const IngestOptions& options, IngestReport* report = nullptr);

/// Stable record key for seeded sort-then-take subsampling.
std::uint64_t record_key(const PumsRecord& record, std::uint64_t seed);

}  // namespace nlmfm

#endif  // NLMFM_INGEST_HPP
