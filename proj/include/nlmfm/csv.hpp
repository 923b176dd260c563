#pragma once
#ifndef NLMFM_CSV_HPP
#define NLMFM_CSV_HPP

// Minimal CSV table reader/writer shared by the file formats. Fields are
// comma separated; quoting is not supported because no field we write
// contains a comma.

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace nlmfm::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws if absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

std::vector<std::string> split_line(const std::string& line);
Table parse(const std::string& text, const std::string& origin = "<memory>");
Table read(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

double to_double(const std::string& field, const std::string& context);
long to_long(const std::string& field, const std::string& context);

/// Writes a numeric matrix with the given header, one row per matrix row.
void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& header,
                  const Eigen::MatrixXd& values);
/// Reads a fully numeric CSV into a matrix; the header is returned via `header`.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

}  // namespace nlmfm::csv

#endif  // NLMFM_CSV_HPP
