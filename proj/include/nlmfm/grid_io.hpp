#pragma once
#ifndef NLMFM_GRID_IO_HPP
#define NLMFM_GRID_IO_HPP

#include "nlmfm/model.hpp"

#include <filesystem>
#include <string>

namespace nlmfm {

using Grid = DensityGrid<double>;

/// Formats with 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

/// CSV with header "x,value", one grid point per row.
std::string density_grid_to_csv(const Grid& d);
Grid density_grid_from_csv(const std::string& text);

/// JSON array of {"x": ..., "value": ...} objects.
std::string density_grid_to_json(const Grid& d);
Grid density_grid_from_json(const std::string& text);

void write_density_grid_csv(const std::filesystem::path& path, const Grid& d);
Grid read_density_grid_csv(const std::filesystem::path& path);

}  // namespace nlmfm

#endif  // NLMFM_GRID_IO_HPP
