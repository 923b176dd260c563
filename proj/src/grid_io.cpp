#include "nlmfm/grid_io.hpp"

#include "nlmfm/csv.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>

namespace nlmfm {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string density_grid_to_csv(const Grid& d) {
  d.validate();
  std::string out = "x,value\n";
  for (Eigen::Index i = 0; i < d.size(); ++i) out += format_double(d.x(i)) + "," + format_double(d.values(i)) + "\n";
  return out;
}

Grid density_grid_from_csv(const std::string& text) {
  const auto t = csv::parse(text, "density grid");
  const auto cx = t.column("x");
  const auto cv = t.column("value");
  Grid d;
  d.x.resize(static_cast<Eigen::Index>(t.rows.size()));
  d.values.resize(d.x.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    d.x(static_cast<Eigen::Index>(i)) = csv::to_double(t.rows[i][cx], "density grid x");
    d.values(static_cast<Eigen::Index>(i)) = csv::to_double(t.rows[i][cv], "density grid value");
  }
  d.validate();
  return d;
}

std::string density_grid_to_json(const Grid& d) {
  d.validate();
  std::string out = "[";
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (i) out += ",";
    out += "{\"x\":" + format_double(d.x(i)) + ",\"value\":" + format_double(d.values(i)) + "}";
  }
  out += "]";
  return out;
}

Grid density_grid_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_array()) throw std::runtime_error("density grid JSON must be an array");
  Grid d;
  d.x.resize(static_cast<Eigen::Index>(j.size()));
  d.values.resize(d.x.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    d.x(static_cast<Eigen::Index>(i)) = j[i].at("x").get<double>();
    d.values(static_cast<Eigen::Index>(i)) = j[i].at("value").get<double>();
  }
  d.validate();
  return d;
}

void write_density_grid_csv(const std::filesystem::path& path, const Grid& d) {
  csv::write_text(path, density_grid_to_csv(d));
}

Grid read_density_grid_csv(const std::filesystem::path& path) { return density_grid_from_csv(csv::read_text(path)); }

}  // namespace nlmfm
