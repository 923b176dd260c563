#include "doctest.h"
#include "support.hpp"

#include "nlmfm/csv.hpp"
#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(NLMFM_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, ""};
  if (fs::exists(err)) r.err = nlmfm::csv::read_text(err);
  return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(nlmfm::csv::read_text(p)); }

const std::string short_chain =
    " --chain.iterations 60 --chain.burn_in 20 --chain.atoms 8 --grid.points 128 --simulation.areas 9"
    " --simulation.per_area 15";

}  // namespace

TEST_CASE("simulate, fit, metrics") {
  const fs::path d = test_support::scratch_dir("cli_pipeline");
  REQUIRE(cli("simulate --out " + (d / "sim").string() + short_chain, d).code == 0);
  CHECK(fs::exists(d / "sim" / "truth_weights.csv"));
  CHECK(fs::exists(d / "sim" / "observations.csv"));

  const std::string fit = "fit --data " + (d / "sim").string() + short_chain + " --out ";
  REQUIRE(cli(fit + (d / "c1").string(), d).code == 0);
  REQUIRE(cli(fit + (d / "c2").string(), d).code == 0);
  CHECK(nlmfm::csv::read_text(d / "c1" / "scores.csv") == nlmfm::csv::read_text(d / "c2" / "scores.csv"));
  CHECK(read_json(d / "c1" / "manifest.json") == read_json(d / "c2" / "manifest.json"));
  CHECK(fs::exists(d / "c1" / "run_config.yaml"));

  REQUIRE(cli("metrics --chain " + (d / "c1").string() + " --truth " + (d / "sim").string() + " --out " +
                  (d / "m").string(),
              d)
              .code == 0);
  const auto m = read_json(d / "m" / "metrics.json");
  CHECK(std::isfinite(m["waic"].get<double>()));
  CHECK(m["mean_area_kl"].get<double>() >= 0.0);

  REQUIRE(cli("postprocess --chain " + (d / "c1").string() + " --out " + (d / "pp").string(), d).code == 0);
  REQUIRE(cli("align --reference " + (d / "pp").string() + " --source " + (d / "pp").string() + " --out " +
                  (d / "al").string(),
              d)
              .code == 0);
  const auto a = read_json(d / "al" / "alignment.json");
  const auto P = a["P"];
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < P[i].size(); ++j) CHECK(P[i][j].get<double>() == (i == j ? 1.0 : 0.0));
  for (const auto& d_h : a["d"]) CHECK(d_h.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(cli("export --postprocessed " + (d / "pp").string() + " --out " + (d / "ex").string(), d).code == 0);
  CHECK(fs::exists(d / "ex" / "weights.csv"));
  CHECK(fs::exists(d / "ex" / "trace_effects.csv"));
}

TEST_CASE("exit codes") {
  const fs::path d = test_support::scratch_dir("cli_errors");
  Run r = cli("simulate --out " + (d / "x").string() + " --chain.bogus 1", d);
  CHECK(r.code == 2);
  CHECK(r.err.find("config error") != std::string::npos);
  CHECK(cli("simulate --out " + (d / "x").string() + " --chain.rho abc", d).code == 2);
  CHECK(cli("fit", d).code == 2);
  nlmfm::csv::write_text(d / "bad.yaml", "chain:\n  unknown_key: 1\n");
  r = cli("fit --config " + (d / "bad.yaml").string() + " --data " + (d / "nowhere").string(), d);
  CHECK(r.code == 2);
  CHECK(r.err.find(":2") != std::string::npos);
  r = cli("fit --data " + (d / "nowhere").string() + " --out " + (d / "o").string(), d);
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("ingest fixture") {
  const fs::path d = test_support::scratch_dir("cli_ingest");
  const fs::path s = fs::path(NLMFM_FIXTURE_DIR) / "stateA";
  REQUIRE(cli("ingest --records 2016=" + (s / "pums_2016.csv").string() + " --records 2020=" +
                  (s / "pums_2020.csv").string() + " --adjacency " + (s / "adjacency.txt").string() + " --out " +
                  d.string(),
              d)
              .code == 0);
  const std::string report = nlmfm::csv::read_text(d / "ingest_report.csv");
  CHECK(report.rfind("period,area_id,kept,dropped_nonpositive", 0) == 0);
  CHECK(fs::exists(d / "observations.csv"));
  CHECK(cli("ingest --records 2016=" + (s / "pums_2016.csv").string() + " --adjacency " +
                (s / "adjacency.txt").string() + " --subsample 100000 --out " + (d / "too_many").string(),
            d)
            .code == 1);
}
