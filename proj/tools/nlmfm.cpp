// nlmfm command-line tool: simulate | ingest | fit | postprocess | align | metrics | export
//
// Runtime failures exit 1 with one "error: ..." line on stderr; invalid
// configuration or arguments exit 2.

#include "nlmfm/align.hpp"
#include "nlmfm/chain_io.hpp"
#include "nlmfm/config.hpp"
#include "nlmfm/csv.hpp"
#include "nlmfm/dataset.hpp"
#include "nlmfm/grid_io.hpp"
#include "nlmfm/ingest.hpp"
#include "nlmfm/metrics.hpp"
#include "nlmfm/postprocess.hpp"
#include "nlmfm/sampler.hpp"
#include "nlmfm/simgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nlmfm;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Unparsed "--section.key value" / "--section.key=value" tokens.
Overrides collect_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (!tok.starts_with("--")) throw ConfigError("unexpected argument '" + tok + "'");
    std::string key = tok.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override --" + key + " needs a value");
      value = extras[++i];
    }
    if (key.find('.') == std::string::npos) throw ConfigError("unknown option --" + key);
    out.emplace_back(key, value);
  }
  return out;
}

RunConfig resolve_config(const std::string& path, const Overrides& overrides) {
  return path.empty() ? default_run_config(overrides) : load_run_config(path, overrides);
}

void write_json(const fs::path& path, const json& j) { csv::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(csv::read_text(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<std::string> factor_header(const std::string& stem, Eigen::Index H, bool with_x) {
  std::vector<std::string> h;
  if (with_x) h.push_back("x");
  for (Eigen::Index i = 0; i < H; ++i) h.push_back(stem + std::to_string(i + 1));
  return h;
}

Eigen::MatrixXd with_grid(const Eigen::VectorXd& x, const Eigen::MatrixXd& cols) {
  Eigen::MatrixXd out(x.size(), cols.cols() + 1);
  out.col(0) = x;
  out.rightCols(cols.cols()) = cols;
  return out;
}

ArealDataset select_periods(ArealDataset data, const std::vector<std::string>& labels) {
  if (labels.empty()) return data;
  if (labels.size() > 2) throw std::invalid_argument("fit supports one or two periods");
  std::vector<PeriodData> keep;
  for (const auto& label : labels) {
    auto it = std::find_if(data.periods.begin(), data.periods.end(), [&](const auto& p) { return p.label == label; });
    if (it == data.periods.end()) throw std::runtime_error("dataset has no period '" + label + "'");
    keep.push_back(*it);
  }
  data.periods = std::move(keep);
  return data;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// --- simulate ------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const fs::path& out, const Overrides& ov) {
  const RunConfig cfg = resolve_config(config_path, ov);
  const Simulation sim = generate(cfg.simulation);
  write_dataset(out, sim.data);
  const Eigen::VectorXd grid = make_grid(cfg.chain.grid, sim.data);
  write_truth(out, sim.truth, grid);
  json manifest;
  manifest["command"] = "simulate";
  manifest["config"] = run_config_json(cfg);
  manifest["areas"] = sim.data.areas();
  manifest["observations"] = sim.data.observation_count();
  std::vector<int> counts(sim.truth.component_counts.data(),
                          sim.truth.component_counts.data() + sim.truth.component_counts.size());
  manifest["component_counts"] = counts;
  write_json(out / "simulation.json", manifest);
  std::cout << "simulated " << sim.data.areas() << " areas, " << sim.data.observation_count() << " observations -> "
            << out.string() << "\n";
  return 0;
}

// --- ingest --------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& records, const fs::path& adjacency, const fs::path& out,
               long subsample, bool no_subsample, std::uint64_t seed, bool allow_small) {
  std::vector<std::pair<std::string, std::vector<PumsRecord>>> periods;
  for (const auto& spec : records) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--records expects LABEL=PATH, got '" + spec + "'");
    periods.emplace_back(spec.substr(0, eq), read_pums_csv(spec.substr(eq + 1)));
  }
  IngestOptions opt;
  opt.subsample = no_subsample ? std::nullopt : std::optional<long>(subsample);
  opt.seed = seed;
  opt.allow_small_areas = allow_small;
  IngestReport report;
  const ArealDataset data = ingest(periods, csv::read_text(adjacency), opt, &report);
  write_dataset(out, data);
  std::string text = "period,area_id,kept,dropped_nonpositive\n";
  long dropped = 0;
  for (const auto& [label, areas] : report.kept)
    for (const auto& [id, kept] : areas) {
      long d = 0;
      if (auto p = report.dropped_nonpositive.find(label); p != report.dropped_nonpositive.end())
        if (auto a = p->second.find(id); a != p->second.end()) d = a->second;
      dropped += d;
      text += label + "," + id + "," + std::to_string(kept) + "," + std::to_string(d) + "\n";
    }
  csv::write_text(out / "ingest_report.csv", text);
  std::cout << "ingested " << data.areas() << " areas x " << data.period_count() << " periods (" << dropped
            << " records with PINCP <= 0 dropped) -> " << out.string() << "\n";
  return 0;
}

// --- fit -----------------------------------------------------------------------

int cmd_fit(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
            const std::string& periods, const Overrides& ov) {
  RunConfig cfg = resolve_config(config_path, ov);
  if (!data_dir.empty()) cfg.data = data_dir;
  if (!out_dir.empty()) cfg.out = out_dir;
  if (!periods.empty()) cfg.periods = split_commas(periods);
  if (cfg.data.empty()) throw ConfigError("fit needs a dataset (--data or paths.data)");
  if (cfg.out.empty()) throw ConfigError("fit needs an output directory (--out or paths.out)");
  const ArealDataset data = select_periods(read_dataset(cfg.data), cfg.periods);
  const ChainDraws draws = run_chain(data, cfg.chain);
  save_chain(cfg.out, draws);
  csv::write_text(cfg.out / "run_config.yaml", run_config_yaml(cfg));
  std::cout << "fit: " << draws.draws.size() << " draws, H = " << draws.factors() << ", loading acceptance "
            << draws.loading_acceptance << " -> " << cfg.out.string() << "\n";
  return 0;
}

// --- postprocess ---------------------------------------------------------------

std::vector<AreaSummary> area_effect_rows(const ChainDraws& contrasted, Eigen::Index t) {
  std::vector<AreaSummary> rows;
  const Eigen::Index H = contrasted.factors();
  const auto g = static_cast<Eigen::Index>(contrasted.area_ids.size());
  const auto p = static_cast<Eigen::Index>(contrasted.covariate_names.size());
  std::vector<std::vector<Eigen::MatrixXd>> eta;
  for (const auto& d : contrasted.draws) eta.push_back(area_effect(d.regression, t));
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index m = 0; m < p; ++m)
      for (Eigen::Index j = 0; j < g; ++j) {
        std::vector<double> v;
        for (const auto& e : eta) v.push_back(e[static_cast<std::size_t>(h)](j, m));
        rows.push_back({contrasted.area_ids[static_cast<std::size_t>(j)],
                        "eta_" + contrasted.period_labels[static_cast<std::size_t>(t)] + "_h" +
                            std::to_string(h + 1) + "_" + contrasted.covariate_names[static_cast<std::size_t>(m)],
                        summarize(v)});
      }
  return rows;
}

std::string zeta_summary_csv(const ChainDraws& contrasted) {
  std::string out = "period,factor,covariate,mean,lo,hi,excludes_zero\n";
  const Eigen::Index H = contrasted.factors();
  for (std::size_t t = 0; t < contrasted.period_labels.size(); ++t)
    for (Eigen::Index h = 0; h < H; ++h)
      for (std::size_t m = 0; m < contrasted.covariate_names.size(); ++m) {
        std::vector<double> v;
        for (const auto& d : contrasted.draws) v.push_back(d.regression.zeta[t](h, static_cast<Eigen::Index>(m)));
        const SummaryRow r = summarize(v);
        out += contrasted.period_labels[t] + "," + std::to_string(h + 1) + "," + contrasted.covariate_names[m] + "," +
               format_double(r.mean) + "," + format_double(r.lo) + "," + format_double(r.hi) + "," +
               (r.excludes_zero ? "1" : "0") + "\n";
      }
  return out;
}

int cmd_postprocess(const fs::path& chain_dir, const fs::path& out, int reference) {
  ChainDraws draws = load_chain(chain_dir);
  if (draws.draws.size() < 2) throw std::runtime_error("postprocess needs at least two stored draws");
  const auto perms = relabel_draws(draws);
  long moved = 0;
  for (const auto& p : perms)
    for (std::size_t a = 0; a < p.size(); ++a)
      if (p[a] != static_cast<int>(a)) {
        ++moved;
        break;
      }
  const Eigen::MatrixXd R = mean_residuals(draws);
  const int ref = reference >= 1 ? reference - 1 : default_reference_factor(R, draws.grid);
  const ChainDraws contrasted = baseline_contrast(draws, ref);

  save_chain(out / "chain", draws);
  const Eigen::Index H = draws.factors();
  csv::write_matrix(out / "residual_mean.csv", factor_header("r_", H, true), with_grid(draws.grid, R));
  for (Eigen::Index h = 0; h < H; ++h)
    write_density_grid_csv(out / ("residual_h" + std::to_string(h + 1) + ".csv"), Grid{draws.grid, R.col(h)});
  for (std::size_t t = 0; t < draws.period_labels.size(); ++t) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(draws.draws.front().loadings[t].rows(), H);
    for (const auto& d : draws.draws) mean += d.loadings[t];
    mean /= static_cast<double>(draws.draws.size());
    csv::write_matrix(out / ("loading_mean_p" + std::to_string(t + 1) + ".csv"), factor_header("lambda_", H, false),
                      mean);
  }
  csv::write_text(out / "zeta_summary.csv", zeta_summary_csv(contrasted));
  std::vector<AreaSummary> rows;
  for (std::size_t t = 0; t < draws.period_labels.size(); ++t)
    for (auto& r : area_effect_rows(contrasted, static_cast<Eigen::Index>(t))) rows.push_back(std::move(r));
  csv::write_text(out / "area_effects.csv", area_summary_csv(rows));

  json manifest;
  manifest["command"] = "postprocess";
  manifest["chain"] = chain_dir.string();
  manifest["factors"] = H;
  manifest["draws"] = draws.draws.size();
  manifest["reference_factor"] = ref + 1;
  manifest["reference_rule"] = reference >= 1 ? "user" : "largest positive residual mass above grid median";
  manifest["relabeled_draws"] = moved;
  manifest["period_labels"] = draws.period_labels;
  write_json(out / "postprocess.json", manifest);
  std::cout << "postprocess: H = " << H << ", reference factor " << ref + 1 << ", " << moved
            << " draws relabeled -> " << out.string() << "\n";
  return 0;
}

// --- align ---------------------------------------------------------------------

int cmd_align(const fs::path& ref_dir, const fs::path& src_dir, const fs::path& out, const std::string& src_data,
              long redraws, std::uint64_t seed) {
  std::vector<std::string> header_ref, header_src;
  const Eigen::MatrixXd ref_tab = csv::read_matrix(ref_dir / "residual_mean.csv", &header_ref);
  const Eigen::MatrixXd src_tab = csv::read_matrix(src_dir / "residual_mean.csv", &header_src);
  if (ref_tab.rows() != src_tab.rows() || !ref_tab.col(0).isApprox(src_tab.col(0), 1e-12))
    throw std::runtime_error("residual matrices are on different grids; fit both with the same grid.lo/grid.hi/grid.points");
  const Eigen::VectorXd x = ref_tab.col(0);
  const Eigen::MatrixXd R_ref = ref_tab.rightCols(ref_tab.cols() - 1);
  const Eigen::MatrixXd R_src = src_tab.rightCols(src_tab.cols() - 1);
  if (R_src.cols() > R_ref.cols())
    throw std::runtime_error("source has more factors (" + std::to_string(R_src.cols()) + ") than the reference (" +
                             std::to_string(R_ref.cols()) + ")");

  std::vector<std::string> warnings;
  const AlignmentOperator op = fit_alignment(R_ref, R_src, [&](const std::string& w) { warnings.push_back(w); });
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  json manifest;
  manifest["command"] = "align";
  manifest["reference"] = ref_dir.string();
  manifest["source"] = src_dir.string();
  std::vector<std::vector<int>> P(static_cast<std::size_t>(op.P.rows()));
  for (Eigen::Index i = 0; i < op.P.rows(); ++i)
    for (Eigen::Index j = 0; j < op.P.cols(); ++j) P[static_cast<std::size_t>(i)].push_back(op.P(i, j));
  manifest["P"] = P;
  manifest["d"] = std::vector<double>(op.d.data(), op.d.data() + op.d.size());
  manifest["warnings"] = warnings;

  const json src_pp = read_json(src_dir / "postprocess.json");
  const auto periods = src_pp.at("period_labels").get<std::vector<std::string>>();
  std::vector<Eigen::MatrixXd> aligned_loadings;
  Eigen::MatrixXd aligned_R;
  long clamped = 0;
  for (std::size_t t = 0; t < periods.size(); ++t) {
    const Eigen::MatrixXd lambda = csv::read_matrix(src_dir / ("loading_mean_p" + std::to_string(t + 1) + ".csv"));
    AlignedFactors a = apply_alignment(op, R_src, lambda);
    clamped += a.clamped_loadings;
    aligned_R = a.residuals;
    csv::write_matrix(out / ("aligned_loadings_p" + std::to_string(t + 1) + ".csv"),
                      factor_header("lambda_", a.loadings.cols(), false), a.loadings);
    aligned_loadings.push_back(std::move(a.loadings));
  }
  if (periods.empty()) aligned_R = apply_alignment(op, R_src, Eigen::MatrixXd(0, R_src.cols())).residuals;
  csv::write_matrix(out / "aligned_residuals.csv", factor_header("r_", aligned_R.cols(), true), with_grid(x, aligned_R));

  // RMSE of the matched source residuals against the reference, before
  // (permutation only) and after the diagonal rescaling.
  Eigen::MatrixXd before = Eigen::MatrixXd::Zero(R_ref.rows(), R_ref.cols());
  for (Eigen::Index i = 0; i < R_ref.cols(); ++i)
    if (const int j = op.source_of(i); j >= 0) before.col(i) = R_src.col(j);
  const auto rmse = rmse_improvement(R_ref, before, aligned_R);
  std::string text = "factor,matched,rmse_before,rmse_after,improvement_percent\n";
  json rm = json::array();
  for (std::size_t i = 0; i < rmse.size(); ++i) {
    const bool matched = op.source_of(static_cast<Eigen::Index>(i)) >= 0;
    text += std::to_string(i + 1) + "," + (matched ? "1" : "0") + "," + format_double(rmse[i].before) + "," +
            format_double(rmse[i].after) + "," + format_double(rmse[i].improvement_percent) + "\n";
    rm.push_back({{"factor", i + 1}, {"matched", matched}, {"before", rmse[i].before}, {"after", rmse[i].after}});
  }
  csv::write_text(out / "rmse.csv", text);
  manifest["rmse"] = rm;
  manifest["clamped_loadings"] = clamped;

  if (!src_data.empty()) {
    if (redraws < 1) throw ConfigError("--redraws must be at least 1");
    const ArealDataset data = select_periods(read_dataset(src_data), periods);
    const json chain_manifest = read_json(src_dir / "chain" / "manifest.json");
    const ChainConfig cc = chain_config_from_json(chain_manifest.at("config"));
    std::vector<Eigen::MatrixXd> C;
    for (const auto& p : data.periods) C.push_back(p.C);
    for (auto& l : aligned_loadings)
      for (Eigen::Index i = 0; i < l.cols(); ++i)
        if (op.source_of(i) < 0) l.col(i).setOnes();  // unmatched slots carry no information
    Rng rng(seed);
    const EffectDraws eff = redraw_effects(aligned_loadings, C, data.W, cc.rho, cc.regression, redraws, redraws / 2, rng);
    std::string zs = "period,factor,covariate,mean,lo,hi,excludes_zero\n";
    for (std::size_t t = 0; t < C.size(); ++t)
      for (Eigen::Index h = 0; h < aligned_R.cols(); ++h) {
        if (op.source_of(h) < 0) continue;
        for (Eigen::Index m = 0; m < C[t].cols(); ++m) {
          std::vector<double> v;
          for (const auto& s : eff.draws) v.push_back(s.zeta[t](h, m));
          const SummaryRow r = summarize(v);
          zs += periods[t] + "," + std::to_string(h + 1) + "," + data.covariate_names[static_cast<std::size_t>(m)] +
                "," + format_double(r.mean) + "," + format_double(r.lo) + "," + format_double(r.hi) + "," +
                (r.excludes_zero ? "1" : "0") + "\n";
        }
      }
    csv::write_text(out / "aligned_zeta_summary.csv", zs);
    manifest["effect_redraws"] = redraws;
  }
  write_json(out / "alignment.json", manifest);
  std::cout << "align: d =";
  for (Eigen::Index i = 0; i < op.d.size(); ++i) std::cout << " " << op.d(i);
  std::cout << " -> " << out.string() << "\n";
  return 0;
}

// --- metrics -------------------------------------------------------------------

int cmd_metrics(const fs::path& chain_dir, const std::string& truth_dir, int baseline, const fs::path& out) {
  ChainDraws draws = load_chain(chain_dir);
  json m;
  m["command"] = "metrics";
  m["chain"] = chain_dir.string();
  m["factors"] = draws.factors();
  std::string text = "metric,value\n";
  auto put = [&](const std::string& k, double v) {
    m[k] = v;
    text += k + "," + format_double(v) + "\n";
  };
  if (draws.loglik.size() > 0) {
    const WaicParts w = waic_parts(draws.loglik);
    put("lppd", w.lppd);
    put("p_waic", w.p_waic);
    put("waic", w.waic);
  }
  if (!truth_dir.empty()) {
    const SimTruth truth = read_truth(truth_dir);
    put("mean_area_kl", mean_area_kl(draws, truth));
    relabel_draws(draws);
    if (draws.factors() >= truth.weights.cols()) {
      const int b = baseline >= 1 ? baseline - 1 : default_baseline_component(truth);
      const EffectRecovery rec = effect_recovery(draws, truth, b);
      put("main_coverage_percent", rec.main.coverage_percent);
      put("main_bias", rec.main.bias);
      put("main_mae", rec.main.mae);
      put("area_coverage_percent", rec.area.coverage_percent);
      put("area_bias", rec.area.bias);
      put("area_mae", rec.area.mae);
      m["factor_of_component"] = rec.factor_of_component;
    } else {
      m["effect_recovery"] = "skipped: fewer factors than true components";
    }
  }
  fs::create_directories(out);
  write_json(out / "metrics.json", m);
  csv::write_text(out / "metrics.csv", text);
  std::cout << text;
  return 0;
}

// --- export --------------------------------------------------------------------

int cmd_export(const fs::path& pp_dir, const fs::path& out, int reference) {
  const ChainDraws draws = load_chain(pp_dir / "chain");
  int ref = reference - 1;
  if (reference < 1) ref = read_json(pp_dir / "postprocess.json").at("reference_factor").get<int>() - 1;
  const ChainDraws contrasted = baseline_contrast(draws, ref);
  const Eigen::Index H = draws.factors(), S = static_cast<Eigen::Index>(draws.draws.size());
  const auto& x = draws.grid;
  const auto T = draws.period_labels.size();

  Eigen::MatrixXd pstar = Eigen::MatrixXd::Zero(x.size(), H), resid = Eigen::MatrixXd::Zero(x.size(), H);
  for (const auto& d : draws.draws) {
    pstar += factor_density_matrix(x, d.scores, d.atoms);
    resid += draw_residuals(d, x);
  }
  pstar /= static_cast<double>(S);
  resid /= static_cast<double>(S);
  for (Eigen::Index h = 0; h < H; ++h) {
    write_density_grid_csv(out / ("factor_density_h" + std::to_string(h + 1) + ".csv"), Grid{x, pstar.col(h)});
    write_density_grid_csv(out / ("residual_h" + std::to_string(h + 1) + ".csv"), Grid{x, resid.col(h)});
  }

  std::vector<std::string> area_header{"x"};
  for (const auto& id : draws.area_ids) area_header.push_back(id);
  std::vector<AreaSummary> weights;
  for (std::size_t t = 0; t < T; ++t) {
    csv::write_matrix(out / ("predictive_p" + std::to_string(t + 1) + ".csv"), area_header,
                      with_grid(x, predictive_densities(draws, static_cast<Eigen::Index>(t))));
    std::vector<Eigen::MatrixXd> w;
    for (const auto& d : draws.draws) w.push_back(factor_weight_matrix(d.loadings[t], d.scores, d.atoms.jumps));
    for (Eigen::Index h = 0; h < H; ++h)
      for (std::size_t j = 0; j < draws.area_ids.size(); ++j) {
        std::vector<double> v;
        for (const auto& ws : w) v.push_back(ws(static_cast<Eigen::Index>(j), h));
        weights.push_back({draws.area_ids[j], "s_" + draws.period_labels[t] + "_h" + std::to_string(h + 1), summarize(v)});
      }
  }
  csv::write_text(out / "weights.csv", area_summary_csv(weights));
  if (T == 2) {
    std::vector<Eigen::MatrixXd> ds;
    for (const auto& d : draws.draws) ds.push_back(weight_change(d, 0, 1));
    std::vector<AreaSummary> rows;
    for (Eigen::Index h = 0; h < H; ++h)
      for (std::size_t j = 0; j < draws.area_ids.size(); ++j) {
        std::vector<double> v;
        for (const auto& m : ds) v.push_back(m(static_cast<Eigen::Index>(j), h));
        rows.push_back({draws.area_ids[j], "delta_s_h" + std::to_string(h + 1), summarize(v)});
      }
    csv::write_text(out / "weight_change.csv", area_summary_csv(rows));
  }
  csv::write_text(out / "zeta_summary.csv", zeta_summary_csv(contrasted));
  std::vector<AreaSummary> eff;
  for (std::size_t t = 0; t < T; ++t)
    for (auto& r : area_effect_rows(contrasted, static_cast<Eigen::Index>(t))) eff.push_back(std::move(r));
  csv::write_text(out / "area_effects.csv", area_summary_csv(eff));

  // Traces: one row per stored draw.
  std::vector<std::string> th{"draw", "psi", "tau", "tau_gamma"};
  const auto p = static_cast<Eigen::Index>(draws.covariate_names.size());
  for (std::size_t t = 0; t < T; ++t)
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index m = 0; m < p; ++m)
        th.push_back("zeta_" + draws.period_labels[t] + "_h" + std::to_string(h + 1) + "_" +
                     draws.covariate_names[static_cast<std::size_t>(m)]);
  Eigen::MatrixXd trace(S, static_cast<Eigen::Index>(th.size()));
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto& r = contrasted.draws[static_cast<std::size_t>(s)].regression;
    Eigen::Index c = 0;
    trace(s, c++) = static_cast<double>(s);
    trace(s, c++) = r.psi;
    trace(s, c++) = r.tau;
    trace(s, c++) = r.tau_gamma;
    for (std::size_t t = 0; t < T; ++t)
      for (Eigen::Index h = 0; h < H; ++h)
        for (Eigen::Index m = 0; m < p; ++m) trace(s, c++) = r.zeta[t](h, m);
  }
  csv::write_matrix(out / "trace_effects.csv", th, trace);
  Eigen::MatrixXd ht(static_cast<Eigen::Index>(draws.h_trace.size()), 2);
  for (Eigen::Index i = 0; i < ht.rows(); ++i) ht.row(i) << static_cast<double>(i), draws.h_trace[i];
  csv::write_matrix(out / "trace_factors.csv", {"iteration", "factors"}, ht);

  json manifest;
  manifest["command"] = "export";
  manifest["source"] = pp_dir.string();
  manifest["reference_factor"] = ref + 1;
  manifest["factors"] = H;
  manifest["draws"] = S;
  write_json(out / "export.json", manifest);
  std::cout << "export: " << H << " factors, " << S << " draws -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalised latent measure factor model with covariates"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, periods, truth_dir, chain_dir, ref_dir, src_dir, src_data, adjacency;
  std::vector<std::string> records;
  int reference = 0, baseline = 0;
  long subsample = 200, redraws = 2000;
  bool no_subsample = false, allow_small = false;
  std::uint64_t seed = 1;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset and its truth files");
  sim->add_option("--config", config_path, "YAML run configuration");
  sim->add_option("--out", out, "output directory")->required();
  sim->allow_extras();

  auto* ing = app.add_subcommand("ingest", "build a dataset from PUMS-format CSV files");
  ing->add_option("--records", records, "LABEL=PATH, one per period")->required();
  ing->add_option("--adjacency", adjacency, "edge list over the sorted area ids")->required();
  ing->add_option("--out", out, "output directory")->required();
  ing->add_option("--subsample", subsample, "records kept per area");
  ing->add_flag("--no-subsample", no_subsample, "keep every record");
  ing->add_option("--seed", seed, "subsampling seed");
  ing->add_flag("--allow-small-areas", allow_small, "keep areas with fewer records than --subsample");

  auto* fit = app.add_subcommand("fit", "run the adaptive sampler");
  fit->add_option("--config", config_path, "YAML run configuration");
  fit->add_option("--data", data_dir, "dataset directory (overrides paths.data)");
  fit->add_option("--out", out, "chain output directory (overrides paths.out)");
  fit->add_option("--periods", periods, "comma-separated period labels (one or two)");
  fit->allow_extras();

  auto* pp = app.add_subcommand("postprocess", "relabel draws, choose a reference factor, summarize");
  pp->add_option("--chain", chain_dir, "chain directory")->required();
  pp->add_option("--out", out, "output directory")->required();
  pp->add_option("--reference", reference, "1-based reference factor (default: high-income rule)");

  auto* al = app.add_subcommand("align", "align a source fit onto a reference fit");
  al->add_option("--reference", ref_dir, "postprocess directory of the reference fit")->required();
  al->add_option("--source", src_dir, "postprocess directory of the source fit")->required();
  al->add_option("--out", out, "output directory")->required();
  al->add_option("--source-data", src_data, "source dataset directory; enables effect re-draws");
  al->add_option("--redraws", redraws, "Gibbs iterations for the effect re-draws");
  al->add_option("--seed", seed, "seed for the effect re-draws");

  auto* me = app.add_subcommand("metrics", "WAIC, and KL/coverage against simulation truth");
  me->add_option("--chain", chain_dir, "chain directory")->required();
  me->add_option("--truth", truth_dir, "simulation directory with truth files");
  me->add_option("--baseline-component", baseline, "1-based true component used as baseline");
  me->add_option("--out", out, "output directory")->required();

  auto* ex = app.add_subcommand("export", "plot-ready densities, weights, effects and traces");
  ex->add_option("--postprocessed", chain_dir, "postprocess directory")->required();
  ex->add_option("--out", out, "output directory")->required();
  ex->add_option("--reference", reference, "1-based reference factor (default: from postprocess.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "config error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out, collect_overrides(sim->remaining()));
    if (ing->parsed()) return cmd_ingest(records, adjacency, out, subsample, no_subsample, seed, allow_small);
    if (fit->parsed()) return cmd_fit(config_path, data_dir, out, periods, collect_overrides(fit->remaining()));
    if (pp->parsed()) return cmd_postprocess(chain_dir, out, reference);
    if (al->parsed()) return cmd_align(ref_dir, src_dir, out, src_data, redraws, seed);
    if (me->parsed()) return cmd_metrics(chain_dir, truth_dir, baseline, out);
    if (ex->parsed()) return cmd_export(chain_dir, out, reference);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
