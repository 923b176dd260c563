#include "nlmfm/chain_io.hpp"

#include "nlmfm/config.hpp"
#include "nlmfm/csv.hpp"

#include <stdexcept>
#include <string>

namespace nlmfm {

namespace {

using json = nlohmann::json;

std::string idx(Eigen::Index i) { return std::to_string(i + 1); }

std::vector<std::string> names(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(stem + idx(i));
  return out;
}

std::vector<std::string> pair_names(const std::string& stem, Eigen::Index a, Eigen::Index b) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < a; ++i)
    for (Eigen::Index j = 0; j < b; ++j) out.push_back(stem + idx(i) + "_" + idx(j));
  return out;
}

Eigen::MatrixXd read_block(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m = csv::read_matrix(path);
  if (m.rows() != rows || (rows > 0 && m.cols() != cols))
    throw std::runtime_error(path.string() + ": expected " + std::to_string(rows) + " x " + std::to_string(cols) +
                             " values, found " + std::to_string(m.rows()) + " x " + std::to_string(m.cols()));
  if (rows == 0) m.resize(0, cols);
  return m;
}

}  // namespace

void save_chain(const std::filesystem::path& dir, const ChainDraws& d) {
  std::filesystem::create_directories(dir);
  const auto S = static_cast<Eigen::Index>(d.draws.size());
  const Eigen::Index H = d.factors();
  const Eigen::Index K = S ? d.draws.front().atoms.size() : 0;
  const Eigen::Index T = static_cast<Eigen::Index>(d.period_labels.size());
  const Eigen::Index g = static_cast<Eigen::Index>(d.area_ids.size());
  const Eigen::Index p = static_cast<Eigen::Index>(d.covariate_names.size());

  Eigen::MatrixXd scalars(S, 3), jumps(S, K), mu(S, K), s2(S, K), scores(S, H * K);
  std::vector<Eigen::MatrixXd> loadings(T, Eigen::MatrixXd(S, g * H)), zeta(T, Eigen::MatrixXd(S, H * p)),
      gamma(T, Eigen::MatrixXd(S, H * p * g));
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto& dr = d.draws[static_cast<std::size_t>(s)];
    if (dr.scores.rows() != H) throw std::invalid_argument("cannot save draws with different factor counts");
    scalars.row(s) << dr.regression.psi, dr.regression.tau, dr.regression.tau_gamma;
    jumps.row(s) = dr.atoms.jumps.transpose();
    mu.row(s) = dr.atoms.mu.transpose();
    s2.row(s) = dr.atoms.sigma2.transpose();
    for (Eigen::Index h = 0; h < H; ++h) scores.row(s).segment(h * K, K) = dr.scores.row(h);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index j = 0; j < g; ++j) loadings[t].row(s).segment(j * H, H) = dr.loadings[t].row(j);
      for (Eigen::Index h = 0; h < H; ++h) {
        zeta[t].row(s).segment(h * p, p) = dr.regression.zeta[t].row(h);
        for (Eigen::Index m = 0; m < p; ++m)
          gamma[t].row(s).segment((h * p + m) * g, g) = dr.regression.gamma[t][h].col(m).transpose();
      }
    }
  }
  csv::write_matrix(dir / "scalars.csv", {"psi", "tau", "tau_gamma"}, scalars);
  csv::write_matrix(dir / "jumps.csv", names("J_", K), jumps);
  csv::write_matrix(dir / "atoms_mu.csv", names("mu_", K), mu);
  csv::write_matrix(dir / "atoms_sigma2.csv", names("sigma2_", K), s2);
  csv::write_matrix(dir / "scores.csv", pair_names("m_", H, K), scores);
  for (Eigen::Index t = 0; t < T; ++t) {
    csv::write_matrix(dir / ("loadings_p" + idx(t) + ".csv"), pair_names("lambda_", g, H), loadings[t]);
    csv::write_matrix(dir / ("zeta_p" + idx(t) + ".csv"), pair_names("zeta_", H, p), zeta[t]);
    std::vector<std::string> gh;
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index m = 0; m < p; ++m)
        for (Eigen::Index j = 0; j < g; ++j) gh.push_back("gamma_" + idx(h) + "_" + idx(m) + "_" + idx(j));
    csv::write_matrix(dir / ("gamma_p" + idx(t) + ".csv"), gh, gamma[t]);
  }
  if (d.loglik.size() > 0) csv::write_matrix(dir / "loglik.csv", names("l_", d.loglik.cols()), d.loglik);
  Eigen::MatrixXd trace(static_cast<Eigen::Index>(d.h_trace.size()), 2);
  for (Eigen::Index i = 0; i < trace.rows(); ++i) trace.row(i) << static_cast<double>(i), d.h_trace[i];
  csv::write_matrix(dir / "h_trace.csv", {"iteration", "factors"}, trace);
  csv::write_matrix(dir / "grid.csv", {"x"}, d.grid);

  json manifest;
  manifest["format"] = "nlmfm-chain/1";
  manifest["config"] = chain_config_json(d.config);
  manifest["draws"] = S;
  manifest["final_factors"] = H;
  manifest["atoms"] = K;
  manifest["loading_acceptance"] = d.loading_acceptance;
  manifest["factors_added"] = d.added;
  manifest["factors_removed"] = d.removed;
  manifest["h_trace"] = d.h_trace;
  manifest["area_ids"] = d.area_ids;
  manifest["period_labels"] = d.period_labels;
  manifest["covariate_names"] = d.covariate_names;
  manifest["loglik_stored"] = d.loglik.size() > 0;
  csv::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ChainDraws load_chain(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(csv::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "nlmfm-chain/1")
    throw std::runtime_error((dir / "manifest.json").string() + ": not a chain manifest");

  ChainDraws d;
  d.config = chain_config_from_json(manifest.at("config"));
  d.area_ids = manifest.at("area_ids").get<std::vector<std::string>>();
  d.period_labels = manifest.at("period_labels").get<std::vector<std::string>>();
  d.covariate_names = manifest.at("covariate_names").get<std::vector<std::string>>();
  d.h_trace = manifest.at("h_trace").get<std::vector<int>>();
  d.loading_acceptance = manifest.at("loading_acceptance").get<double>();
  d.added = manifest.at("factors_added").get<long>();
  d.removed = manifest.at("factors_removed").get<long>();
  const auto S = manifest.at("draws").get<Eigen::Index>();
  const auto H = manifest.at("final_factors").get<Eigen::Index>();
  const auto K = manifest.at("atoms").get<Eigen::Index>();
  const auto T = static_cast<Eigen::Index>(d.period_labels.size());
  const auto g = static_cast<Eigen::Index>(d.area_ids.size());
  const auto p = static_cast<Eigen::Index>(d.covariate_names.size());

  const Eigen::MatrixXd grid = csv::read_matrix(dir / "grid.csv");
  d.grid = grid.col(0);
  const Eigen::MatrixXd scalars = read_block(dir / "scalars.csv", S, 3);
  const Eigen::MatrixXd jumps = read_block(dir / "jumps.csv", S, K);
  const Eigen::MatrixXd mu = read_block(dir / "atoms_mu.csv", S, K);
  const Eigen::MatrixXd s2 = read_block(dir / "atoms_sigma2.csv", S, K);
  const Eigen::MatrixXd scores = read_block(dir / "scores.csv", S, H * K);
  std::vector<Eigen::MatrixXd> loadings, zeta, gamma;
  for (Eigen::Index t = 0; t < T; ++t) {
    loadings.push_back(read_block(dir / ("loadings_p" + idx(t) + ".csv"), S, g * H));
    zeta.push_back(read_block(dir / ("zeta_p" + idx(t) + ".csv"), S, H * p));
    gamma.push_back(read_block(dir / ("gamma_p" + idx(t) + ".csv"), S, H * p * g));
  }
  for (Eigen::Index s = 0; s < S; ++s) {
    ChainDraw dr;
    dr.atoms = Atoms(K);
    dr.atoms.jumps = jumps.row(s).transpose();
    dr.atoms.mu = mu.row(s).transpose();
    dr.atoms.sigma2 = s2.row(s).transpose();
    dr.scores.resize(H, K);
    for (Eigen::Index h = 0; h < H; ++h) dr.scores.row(h) = scores.row(s).segment(h * K, K);
    dr.regression.psi = scalars(s, 0);
    dr.regression.tau = scalars(s, 1);
    dr.regression.tau_gamma = scalars(s, 2);
    dr.regression.rho = d.config.rho;
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::MatrixXd lambda(g, H), z(H, p);
      for (Eigen::Index j = 0; j < g; ++j) lambda.row(j) = loadings[t].row(s).segment(j * H, H);
      std::vector<Eigen::MatrixXd> gm(static_cast<std::size_t>(H), Eigen::MatrixXd(g, p));
      for (Eigen::Index h = 0; h < H; ++h) {
        z.row(h) = zeta[t].row(s).segment(h * p, p);
        for (Eigen::Index m = 0; m < p; ++m)
          gm[h].col(m) = gamma[t].row(s).segment((h * p + m) * g, g).transpose();
      }
      dr.loadings.push_back(std::move(lambda));
      dr.regression.zeta.push_back(std::move(z));
      dr.regression.gamma.push_back(std::move(gm));
    }
    d.draws.push_back(std::move(dr));
  }
  if (manifest.at("loglik_stored").get<bool>()) d.loglik = csv::read_matrix(dir / "loglik.csv");
  return d;
}

}  // namespace nlmfm
