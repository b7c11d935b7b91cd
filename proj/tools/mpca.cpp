// mpca: simulate / analyze / oracle-check

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mpca/mpca.hpp"
#include "mpca/oracle/checks.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kOracle = 3 };

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("MPCA_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw mpca::InvalidInput(std::string("MPCA_SEED is not an unsigned integer: ") + s);
  }
}

mpca::Dims parse_dims(const std::string& s) {
  mpca::Dims d;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != tok.size() || v == 0) throw mpca::InvalidInput("bad --dims entry '" + tok + "'");
    d.push_back(v);
  }
  return d;
}

struct SimulateArgs {
  std::string preset;
  std::string config;
  std::size_t reps = 0;
  std::optional<std::uint64_t> seed;
  std::string out = "mpca-out";
  std::size_t jobs = 1;
  std::size_t export_rep = 0;
};

int run_simulate(const SimulateArgs& a) {
  mpca::SimConfig cfg;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw mpca::InvalidInput("cannot open config " + a.config);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw mpca::InvalidInput(std::string("config: ") + e.what());
    }
    if (!a.preset.empty()) j["preset"] = a.preset;
    cfg = mpca::sim_config_from_json(j);
  } else {
    cfg = mpca::make_preset(a.preset.empty() ? "paper-low" : a.preset);
  }
  if (a.reps) cfg.replicates = a.reps;
  if (a.seed) cfg.seed = *a.seed;
  if (auto s = env_seed()) cfg.seed = *s;
  cfg.jobs = a.jobs;
  if (a.export_rep) cfg.export_replicate = a.export_rep - 1;

  const auto report = mpca::simulate(cfg);
  mpca::write_outputs(a.out, report);
  std::cout << "preset " << cfg.preset << ": " << cfg.replicates << " replicates, " << report.failed
            << " failed, " << report.seconds << " s\n";
  for (const auto& rs : report.regimes)
    for (const auto& t : rs.targets)
      std::cout << "  " << mpca::to_string(rs.regime) << " " << t.target.label() << " coverage "
                << t.covered << "/" << t.count << "  n*var " << t.n_var << "\n";
  std::cout << "outputs in " << a.out << "\n";
  if (mpca::run_failed(report)) {
    std::cerr << "more than 10% of replicates failed\n";
    return kNumerical;
  }
  return kOk;
}

struct AnalyzeArgs {
  std::string input;
  std::string dims;
  std::size_t r = 1;
  std::string regime = "auto";
  double alpha = 0.05;
  bool log = false;
  bool mad = false;
  bool center = false;
  double drop_missing = 0.05;
  std::optional<std::uint64_t> seed;
  std::string out = "mpca-out";
};

int run_analyze(const AnalyzeArgs& a) {
  mpca::AnalyzeConfig cfg;
  if (!a.dims.empty()) cfg.dims = parse_dims(a.dims);
  cfg.r = a.r;
  cfg.regime = mpca::parse_regime(a.regime);
  cfg.alpha = a.alpha;
  cfg.log_transform = a.log;
  cfg.mad_standardize = a.mad;
  cfg.center = a.center;
  cfg.drop_missing_threshold = a.drop_missing;
  if (a.seed) cfg.seed = *a.seed;
  if (auto s = env_seed()) cfg.seed = *s;

  std::ifstream in(a.input);
  if (!in) throw mpca::InvalidInput("cannot open input " + a.input);
  const auto res = mpca::analyze_csv(in, cfg);
  mpca::write_analyze_outputs(a.out, res);
  std::cout << "n = " << res.bundle.n << ", observation dims " << mpca::dims_to_string(res.bundle.dims)
            << ", regime " << mpca::to_string(res.regime) << "\n";
  for (std::size_t k = 0; k < res.share.size(); ++k)
    std::cout << "  component " << k + 1 << ": sigma^2 " << res.bundle.variances.sigma_sq_hat[k]
              << ", share (heuristic) " << res.share[k] << "\n";
  for (const auto& n : res.notes) std::cout << "  note: " << n << "\n";
  std::cout << "outputs in " << a.out << "\n";
  return kOk;
}

int run_oracle_check() {
  const auto rows = mpca::oracle::run_checks();
  bool ok = true;
  std::printf("%-50s %12s %10s  %s\n", "check", "value", "tol", "result");
  for (const auto& r : rows) {
    std::printf("%-50s %12.3e %10.1e  %s\n", r.name.c_str(), r.value, r.tolerance, r.pass ? "pass" : "FAIL");
    ok = ok && r.pass;
  }
  return ok ? kOk : kOracle;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiway principal components under the spiked covariance model"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo experiments on the spiked model");
  sim->add_option("--preset", sa.preset, "paper-low | paper-high | paper-poisson-low | paper-poisson-high");
  sim->add_option("--config", sa.config, "JSON config (fields override the named preset)");
  sim->add_option("--reps", sa.reps, "number of replicates");
  sim->add_option("--seed", sa.seed, "base seed (replicate i uses seed + i)");
  sim->add_option("--out", sa.out, "output directory");
  sim->add_option("--jobs", sa.jobs, "worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--export-replicate", sa.export_rep, "also write data and fit of this replicate (1-based)");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Fit a long-format CSV tensor (first mode = observations)");
  an->add_option("--input", aa.input, "CSV with columns i1,...,ip,value")->required();
  an->add_option("--dims", aa.dims, "comma-separated dims, observations first");
  an->add_option("--r", aa.r, "number of components")->check(CLI::PositiveNumber);
  an->add_option("--regime", aa.regime, "auto | A | B | C");
  an->add_option("--alpha", aa.alpha, "1 - confidence level");
  an->add_flag("--log", aa.log, "log-transform positive values");
  an->add_flag("--mad", aa.mad, "standardize each series to mean 0, mean absolute deviation 1");
  an->add_flag("--center", aa.center, "center every cell across observations");
  an->add_option("--drop-missing", aa.drop_missing, "drop observations with a larger missing share");
  an->add_option("--seed", aa.seed, "seed for restarts and sample splitting");
  an->add_option("--out", aa.out, "output directory");

  auto* oc = app.add_subcommand("oracle-check", "Compare the estimator with brute-force references");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (sim->parsed()) return run_simulate(sa);
    if (an->parsed()) return run_analyze(aa);
    if (oc->parsed()) return run_oracle_check();
  } catch (const mpca::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const mpca::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
