#pragma once

// Monte-Carlo reproduction of the two-spike matrix experiments.
//
// Each replicate draws data from the spiked model, fits, debiases, and
// records the debiased coordinates of the requested targets under every
// regime. Estimated components are put in truth order before recording:
// component slot k takes the remaining estimate whose mode-1 vector has the
// smallest sin angle to u_k^(1) (for two spikes this is the usual "estimate
// closest to u_1 first" rule), and a mode vector is negated when its inner
// product with the true one is negative.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpca/debias.hpp"
#include "mpca/estimator.hpp"
#include "mpca/inference.hpp"
#include "mpca/spiked_model.hpp"
#include "mpca/tensor_csv.hpp"

namespace mpca {

/// Coordinate target <u_k^(q), e_i>, stored 0-based.
struct SimTarget {
  std::size_t k = 0;
  std::size_t q = 0;
  std::size_t coord = 0;

  std::string label() const {
    return "u" + std::to_string(k + 1) + "^(" + std::to_string(q + 1) + ")[" +
           std::to_string(coord + 1) + "]";
  }
};

struct SimConfig {
  std::string preset = "custom";
  ModelConfig model;
  std::size_t n = 200;
  std::size_t replicates = 300;
  std::uint64_t seed = 42;
  double alpha = 0.05;
  std::vector<SimTarget> targets;
  std::size_t bins = 30;
  AlsConfig als;
  std::size_t jobs = 1;
  /// Replicate whose data and fit are written out (for `analyze` round trips).
  std::optional<std::size_t> export_replicate;

  void validate() const {
    detail::require(replicates >= 1, "replicates must be >= 1");
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    detail::require(n >= 8, "n must be >= 8 for double sample splitting");
    detail::require(bins >= 1, "bins must be >= 1");
    detail::require(jobs >= 1, "jobs must be >= 1");
    detail::require(model.sigma.size() == model.r, "sigma must list one value per spike");
    for (const auto& t : targets) {
      detail::require(t.k < model.r, "target component out of range");
      detail::require(t.q < model.dims.size(), "target mode out of range");
      detail::require(t.coord < model.dims[t.q], "target coordinate out of range");
    }
    if (export_replicate) detail::require(*export_replicate < replicates, "export replicate out of range");
    als.validate();
  }
};

inline std::vector<SimTarget> default_targets() {
  return {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {1, 0, 0}, {1, 0, 1}};
}

inline std::vector<std::string> preset_names() {
  return {"paper-low", "paper-high", "paper-poisson-low", "paper-poisson-high"};
}

inline SimConfig make_preset(const std::string& name) {
  SimConfig c;
  c.preset = name;
  c.targets = default_targets();
  c.model.r = 2;
  c.model.sigma0 = 1.0;
  c.model.components_mode = ComponentsMode::kPaperSim;
  if (name == "paper-low") {
    c.model.dims = {10, 10};
    c.n = 200;
    c.model.sigma = {2.0, 2.0};
  } else if (name == "paper-high") {
    c.model.dims = {50, 50};
    c.n = 400;
    c.model.sigma = {3.0, 3.0};
  } else if (name == "paper-poisson-low") {
    c.model.dims = {10, 10};
    c.n = 400;
    c.model.sigma = {3.0, 3.0};
    c.model.noise = NoiseDistribution::kCenteredPoisson;
  } else if (name == "paper-poisson-high") {
    c.model.dims = {50, 50};
    c.n = 400;
    c.model.sigma = {3.0, 3.0};
    c.model.noise = NoiseDistribution::kCenteredPoisson;
  } else {
    throw InvalidInput("unknown preset '" + name + "'");
  }
  return c;
}

/// Config from JSON: a named preset (if any) with the listed fields
/// overriding it. Target triples are 1-based.
inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  if (j.contains("preset")) {
    c = make_preset(j.at("preset").get<std::string>());
  } else {
    c.targets = default_targets();
  }
  try {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("dims")) c.model.dims = j.at("dims").get<Dims>();
    if (j.contains("r")) c.model.r = j.at("r").get<std::size_t>();
    if (j.contains("sigma")) c.model.sigma = j.at("sigma").get<std::vector<double>>();
    if (j.contains("sigma0")) c.model.sigma0 = j.at("sigma0").get<double>();
    if (j.contains("noise")) c.model.noise = parse_noise(j.at("noise").get<std::string>());
    if (j.contains("components"))
      c.model.components_mode = parse_components_mode(j.at("components").get<std::string>());
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    if (j.contains("replicates")) c.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("bins")) c.bins = j.at("bins").get<std::size_t>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<std::size_t>();
    if (j.contains("n_restarts")) c.als.n_restarts = j.at("n_restarts").get<int>();
    if (j.contains("max_iters")) c.als.max_iters = j.at("max_iters").get<int>();
    if (j.contains("rel_tol")) c.als.rel_tol = j.at("rel_tol").get<double>();
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j.at("targets")) {
        const auto v = t.get<std::vector<std::size_t>>();
        detail::require(v.size() == 3 && v[0] >= 1 && v[1] >= 1 && v[2] >= 1,
                        "targets are 1-based triples [k, q, coord]");
        c.targets.push_back({v[0] - 1, v[1] - 1, v[2] - 1});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  return c;
}

inline nlohmann::json to_json(const SimConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["dims"] = c.model.dims;
  j["r"] = c.model.r;
  j["sigma"] = c.model.sigma;
  j["sigma0"] = c.model.sigma0;
  j["noise"] = to_string(c.model.noise);
  j["components"] = to_string(c.model.components_mode);
  j["n"] = c.n;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["bins"] = c.bins;
  j["n_restarts"] = c.als.n_restarts;
  j["max_iters"] = c.als.max_iters;
  j["rel_tol"] = c.als.rel_tol;
  auto ts = nlohmann::json::array();
  for (const auto& t : c.targets) ts.push_back({t.k + 1, t.q + 1, t.coord + 1});
  j["targets"] = ts;
  return j;
}

// ---------------------------------------------------------------------------
// Per-replicate work

/// Seeds derived from a replicate seed s: data uses s itself.
inline std::uint64_t als_seed_for(std::uint64_t s) { return mix_seed(s, 1); }
inline std::uint64_t split_seed_for(std::uint64_t s) { return mix_seed(s, 2); }

inline const std::vector<Regime>& sim_regimes() {
  static const std::vector<Regime> all{Regime::kA, Regime::kB, Regime::kC};
  return all;
}

struct TargetRecord {
  bool ok = false;
  double point = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool covered = false;
  bool reject = false;
};

struct RegimeRecord {
  std::optional<std::string> error;
  /// order[k] = bundle component placed in truth slot k.
  std::vector<std::size_t> order;
  /// <e_k^(1), u_k^(1)> after ordering and sign alignment (e = the
  /// regime's direction, not scaled by any bias factor).
  std::vector<double> inner_truth;
  std::vector<TargetRecord> targets;
};

struct ReplicateRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  double sigma0_sq_hat = 0.0;
  std::vector<double> sigma_sq_hat;
  /// Mode-1 bias factors per truth slot (regime B/C ordering).
  std::vector<std::optional<double>> b_explicit;
  std::vector<std::optional<double>> b_empirical;
  std::map<Regime, RegimeRecord> regimes;
};

namespace detail {

inline const std::vector<UnitVector>& regime_directions(const ComponentEstimates& c, Regime r) {
  return r == Regime::kA ? c.tilde : c.check;
}

/// Greedy truth ordering by mode-1 sin angle.
inline std::vector<std::size_t> truth_order(const EstimateBundle& b, const SpikedModel& model,
                                            Regime regime) {
  std::vector<std::size_t> order;
  std::vector<bool> used(b.r(), false);
  for (std::size_t k = 0; k < model.r(); ++k) {
    const Vector& u = model.components()[k].factors[0].coords();
    std::size_t arg = b.r();
    double best = 2.0;
    for (std::size_t j = 0; j < b.r(); ++j) {
      if (used[j]) continue;
      const double s = sin_angle(regime_directions(b.components[j], regime)[0].coords(), u);
      if (s < best) {
        best = s;
        arg = j;
      }
    }
    used[arg] = true;
    order.push_back(arg);
  }
  return order;
}

}  // namespace detail

inline ReplicateRecord run_replicate(const SimConfig& cfg, const SpikedModel& model,
                                     std::size_t index, EstimateBundle* bundle_out = nullptr,
                                     std::optional<SampleSet>* data_out = nullptr) {
  ReplicateRecord rec;
  rec.index = index;
  rec.seed = cfg.seed + index;
  try {
    const SampleSet data = sample(model, cfg.n, cfg.model.noise, rec.seed, false);
    AlsConfig als = cfg.als;
    als.seed = als_seed_for(rec.seed);
    BundleOptions opts;
    opts.split_seed = split_seed_for(rec.seed);
    EstimateBundle b = estimate_bundle(data, model.r(), als, opts);
    rec.sigma0_sq_hat = b.variances.sigma0_sq_hat;

    for (Regime regime : sim_regimes()) {
      RegimeRecord rr;
      try {
        rr.order = detail::truth_order(b, model, regime);
        for (std::size_t k = 0; k < model.r(); ++k) {
          const auto& dirs = detail::regime_directions(b.components[rr.order[k]], regime);
          rr.inner_truth.push_back(
              std::abs(dirs[0].coords().dot(model.components()[k].factors[0].coords())));
        }
        for (const auto& t : cfg.targets) {
          TargetRecord tr;
          const std::size_t est = rr.order[t.k];
          const auto& dirs = detail::regime_directions(b.components[est], regime);
          const Vector& u = model.components()[t.k].factors[t.q].coords();
          const double sign = dirs[t.q].coords().dot(u) < 0.0 ? -1.0 : 1.0;
          const auto res = infer_linear_form(
              b, LinearFormTarget::coordinate(est, t.q, model.dims()[t.q], t.coord), cfg.alpha,
              regime);
          tr.ok = true;
          tr.point = sign * res.point;
          tr.se = res.se;
          tr.lo = sign > 0 ? res.lo : -res.hi;
          tr.hi = sign > 0 ? res.hi : -res.lo;
          const double truth = u(static_cast<Eigen::Index>(t.coord));
          tr.covered = tr.lo <= truth && truth <= tr.hi;
          tr.reject = res.reject;
          rr.targets.push_back(tr);
        }
      } catch (const Error& e) {
        rr.error = e.what();
        rr.targets.assign(cfg.targets.size(), TargetRecord{});
      }
      rec.regimes[regime] = std::move(rr);
    }

    const auto order_b = rec.regimes[Regime::kB].order.empty()
                             ? detail::truth_order(b, model, Regime::kB)
                             : rec.regimes[Regime::kB].order;
    for (std::size_t k = 0; k < model.r(); ++k) {
      const auto& c = b.components[order_b[k]];
      rec.sigma_sq_hat.push_back(b.variances.sigma_sq_hat[order_b[k]]);
      rec.b_explicit.push_back(c.b_explicit.empty() ? std::nullopt : c.b_explicit[0]);
      rec.b_empirical.push_back(c.b_empirical.empty() ? std::nullopt : c.b_empirical[0]);
    }
    if (bundle_out) *bundle_out = b;
    if (data_out) *data_out = data;
  } catch (const Error& e) {
    rec.error = e.what();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct TargetSummary {
  SimTarget target;
  double truth = 0.0;
  std::size_t count = 0;
  double mean = 0.0;
  /// n times the sample variance of the recorded points.
  double n_var = 0.0;
  std::size_t covered = 0;
  std::size_t rejected = 0;
  DensityOverlay overlay;
  std::vector<HistogramBin> bins;
};

struct RegimeSummary {
  Regime regime = Regime::kA;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<TargetSummary> targets;
  /// n times the sample covariance between target pairs (complete cases).
  std::vector<std::vector<double>> n_cov;
  std::vector<double> mean_inner_truth;
};

struct SimReport {
  SimConfig config;
  std::vector<ReplicateRecord> replicates;
  std::size_t failed = 0;
  std::vector<RegimeSummary> regimes;
  /// Mode-1 means over successful replicates, per truth slot.
  std::vector<double> mean_b_explicit;
  std::vector<double> mean_b_empirical;
  /// Share of replicates with |b_hat - b| <= 3/sqrt(n), component 1 mode 1.
  double bias_agreement = 0.0;
  double seconds = 0.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double cov_of(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return 0.0;
  const double mx = mean_of(x), my = mean_of(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

/// Equal-width bins spanning [min, max] of the values; the last bin is closed.
inline std::vector<HistogramBin> histogram(const std::vector<double>& x, std::size_t nbins) {
  std::vector<HistogramBin> out;
  if (x.empty()) return out;
  double lo = *std::min_element(x.begin(), x.end());
  double hi = *std::max_element(x.begin(), x.end());
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double w = (hi - lo) / static_cast<double>(nbins);
  for (std::size_t i = 0; i < nbins; ++i)
    out.push_back({lo + w * static_cast<double>(i),
                   i + 1 == nbins ? hi : lo + w * static_cast<double>(i + 1), 0});
  for (double v : x) {
    auto i = static_cast<std::size_t>((v - lo) / w);
    out[std::min(i, nbins - 1)].count++;
  }
  return out;
}

}  // namespace detail

inline SimReport summarize(const SimConfig& cfg, const SpikedModel& model,
                           std::vector<ReplicateRecord> reps) {
  SimReport rep;
  rep.config = cfg;
  const double n = static_cast<double>(cfg.n);
  for (const auto& r : reps)
    if (r.error) rep.failed++;

  for (Regime regime : sim_regimes()) {
    RegimeSummary rs;
    rs.regime = regime;
    std::vector<std::vector<double>> points(cfg.targets.size());
    std::vector<std::vector<double>> inner(model.r());
    std::vector<const ReplicateRecord*> complete;
    for (const auto& r : reps) {
      if (r.error) continue;
      const auto& rr = r.regimes.at(regime);
      if (rr.error) {
        rs.failed++;
        continue;
      }
      rs.ok++;
      complete.push_back(&r);
      for (std::size_t t = 0; t < cfg.targets.size(); ++t) points[t].push_back(rr.targets[t].point);
      for (std::size_t k = 0; k < model.r(); ++k) inner[k].push_back(rr.inner_truth[k]);
    }
    const std::size_t n_eff = regime == Regime::kA ? cfg.n : cfg.n - cfg.n % 2;
    for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
      TargetSummary ts;
      ts.target = cfg.targets[t];
      const Vector& u = model.components()[ts.target.k].factors[ts.target.q].coords();
      ts.truth = u(static_cast<Eigen::Index>(ts.target.coord));
      ts.count = points[t].size();
      ts.mean = detail::mean_of(points[t]);
      ts.n_var = n * detail::cov_of(points[t], points[t]);
      for (const auto* r : complete) {
        const auto& tr = r->regimes.at(regime).targets[t];
        ts.covered += tr.covered;
        ts.rejected += tr.reject;
      }
      ts.overlay = theoretical_density(
          model.sigma0(), model.sigma()[ts.target.k], u,
          UnitVector::basis(model.dims()[ts.target.q], ts.target.coord).coords(), n_eff);
      ts.bins = detail::histogram(points[t], cfg.bins);
      rs.targets.push_back(std::move(ts));
    }
    rs.n_cov.assign(cfg.targets.size(), std::vector<double>(cfg.targets.size(), 0.0));
    for (std::size_t a = 0; a < cfg.targets.size(); ++a)
      for (std::size_t c = 0; c < cfg.targets.size(); ++c)
        rs.n_cov[a][c] = n * detail::cov_of(points[a], points[c]);
    for (std::size_t k = 0; k < model.r(); ++k) rs.mean_inner_truth.push_back(detail::mean_of(inner[k]));
    rep.regimes.push_back(std::move(rs));
  }

  std::vector<std::vector<double>> be(model.r()), bh(model.r());
  std::size_t agree = 0, pairs = 0;
  for (const auto& r : reps) {
    if (r.error) continue;
    for (std::size_t k = 0; k < model.r(); ++k) {
      if (r.b_explicit[k]) be[k].push_back(*r.b_explicit[k]);
      if (r.b_empirical[k]) bh[k].push_back(*r.b_empirical[k]);
    }
    pairs++;
    if (r.b_explicit[0] && r.b_empirical[0] &&
        std::abs(*r.b_empirical[0] - *r.b_explicit[0]) <= 3.0 / std::sqrt(n))
      agree++;
  }
  for (std::size_t k = 0; k < model.r(); ++k) {
    rep.mean_b_explicit.push_back(detail::mean_of(be[k]));
    rep.mean_b_empirical.push_back(detail::mean_of(bh[k]));
  }
  rep.bias_agreement = pairs ? static_cast<double>(agree) / static_cast<double>(pairs) : 0.0;
  rep.replicates = std::move(reps);
  return rep;
}

/// Runs all replicates on cfg.jobs threads; results are indexed by
/// replicate, so the report does not depend on scheduling.
inline SimReport simulate(const SimConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc = cfg.model;
  const SpikedModel model = mc.build();
  std::vector<ReplicateRecord> reps(cfg.replicates);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.replicates; i = next++) reps[i] = run_replicate(cfg, model, i);
  };
  const std::size_t jobs = std::min(cfg.jobs, cfg.replicates);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  SimReport rep = summarize(cfg, model, std::move(reps));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// More than 10% of replicates failed.
inline bool run_failed(const SimReport& r) {
  return 10 * r.failed > r.config.replicates;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json opt_json(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

/// Everything except wall-clock time; byte-identical for equal config and seed.
inline nlohmann::json report_json(const SimReport& r) {
  nlohmann::json j;
  j["config"] = to_json(r.config);
  j["replicates_failed"] = r.failed;
  j["run_failed"] = run_failed(r);
  j["mean_b_explicit_mode1"] = r.mean_b_explicit;
  j["mean_b_empirical_mode1"] = r.mean_b_empirical;
  j["bias_agreement_share"] = r.bias_agreement;
  auto regs = nlohmann::json::array();
  for (const auto& rs : r.regimes) {
    nlohmann::json jr;
    jr["regime"] = to_string(rs.regime);
    jr["ok"] = rs.ok;
    jr["failed"] = rs.failed;
    jr["mean_inner_truth_mode1"] = rs.mean_inner_truth;
    jr["n_cov"] = rs.n_cov;
    auto ts = nlohmann::json::array();
    for (const auto& t : rs.targets) {
      nlohmann::json jt;
      jt["target"] = t.target.label();
      jt["k"] = t.target.k + 1;
      jt["q"] = t.target.q + 1;
      jt["coord"] = t.target.coord + 1;
      jt["truth"] = t.truth;
      jt["count"] = t.count;
      jt["mean"] = t.mean;
      jt["n_var"] = t.n_var;
      jt["covered"] = t.covered;
      jt["rejected"] = t.rejected;
      jt["overlay"] = {{"mean", t.overlay.mean}, {"sd", t.overlay.sd}};
      ts.push_back(std::move(jt));
    }
    jr["targets"] = std::move(ts);
    regs.push_back(std::move(jr));
  }
  j["regimes"] = std::move(regs);
  auto reps = nlohmann::json::array();
  for (const auto& rec : r.replicates) {
    nlohmann::json jr;
    jr["index"] = rec.index;
    jr["seed"] = rec.seed;
    if (rec.error) {
      jr["error"] = *rec.error;
      reps.push_back(std::move(jr));
      continue;
    }
    jr["sigma0_sq_hat"] = rec.sigma0_sq_hat;
    jr["sigma_sq_hat"] = rec.sigma_sq_hat;
    auto be = nlohmann::json::array(), bh = nlohmann::json::array();
    for (std::size_t k = 0; k < rec.b_explicit.size(); ++k) {
      be.push_back(opt_json(rec.b_explicit[k]));
      bh.push_back(opt_json(rec.b_empirical[k]));
    }
    jr["b_explicit_mode1"] = std::move(be);
    jr["b_empirical_mode1"] = std::move(bh);
    for (const auto& [regime, rr] : rec.regimes) {
      nlohmann::json jg;
      if (rr.error) {
        jg["error"] = *rr.error;
      } else {
        jg["inner_truth_mode1"] = rr.inner_truth;
        auto pts = nlohmann::json::array();
        for (const auto& t : rr.targets) pts.push_back(t.point);
        jg["points"] = std::move(pts);
      }
      jr[to_string(regime)] = std::move(jg);
    }
    reps.push_back(std::move(jr));
  }
  j["replicates"] = std::move(reps);
  return j;
}

inline void write_histogram_csv(std::ostream& out, const SimReport& r) {
  out << "regime,k,q,coord,bin,lo,hi,count,overlay_mean,overlay_sd\n";
  for (const auto& rs : r.regimes)
    for (const auto& t : rs.targets)
      for (std::size_t b = 0; b < t.bins.size(); ++b)
        out << to_string(rs.regime) << ',' << t.target.k + 1 << ',' << t.target.q + 1 << ','
            << t.target.coord + 1 << ',' << b + 1 << ',' << format_double(t.bins[b].lo) << ','
            << format_double(t.bins[b].hi) << ',' << t.bins[b].count << ','
            << format_double(t.overlay.mean) << ',' << format_double(t.overlay.sd) << '\n';
}

inline void write_coverage_csv(std::ostream& out, const SimReport& r) {
  out << "regime,k,q,coord,truth,replicates,covered,coverage,rejected,rejection_rate\n";
  for (const auto& rs : r.regimes)
    for (const auto& t : rs.targets) {
      const double m = static_cast<double>(std::max<std::size_t>(t.count, 1));
      out << to_string(rs.regime) << ',' << t.target.k + 1 << ',' << t.target.q + 1 << ','
          << t.target.coord + 1 << ',' << format_double(t.truth) << ',' << t.count << ','
          << t.covered << ',' << format_double(static_cast<double>(t.covered) / m) << ','
          << t.rejected << ',' << format_double(static_cast<double>(t.rejected) / m) << '\n';
    }
}

/// Full-data fit of one replicate, in the form `analyze` emits.
inline nlohmann::json fit_json(const EstimateBundle& b) {
  nlohmann::json j;
  auto comps = nlohmann::json::array();
  for (const auto& c : b.components) {
    auto modes = nlohmann::json::array();
    for (const auto& f : c.hat.factors) {
      std::vector<double> v(f.coords().data(), f.coords().data() + f.coords().size());
      modes.push_back(v);
    }
    comps.push_back({{"hat", std::move(modes)}, {"objective", c.hat.value}});
  }
  j["components"] = std::move(comps);
  j["sigma0_sq_hat"] = b.variances.sigma0_sq_hat;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + p.string());
  f << s;
}

inline void write_outputs(const std::filesystem::path& dir, const SimReport& r) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(r).dump(2) + "\n");
  write_text(dir / "timing.json",
             nlohmann::json{{"seconds", r.seconds}, {"replicates", r.config.replicates}}.dump(2) + "\n");
  std::ostringstream h, c;
  write_histogram_csv(h, r);
  write_coverage_csv(c, r);
  write_text(dir / "histogram.csv", h.str());
  write_text(dir / "coverage.csv", c.str());

  if (r.config.export_replicate) {
    const std::size_t i = *r.config.export_replicate;
    const SpikedModel model = ModelConfig(r.config.model).build();
    EstimateBundle b;
    std::optional<SampleSet> data;
    const auto rec = run_replicate(r.config, model, i, &b, &data);
    if (rec.error) throw NumericalFailure("export replicate failed: " + *rec.error);
    std::ostringstream d;
    write_samples_csv(d, *data);
    write_text(dir / ("replicate_" + std::to_string(i + 1) + "_data.csv"), d.str());
    auto fj = fit_json(b);
    fj["seed"] = r.config.seed + i;
    write_text(dir / ("replicate_" + std::to_string(i + 1) + "_fit.json"), fj.dump(2) + "\n");
  }
}

}  // namespace mpca
