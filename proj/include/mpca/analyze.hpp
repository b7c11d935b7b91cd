#pragma once

// Fitting a user-supplied tensor: the first mode indexes observations, the
// remaining modes form each observation.
//
// Preprocessing runs in this order, each step only when enabled:
//   1. drop observations whose share of missing cells exceeds the threshold
//   2. log of positive values (nonpositive cells become missing, flagged)
//   3. per series: center to mean 0 and scale to mean absolute deviation 1
//   4. optional per-cell centering across observations
//   5. remaining missing cells become 0
// A series is every cell sharing the same index in the last mode (an
// indicator, pooled over observations and the other modes). A series with
// zero deviation cannot be scaled; it is set to 0 and reported.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpca/debias.hpp"
#include "mpca/inference.hpp"
#include "mpca/simulate.hpp"
#include "mpca/tensor_csv.hpp"

namespace mpca {

struct AnalyzeConfig {
  /// Full dims, observations first; empty means "implied by the file".
  Dims dims;
  std::size_t r = 1;
  Regime regime = Regime::kAuto;
  double alpha = 0.05;
  bool log_transform = false;
  bool mad_standardize = false;
  bool center = false;
  double drop_missing_threshold = 0.05;
  std::uint64_t seed = 42;
  AlsConfig als;

  void validate() const {
    detail::require(r >= 1, "r must be >= 1");
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    detail::require(drop_missing_threshold >= 0.0 && drop_missing_threshold <= 1.0,
                    "drop-missing threshold must lie in [0, 1]");
    if (!dims.empty()) detail::require(dims.size() >= 2, "dims need an observation mode plus data modes");
    als.validate();
  }
};

struct PreprocessReport {
  std::size_t n_input = 0;
  std::vector<std::size_t> dropped_observations;  // 1-based
  std::size_t missing_cells = 0;
  std::size_t nonpositive_cells = 0;
  std::vector<std::size_t> excluded_series;  // 1-based last-mode indices
};

/// Observations with a NaN marking each missing cell.
struct RawPanel {
  Dims obs_dims;
  std::size_t n = 0;
  std::vector<double> values;  // n * prod(obs_dims), NaN = missing
};

/// Cells absent from the file are treated as missing here.
inline RawPanel panel_from_table(const LongTable& t, Dims dims) {
  if (dims.empty()) dims = t.implied_dims();
  detail::require(dims.size() == t.arity(), "CSV arity does not match --dims");
  detail::require(dims.size() >= 2, "input needs an observation mode plus data modes");
  RawPanel p;
  p.n = dims[0];
  p.obs_dims.assign(dims.begin() + 1, dims.end());
  p.values.assign(dims_product(dims), std::numeric_limits<double>::quiet_NaN());
  Tensor shape(dims);
  for (std::size_t row = 0; row < t.index.size(); ++row) {
    for (std::size_t c = 0; c < dims.size(); ++c)
      if (t.index[row][c] >= dims[c])
        throw InvalidInput("CSV index exceeds dims " + dims_to_string(dims));
    p.values[shape.offset(t.index[row])] = t.values[row];
  }
  return p;
}

inline SampleSet preprocess(RawPanel p, const AnalyzeConfig& cfg, PreprocessReport& rep) {
  const std::size_t m = dims_product(p.obs_dims);
  rep.n_input = p.n;

  // 1. missing-share filter
  {
    std::vector<double> kept;
    std::size_t n_kept = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
      std::size_t miss = 0;
      for (std::size_t j = 0; j < m; ++j) miss += std::isnan(p.values[i * m + j]);
      if (static_cast<double>(miss) > cfg.drop_missing_threshold * static_cast<double>(m)) {
        rep.dropped_observations.push_back(i + 1);
        continue;
      }
      kept.insert(kept.end(), p.values.begin() + static_cast<std::ptrdiff_t>(i * m),
                  p.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
      ++n_kept;
    }
    if (n_kept == 0) throw InvalidInput("every observation exceeds the missing-data threshold");
    p.values = std::move(kept);
    p.n = n_kept;
  }

  // 2. log
  if (cfg.log_transform)
    for (double& x : p.values) {
      if (std::isnan(x)) continue;
      if (x > 0.0) {
        x = std::log(x);
      } else {
        x = std::numeric_limits<double>::quiet_NaN();
        rep.nonpositive_cells++;
      }
    }

  // 3. per-series mean / mean absolute deviation
  if (cfg.mad_standardize) {
    const std::size_t s = p.obs_dims.back();
    std::vector<double> sum(s, 0.0), dev(s, 0.0);
    std::vector<std::size_t> cnt(s, 0);
    for (std::size_t c = 0; c < p.values.size(); ++c)
      if (!std::isnan(p.values[c])) {
        sum[c % s] += p.values[c];
        cnt[c % s]++;
      }
    std::vector<double> mean(s, 0.0);
    for (std::size_t j = 0; j < s; ++j) mean[j] = cnt[j] ? sum[j] / static_cast<double>(cnt[j]) : 0.0;
    for (std::size_t c = 0; c < p.values.size(); ++c)
      if (!std::isnan(p.values[c])) dev[c % s] += std::abs(p.values[c] - mean[c % s]);
    std::vector<bool> excluded(s, false);
    for (std::size_t j = 0; j < s; ++j) {
      const double mad = cnt[j] ? dev[j] / static_cast<double>(cnt[j]) : 0.0;
      if (!(mad > 0.0)) {
        excluded[j] = true;
        rep.excluded_series.push_back(j + 1);
        continue;
      }
      dev[j] = mad;
    }
    for (std::size_t c = 0; c < p.values.size(); ++c) {
      const std::size_t j = c % s;
      if (excluded[j]) p.values[c] = 0.0;
      else if (!std::isnan(p.values[c])) p.values[c] = (p.values[c] - mean[j]) / dev[j];
    }
  }

  // 4. per-cell centering
  if (cfg.center) {
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < p.n; ++i)
        if (!std::isnan(p.values[i * m + j])) {
          sum += p.values[i * m + j];
          cnt++;
        }
      if (cnt == 0) continue;
      const double mean = sum / static_cast<double>(cnt);
      for (std::size_t i = 0; i < p.n; ++i)
        if (!std::isnan(p.values[i * m + j])) p.values[i * m + j] -= mean;
    }
  }

  // 5. missing -> 0
  for (double& x : p.values)
    if (std::isnan(x)) {
      x = 0.0;
      rep.missing_cells++;
    }
  return SampleSet(p.obs_dims, p.n, std::move(p.values));
}

struct LoadingRow {
  std::size_t k = 0, q = 0, i = 0;
  double hat = 0.0;
  std::optional<InferenceResult> ci;
};

struct AnalyzeResult {
  AnalyzeConfig config;
  Regime regime = Regime::kA;
  PreprocessReport prep;
  EstimateBundle bundle;
  /// mean ||X_i||_F^2 after preprocessing
  double total_variation = 0.0;
  std::vector<double> share;
  std::vector<LoadingRow> loadings;
  std::vector<std::string> notes;
};

inline AnalyzeResult analyze(const SampleSet& data, const AnalyzeConfig& cfg,
                             PreprocessReport prep = {}) {
  cfg.validate();
  AnalyzeResult out;
  out.config = cfg;
  out.prep = std::move(prep);
  for (auto d : data.dims()) detail::require(cfg.r < d, "r must be smaller than every observation mode dimension");

  AlsConfig als = cfg.als;
  als.seed = als_seed_for(cfg.seed);
  BundleOptions opts;
  opts.split_seed = split_seed_for(cfg.seed);
  opts.split = data.n() >= 8;
  opts.quarters = opts.split;
  out.bundle = estimate_bundle(data, cfg.r, als, opts);
  out.notes = out.bundle.notes;
  out.regime = cfg.regime == Regime::kAuto ? auto_regime(data.dims(), data.n()) : cfg.regime;
  if (!opts.split && out.regime != Regime::kA) {
    out.notes.push_back("fewer than 8 observations: inference falls back to regime A");
    out.regime = Regime::kA;
  }

  double tv = 0.0;
  for (double x : data.stacked()) tv += x * x;
  out.total_variation = tv / static_cast<double>(data.n());
  for (std::size_t k = 0; k < cfg.r; ++k)
    out.share.push_back(out.total_variation > 0.0
                            ? out.bundle.variances.sigma_sq_hat[k] / out.total_variation
                            : 0.0);

  for (std::size_t k = 0; k < cfg.r; ++k)
    for (std::size_t q = 0; q < data.order(); ++q)
      for (std::size_t i = 0; i < data.dims()[q]; ++i) {
        LoadingRow row{k, q, i, out.bundle.components[k].hat.factors[q][i], std::nullopt};
        try {
          row.ci = infer_linear_form(out.bundle,
                                     LinearFormTarget::coordinate(k, q, data.dims()[q], i),
                                     cfg.alpha, out.regime);
        } catch (const InferenceUnavailable&) {
        }
        out.loadings.push_back(row);
      }
  for (std::size_t k = 0; k < cfg.r; ++k)
    if (out.bundle.variances.clipped[k])
      out.notes.push_back("component " + std::to_string(k + 1) +
                          ": no confidence intervals (spike variance estimate clipped)");
  return out;
}

inline AnalyzeResult analyze_csv(std::istream& in, const AnalyzeConfig& cfg) {
  PreprocessReport prep;
  const SampleSet data = preprocess(panel_from_table(read_long_table(in), cfg.dims), cfg, prep);
  return analyze(data, cfg, std::move(prep));
}

inline void write_loadings_csv(std::ostream& out, const AnalyzeResult& r) {
  out << "component,mode,index,hat,estimate,se,lo,hi\n";
  for (const auto& l : r.loadings) {
    out << l.k + 1 << ',' << l.q + 1 << ',' << l.i + 1 << ',' << format_double(l.hat);
    if (l.ci)
      out << ',' << format_double(l.ci->point) << ',' << format_double(l.ci->se) << ','
          << format_double(l.ci->lo) << ',' << format_double(l.ci->hi);
    else
      out << ",NA,NA,NA,NA";
    out << '\n';
  }
}

inline nlohmann::json components_json(const AnalyzeResult& r) {
  nlohmann::json j = fit_json(r.bundle);
  for (std::size_t k = 0; k < r.bundle.r(); ++k) {
    auto& c = j["components"][k];
    const auto& comp = r.bundle.components[k];
    c["sigma_sq_hat"] = r.bundle.variances.sigma_sq_hat[k];
    c["clipped"] = static_cast<bool>(r.bundle.variances.clipped[k]);
    c["explained_share_heuristic"] = r.share[k];
    auto be = nlohmann::json::array(), bh = nlohmann::json::array();
    for (std::size_t q = 0; q < comp.b_explicit.size(); ++q) be.push_back(opt_json(comp.b_explicit[q]));
    for (std::size_t q = 0; q < comp.b_empirical.size(); ++q) bh.push_back(opt_json(comp.b_empirical[q]));
    c["b_explicit"] = std::move(be);
    c["b_empirical"] = std::move(bh);
  }
  return j;
}

inline nlohmann::json analyze_report_json(const AnalyzeResult& r) {
  nlohmann::json j;
  const auto& c = r.config;
  j["config"] = {{"dims", c.dims},
                 {"r", c.r},
                 {"regime_requested", to_string(c.regime)},
                 {"alpha", c.alpha},
                 {"log", c.log_transform},
                 {"mad", c.mad_standardize},
                 {"center", c.center},
                 {"drop_missing_threshold", c.drop_missing_threshold},
                 {"seed", c.seed}};
  j["regime"] = to_string(r.regime);
  j["n_used"] = r.bundle.n;
  j["observation_dims"] = r.bundle.dims;
  j["preprocessing"] = {{"n_input", r.prep.n_input},
                        {"dropped_observations", r.prep.dropped_observations},
                        {"missing_cells_set_to_zero", r.prep.missing_cells},
                        {"nonpositive_cells", r.prep.nonpositive_cells},
                        {"excluded_series", r.prep.excluded_series}};
  j["sigma0_sq_hat"] = r.bundle.variances.sigma0_sq_hat;
  j["sigma_sq_hat"] = r.bundle.variances.sigma_sq_hat;
  j["total_variation"] = r.total_variation;
  j["explained_share_heuristic"] = r.share;
  j["explained_share_definition"] =
      "sigma_k^2 estimate divided by the mean squared Frobenius norm of the preprocessed observations";
  j["notes"] = r.notes;
  return j;
}

inline void write_analyze_outputs(const std::filesystem::path& dir, const AnalyzeResult& r) {
  std::filesystem::create_directories(dir);
  std::ostringstream l;
  write_loadings_csv(l, r);
  write_text(dir / "loadings.csv", l.str());
  write_text(dir / "components.json", components_json(r).dump(2) + "\n");
  write_text(dir / "report.json", analyze_report_json(r).dump(2) + "\n");
}

}  // namespace mpca
