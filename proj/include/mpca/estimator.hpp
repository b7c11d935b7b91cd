#pragma once

// Sample multiway principal components.
//
// The k-th component maximizes the deflated sample variance
//
//   U_k = argmax_{W rank one, ||W||_F = 1} Sigma_check_k(W, W)
//
// over rank-one tensors; Sigma_check_k restricts every mode to the
// orthocomplement of the previously extracted factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mpca/covariance.hpp"
#include "mpca/linalg.hpp"
#include "mpca/random.hpp"
#include "mpca/spiked_model.hpp"

namespace mpca {

enum class InitMode { kRandom, kContractedEig };

struct AlsConfig {
  int max_iters = 500;
  /// Relative objective change between sweeps below which we may stop.
  double rel_tol = 1e-10;
  /// Largest per-mode factor change between sweeps below which we may stop.
  double factor_tol = 1e-10;
  int n_restarts = 8;
  InitMode init_mode = InitMode::kContractedEig;
  std::uint64_t seed = 0;
  PowerIterationOptions power{};
  /// Abandon restarts stalled far below an already converged one.
  bool prune_stalled = true;
  /// Keep the objective after every mode update for every restart.
  bool record_trace = false;
  /// Test hook applied to each freshly computed mode update.
  std::function<void(std::size_t mode, Vector& update)> update_hook;

  void validate() const {
    detail::require(max_iters >= 1, "AlsConfig: max_iters must be >= 1");
    detail::require(rel_tol > 0.0, "AlsConfig: rel_tol must be > 0");
    detail::require(factor_tol > 0.0, "AlsConfig: factor_tol must be > 0");
    detail::require(n_restarts >= 1, "AlsConfig: n_restarts must be >= 1");
  }
};

struct AlsResult {
  RankOnePC pc;
  bool converged = false;
  int sweeps = 0;
  std::size_t restart = 0;
  /// traces[restart] = objective after every mode update (record_trace only).
  std::vector<std::vector<double>> traces;
};

namespace detail {

inline Vector random_direction(Rng& rng, const CovarianceView& view, std::size_t q) {
  const auto d = static_cast<Eigen::Index>(view.dims()[q]);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
    v = view.project(q, v);
    const double nrm = v.norm();
    if (nrm > 1e-8) return v / nrm;
  }
  throw NumericalFailure("no admissible direction left in mode " + std::to_string(q));
}

/// Flips pairs of modes so that every mode after the first has a
/// nonnegative largest-magnitude entry. The rank-one tensor is unchanged
/// except possibly for the overall sign when p == 1 (left untouched then).
inline void canonicalize_signs(std::vector<Vector>& ws) {
  for (std::size_t q = 1; q < ws.size(); ++q) {
    Eigen::Index j;
    ws[q].cwiseAbs().maxCoeff(&j);
    if (ws[q](j) < 0.0) {
      ws[q] = -ws[q];
      ws[0] = -ws[0];
    }
  }
}

struct RestartOutcome {
  std::vector<Vector> factors;
  double objective = -std::numeric_limits<double>::infinity();
  bool converged = false;
  /// Stopped early inside the basin of an earlier restart's solution.
  bool duplicate = false;
  /// Abandoned while stalled far below an earlier restart's objective.
  bool pruned = false;
  int sweeps = 0;
  std::vector<double> trace;
};

/// True when every mode of `w` is within `cos_tol` of the same solution.
inline bool in_basin(const std::vector<Vector>& w, const std::vector<Vector>& solution,
                     double cos_tol) {
  for (std::size_t q = 0; q < w.size(); ++q)
    if (std::abs(w[q].dot(solution[q])) < 1.0 - cos_tol) return false;
  return true;
}

inline RestartOutcome run_restart(const CovarianceView& view, const AlsConfig& cfg,
                                  std::size_t restart,
                                  const std::vector<std::vector<Vector>>& solutions,
                                  double best_converged = -std::numeric_limits<double>::infinity()) {
  const std::size_t p = view.order();
  Rng rng(mix_seed(cfg.seed, restart));
  RestartOutcome out;
  std::vector<Vector> w(p);
  for (std::size_t q = 0; q < p; ++q) w[q] = random_direction(rng, view, q);
  const bool warm_first = !(restart == 0 && cfg.init_mode == InitMode::kContractedEig);

  double prev = -std::numeric_limits<double>::infinity();
  double obj = prev;
  for (int sweep = 1; sweep <= cfg.max_iters; ++sweep) {
    double change = 0.0;
    for (std::size_t q = 0; q < p; ++q) {
      std::vector<Vector> others;
      for (std::size_t m = 0; m < p; ++m)
        if (m != q) others.push_back(w[m]);
      const Matrix mq = contracted_matrix(view, others, q);
      const bool use_warm = warm_first || sweep > 1;
      EigenPair ep = leading_eigenvector(mq, use_warm ? &w[q] : nullptr, cfg.power);
      if (cfg.update_hook) cfg.update_hook(q, ep.vector);
      // Keep the orientation of the previous iterate.
      if (ep.vector.dot(w[q]) < 0.0) ep.vector = -ep.vector;
      change = std::max(change, (ep.vector - w[q]).norm());
      w[q] = std::move(ep.vector);
      obj = w[q].dot(mq * w[q]);
      if (cfg.record_trace) out.trace.push_back(obj);
    }
    out.sweeps = sweep;
    const double rel = std::abs(obj - prev) / std::max(std::abs(obj), 1e-300);
    prev = obj;
    if (sweep > 1 && rel <= cfg.rel_tol && change <= cfg.factor_tol) {
      out.converged = true;
      break;
    }
    // A restart this close to an already converged solution ends there; its
    // objective can only rise towards that solution's value, which never
    // displaces the earlier (lower-index) restart.
    if (sweep > 1 && std::any_of(solutions.begin(), solutions.end(), [&](const auto& s) {
          return in_basin(w, s, 1e-8);
        })) {
      out.duplicate = true;
      break;
    }
    // Stalled in a noise maximum: gaining under 0.1% per sweep while at less
    // than half the best objective, it cannot catch up within max_iters.
    if (cfg.prune_stalled && sweep >= 20 && obj < 0.5 * best_converged && rel < 1e-3) {
      out.pruned = true;
      break;
    }
  }
  out.factors = std::move(w);
  out.objective = obj;
  return out;
}

}  // namespace detail

/// Best rank-one direction of the (possibly deflated) sample covariance by
/// alternating power iteration: each mode is set to the leading eigenvector
/// of its contracted matrix with the other modes fixed, sweeping modes 1..p.
/// The best of cfg.n_restarts restarts is returned (ties: lowest restart).
inline AlsResult rank_one_als(const CovarianceView& view, const AlsConfig& cfg) {
  cfg.validate();
  AlsResult best;
  double best_obj = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<Vector>> solutions;
  double best_converged = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.n_restarts; ++r) {
    auto outcome =
        detail::run_restart(view, cfg, static_cast<std::size_t>(r), solutions, best_converged);
    if (cfg.record_trace) best.traces.push_back(outcome.trace);
    if (outcome.converged) {
      solutions.push_back(outcome.factors);
      best_converged = std::max(best_converged, outcome.objective);
    }
    if (outcome.duplicate || outcome.pruned) continue;
    if (outcome.objective > best_obj) {
      best_obj = outcome.objective;
      detail::canonicalize_signs(outcome.factors);
      best.pc.factors.clear();
      for (auto& f : outcome.factors) best.pc.factors.push_back(UnitVector::normalized(f));
      best.converged = outcome.converged;
      best.sweeps = outcome.sweeps;
      best.restart = static_cast<std::size_t>(r);
    }
  }
  if (!(best_obj > 0.0))
    throw NumericalFailure("rank_one_als: no direction of positive variance");
  best.pc.value = rayleigh(view, best.pc);
  return best;
}

/// Extracts r components by successive deflation. Component k uses the
/// restart seeds derived from (cfg.seed, k).
inline std::vector<RankOnePC> fit_mpca(const CovarianceView& view, std::size_t r,
                                       const AlsConfig& cfg,
                                       std::vector<AlsResult>* diagnostics = nullptr) {
  for (auto d : view.dims())
    detail::require(r <= d, "fit_mpca: r exceeds a mode dimension");
  std::vector<RankOnePC> found;
  for (std::size_t k = 0; k < r; ++k) {
    AlsConfig ck = cfg;
    ck.seed = mix_seed(cfg.seed, 0x100 + k);
    auto res = rank_one_als(view.deflated(found), ck);
    found.push_back(res.pc);
    if (diagnostics) diagnostics->push_back(std::move(res));
  }
  return found;
}

inline std::vector<RankOnePC> fit_mpca(const SampleSet& data, std::size_t r, const AlsConfig& cfg,
                                       std::vector<AlsResult>* diagnostics = nullptr) {
  return fit_mpca(CovarianceView(data), r, cfg, diagnostics);
}

// ---------------------------------------------------------------------------
// Matching estimates to ground truth

struct MatchResult {
  /// perm[k] = index of the population component matched to estimate k.
  std::vector<std::size_t> perm;
  /// signs[k][q] = sign making <u_hat_k^(q), u_perm[k]^(q)> >= 0.
  std::vector<std::vector<int>> signs;
  std::vector<double> scores;
  bool tie_broken = false;
};

/// Greedy matching: perm[k] = argmax over unmatched l of
/// sigma_l^2 |prod_q <u_l^(q), u_hat_k^(q)>|, taken in order k = 1..r.
inline MatchResult match_permutation(const std::vector<RankOnePC>& estimates,
                                     const SpikedModel& truth) {
  const std::size_t r = truth.r();
  detail::require(estimates.size() == r, "match_permutation: number of components differs");
  MatchResult out;
  std::vector<bool> used(r, false);
  for (std::size_t k = 0; k < r; ++k) {
    detail::require(estimates[k].dims() == truth.dims(), "match_permutation: dims mismatch");
    double best = -1.0;
    std::size_t arg = r;
    for (std::size_t l = 0; l < r; ++l) {
      if (used[l]) continue;
      double prod = 1.0;
      for (std::size_t q = 0; q < truth.order(); ++q)
        prod *= truth.components()[l].factors[q].coords().dot(estimates[k].factors[q].coords());
      const double score = truth.sigma()[l] * truth.sigma()[l] * std::abs(prod);
      if (score > best) {
        best = score;
        arg = l;
      } else if (score == best) {
        out.tie_broken = true;
      }
    }
    used[arg] = true;
    out.perm.push_back(arg);
    out.scores.push_back(best);
    std::vector<int> s;
    for (std::size_t q = 0; q < truth.order(); ++q)
      s.push_back(truth.components()[arg].factors[q].coords().dot(
                      estimates[k].factors[q].coords()) < 0.0
                      ? -1
                      : 1);
    out.signs.push_back(std::move(s));
  }
  return out;
}

}  // namespace mpca
