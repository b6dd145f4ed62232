#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcache/core.hpp"

namespace flowcache {

enum class CacheKind { None, Naive, Taylor, AdamsBashforth };

// How the Adams-Bashforth forecast treats the offset inside a cache window.
// PaperExact applies the binomial recursion to the stored checkpoints as-is,
// which always extrapolates one full interval D ahead. OffsetAware evaluates
// the interpolating polynomial through the stored checkpoints at the actual
// offset k, making the forecast exact on polynomial sequences at every k.
enum class ABMode { PaperExact, OffsetAware };

inline const char* to_string(CacheKind kind) {
  switch (kind) {
    case CacheKind::None: return "none";
    case CacheKind::Naive: return "naive";
    case CacheKind::Taylor: return "taylor";
    case CacheKind::AdamsBashforth: return "adams_bashforth";
  }
  return "?";
}

inline const char* to_string(ABMode mode) {
  return mode == ABMode::PaperExact ? "paper_exact" : "offset_aware";
}

struct CachePolicy {
  CacheKind kind = CacheKind::None;
  int interval = 1;  // D: solver steps between full-compute checkpoints
  int order = 0;     // m for Taylor (>= 0), j for Adams-Bashforth (>= 1)
  ABMode ab_mode = ABMode::OffsetAware;
};

inline void validate(const CachePolicy& p) {
  if (p.interval < 1) throw std::invalid_argument("cache policy: interval must be >= 1");
  if (p.kind == CacheKind::Taylor && p.order < 0)
    throw std::invalid_argument("cache policy: taylor order must be >= 0");
  if (p.kind == CacheKind::AdamsBashforth && p.order < 1)
    throw std::invalid_argument("cache policy: adams_bashforth order must be >= 1");
}

// Full-compute step indices for a K-step solve: every D-th step plus the last
// step, which is always computed fully. kind == None disables caching, so
// every step is scheduled.
inline std::vector<int> schedule(int steps, const CachePolicy& policy) {
  if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
  validate(policy);
  std::vector<int> out;
  if (policy.kind == CacheKind::None || policy.interval == 1) {
    out.resize(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) out[static_cast<std::size_t>(k)] = k;
    return out;
  }
  for (int k = 0; k < steps; k += policy.interval) out.push_back(k);
  if (out.back() != steps - 1) out.push_back(steps - 1);
  return out;
}

// Checkpoint history plus backward finite differences at the latest
// checkpoint, with NFE/forecast counters. One instance per trajectory.
template <typename Real>
class CacheState {
 public:
  explicit CacheState(CachePolicy policy) : policy_(policy) { validate(policy_); }

  const CachePolicy& policy() const { return policy_; }

  int checkpoints() const { return static_cast<int>(history_.size()); }
  int latest_step() const { return history_steps_.empty() ? -1 : history_steps_.front(); }
  int nfe() const { return nfe_; }
  int forecast_count() const { return forecasts_; }

  // Newest first: history()[0] is the latest checkpoint output.
  const std::vector<Tangent<Real>>& history() const { return history_; }
  const std::vector<int>& history_steps() const { return history_steps_; }
  // differences()[i] holds the i-th backward difference at the latest checkpoint.
  const std::vector<Tangent<Real>>& differences() const { return differences_; }

  // Record a full-compute output. Steps must be strictly increasing.
  void refresh(const Tangent<Real>& value, int step) {
    if (!history_steps_.empty() && step <= history_steps_.front())
      throw std::logic_error("cache refresh: step indices must be strictly increasing");
    const std::size_t cap = history_capacity();
    history_.insert(history_.begin(), value);
    history_steps_.insert(history_steps_.begin(), step);
    if (history_.size() > cap) {
      history_.pop_back();
      history_steps_.pop_back();
    }
    // Delta^0 <- value; Delta^i <- Delta^{i-1}_new - Delta^{i-1}_old.
    std::vector<Tangent<Real>> next;
    next.reserve(static_cast<std::size_t>(max_diff_order()) + 1);
    next.push_back(value);
    const int reachable = std::min(max_diff_order(), checkpoints() - 1);
    for (int i = 1; i <= reachable; ++i) {
      Tangent<Real> d = next[static_cast<std::size_t>(i - 1)];
      add_scaled(d, Real(-1), differences_[static_cast<std::size_t>(i - 1)]);
      next.push_back(std::move(d));
    }
    differences_ = std::move(next);
    ++nfe_;
  }

  // Forecast at `offset` steps past the latest checkpoint, per the policy.
  Tangent<Real> forecast(int offset) {
    switch (policy_.kind) {
      case CacheKind::Naive: return forecast_naive();
      case CacheKind::Taylor: return forecast_taylor(offset);
      case CacheKind::AdamsBashforth: return forecast_ab(offset);
      case CacheKind::None: break;
    }
    throw std::logic_error("forecast called with caching disabled");
  }

  Tangent<Real> forecast_naive() {
    require_nonempty();
    ++forecasts_;
    return history_.front();
  }

  // Newton backward-difference extrapolation of the checkpoint sequence,
  // evaluated `offset` steps past the latest checkpoint (checkpoint spacing is
  // the policy interval D). Exact for polynomial sequences of degree <= order.
  // order 0 degenerates to naive reuse.
  Tangent<Real> forecast_taylor(int offset) {
    require_nonempty();
    check_offset(offset);
    const int m_eff = std::min(policy_.order, checkpoints() - 1);
    Tangent<Real> out = newton_extrapolate(offset, m_eff);
    ++forecasts_;
    return out;
  }

  // j-step linear multistep forecast from the last j checkpoints.
  Tangent<Real> forecast_ab(int offset) {
    require_nonempty();
    check_offset(offset);
    const int j_eff = std::min(policy_.order, checkpoints());
    Tangent<Real> out = (policy_.ab_mode == ABMode::PaperExact)
                            ? binomial_extrapolate(j_eff)
                            : newton_extrapolate(offset, j_eff - 1);
    ++forecasts_;
    return out;
  }

  // Stored real elements under the configured policy's accounting:
  // (m_eff+1)*|F| for Taylor, j_eff*|F| for Adams-Bashforth, |F| for naive.
  std::size_t memory_footprint() const {
    if (history_.empty()) return 0;
    const std::size_t per_value = element_count(history_.front());
    switch (policy_.kind) {
      case CacheKind::None: return 0;
      case CacheKind::Naive: return per_value;
      case CacheKind::Taylor:
        return per_value * static_cast<std::size_t>(std::min(policy_.order, checkpoints() - 1) + 1);
      case CacheKind::AdamsBashforth:
        return per_value * static_cast<std::size_t>(std::min(policy_.order, checkpoints()));
    }
    return 0;
  }

 private:
  std::size_t history_capacity() const {
    switch (policy_.kind) {
      case CacheKind::Taylor: return static_cast<std::size_t>(policy_.order) + 1;
      case CacheKind::AdamsBashforth: return static_cast<std::size_t>(policy_.order);
      default: return 1;
    }
  }

  int max_diff_order() const {
    switch (policy_.kind) {
      case CacheKind::Taylor: return policy_.order;
      case CacheKind::AdamsBashforth: return policy_.order - 1;
      default: return 0;
    }
  }

  void require_nonempty() const {
    if (history_.empty()) throw std::logic_error("forecast requested from an empty cache");
  }

  static void check_offset(int offset) {
    if (offset < 1) throw std::invalid_argument("forecast offset must be >= 1");
  }

  // sum_{i=0}^{order} binom(u+i-1, i) * Delta^i F   with u = offset / D
  Tangent<Real> newton_extrapolate(int offset, int order) const {
    const Real u = static_cast<Real>(offset) / static_cast<Real>(policy_.interval);
    Tangent<Real> out = differences_[0];
    Real coeff = Real(1);
    for (int i = 1; i <= order; ++i) {
      coeff *= (u + static_cast<Real>(i - 1)) / static_cast<Real>(i);
      add_scaled(out, coeff, differences_[static_cast<std::size_t>(i)]);
    }
    return out;
  }

  // sum_{i=1}^{j} (-1)^{i+1} binom(j, i) * F_{i-1 checkpoints back}
  Tangent<Real> binomial_extrapolate(int j_eff) const {
    Tangent<Real> out = history_.front();
    if (j_eff == 1) return out;
    Real coeff = static_cast<Real>(j_eff);  // binom(j,1)
    scale_in_place(out, coeff);
    Real sign = Real(-1);
    for (int i = 2; i <= j_eff; ++i) {
      coeff *= static_cast<Real>(j_eff - i + 1) / static_cast<Real>(i);
      add_scaled(out, sign * coeff, history_[static_cast<std::size_t>(i - 1)]);
      sign = -sign;
    }
    return out;
  }

  CachePolicy policy_;
  std::vector<Tangent<Real>> history_;        // newest first
  std::vector<int> history_steps_;            // newest first
  std::vector<Tangent<Real>> differences_;    // Delta^0 .. Delta^m_eff
  int nfe_ = 0;
  int forecasts_ = 0;
};

}  // namespace flowcache
