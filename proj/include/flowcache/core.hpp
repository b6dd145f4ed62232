#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowcache/rng.hpp"

namespace flowcache {

class ShapeError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numeric failures at runtime (non-finite values, blow-ups).
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(int step, const std::string& what)
      : NumericError("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

enum class ChannelRole { Points, Node, Edge };

inline const char* to_string(ChannelRole role) {
  switch (role) {
    case ChannelRole::Points: return "points";
    case ChannelRole::Node: return "node";
    case ChannelRole::Edge: return "edge";
  }
  return "?";
}

// One named dense block of a joint state: (N,3) coordinates, (N,A) per-node
// values, or (E,B) per-edge values, row-major.
template <typename Real>
struct Channel {
  std::string name;
  ChannelRole role = ChannelRole::Node;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Real& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const Real& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
};

template <typename Real>
Channel<Real> make_channel(std::string name, ChannelRole role, std::size_t rows,
                           std::size_t cols) {
  Channel<Real> ch;
  ch.name = std::move(name);
  ch.role = role;
  ch.rows = rows;
  ch.cols = cols;
  ch.data.assign(rows * cols, Real(0));
  return ch;
}

using Edge = std::pair<int, int>;

inline std::vector<Edge> make_complete_edges(int n_nodes) {
  std::vector<Edge> edges;
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 1; j < n_nodes; ++j) edges.push_back({i, j});
  return edges;
}

// Joint sample: equivariant coordinates plus invariant node/edge channels.
template <typename Real>
struct State {
  int n_nodes = 0;
  std::vector<Edge> edges;
  std::vector<Channel<Real>> channels;

  int points_index() const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i].role == ChannelRole::Points) return static_cast<int>(i);
    return -1;
  }
  const Channel<Real>& points() const {
    int i = points_index();
    if (i < 0) throw ShapeError("state has no points channel");
    return channels[static_cast<std::size_t>(i)];
  }
  Channel<Real>& points() {
    int i = points_index();
    if (i < 0) throw ShapeError("state has no points channel");
    return channels[static_cast<std::size_t>(i)];
  }
  const Channel<Real>* find_channel(std::string_view name) const {
    for (const auto& ch : channels)
      if (ch.name == name) return &ch;
    return nullptr;
  }
};

// Velocity with the same channel layout as its State.
template <typename Real>
struct Tangent {
  std::vector<Channel<Real>> channels;
};

template <typename Real>
std::size_t element_count(const Tangent<Real>& v) {
  std::size_t n = 0;
  for (const auto& ch : v.channels) n += ch.size();
  return n;
}

template <typename Real>
Tangent<Real> zero_tangent(const State<Real>& s) {
  Tangent<Real> v;
  v.channels.reserve(s.channels.size());
  for (const auto& ch : s.channels)
    v.channels.push_back(make_channel<Real>(ch.name, ch.role, ch.rows, ch.cols));
  return v;
}

template <typename Real>
void validate(const State<Real>& s) {
  if (s.n_nodes < 1) throw std::invalid_argument("state: n_nodes must be >= 1");
  int points_seen = 0;
  for (const auto& ch : s.channels) {
    if (ch.data.size() != ch.rows * ch.cols)
      throw ShapeError("channel '" + ch.name + "': data size does not match shape");
    switch (ch.role) {
      case ChannelRole::Points:
        ++points_seen;
        if (ch.cols != 3)
          throw ShapeError("channel '" + ch.name + "': points channel must have 3 columns");
        if (ch.rows != static_cast<std::size_t>(s.n_nodes))
          throw ShapeError("channel '" + ch.name + "': points rows != n_nodes");
        break;
      case ChannelRole::Node:
        if (ch.rows != static_cast<std::size_t>(s.n_nodes))
          throw ShapeError("channel '" + ch.name + "': node rows != n_nodes");
        break;
      case ChannelRole::Edge:
        if (ch.rows != s.edges.size())
          throw ShapeError("channel '" + ch.name + "': edge rows != edge count");
        break;
    }
    for (const Real& x : ch.data)
      if (!std::isfinite(static_cast<double>(x)))
        throw NumericError("channel '" + ch.name + "': non-finite entry");
  }
  if (points_seen != 1)
    throw ShapeError("state must have exactly one points channel, got " +
                     std::to_string(points_seen));
  for (std::size_t i = 0; i < s.channels.size(); ++i)
    for (std::size_t j = i + 1; j < s.channels.size(); ++j)
      if (s.channels[i].name == s.channels[j].name)
        throw std::invalid_argument("duplicate channel name '" + s.channels[i].name + "'");
  for (const auto& [u, v] : s.edges)
    if (u < 0 || v < 0 || u >= s.n_nodes || v >= s.n_nodes)
      throw ShapeError("edge references node outside [0, n_nodes)");
}

template <typename Real>
bool layout_compatible(const State<Real>& s, const Tangent<Real>& v) {
  if (s.channels.size() != v.channels.size()) return false;
  for (std::size_t i = 0; i < s.channels.size(); ++i) {
    const auto& a = s.channels[i];
    const auto& b = v.channels[i];
    if (a.role != b.role || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

template <typename Real>
void require_compatible(const State<Real>& s, const Tangent<Real>& v) {
  if (!layout_compatible(s, v))
    throw ShapeError("tangent layout does not match state layout");
}

// ---- tangent arithmetic ----------------------------------------------------

template <typename Real>
void require_same_layout(const Tangent<Real>& a, const Tangent<Real>& b) {
  if (a.channels.size() != b.channels.size())
    throw ShapeError("tangent layouts differ (channel count)");
  for (std::size_t i = 0; i < a.channels.size(); ++i)
    if (a.channels[i].rows != b.channels[i].rows ||
        a.channels[i].cols != b.channels[i].cols)
      throw ShapeError("tangent layouts differ (channel shape)");
}

template <typename Real>
void scale_in_place(Tangent<Real>& v, Real a) {
  for (auto& ch : v.channels)
    for (Real& x : ch.data) x *= a;
}

// y += a * x
template <typename Real>
void add_scaled(Tangent<Real>& y, Real a, const Tangent<Real>& x) {
  require_same_layout(y, x);
  for (std::size_t c = 0; c < y.channels.size(); ++c) {
    const auto& src = x.channels[c].data;
    auto& dst = y.channels[c].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
  }
}

// x += dt * v
template <typename Real>
void axpy_in_place(State<Real>& s, Real dt, const Tangent<Real>& v) {
  require_compatible(s, v);
  for (std::size_t c = 0; c < s.channels.size(); ++c) {
    const auto& src = v.channels[c].data;
    auto& dst = s.channels[c].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += dt * src[i];
  }
}

template <typename Real>
double norm(const Tangent<Real>& v) {
  double s = 0;
  for (const auto& ch : v.channels)
    for (const Real& x : ch.data) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <typename Real>
double state_norm(const State<Real>& s) {
  double acc = 0;
  for (const auto& ch : s.channels)
    for (const Real& x : ch.data) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

template <typename Real>
double state_distance(const State<Real>& a, const State<Real>& b) {
  if (a.channels.size() != b.channels.size())
    throw ShapeError("state_distance: channel count mismatch");
  double acc = 0;
  for (std::size_t c = 0; c < a.channels.size(); ++c) {
    const auto& x = a.channels[c].data;
    const auto& y = b.channels[c].data;
    if (x.size() != y.size()) throw ShapeError("state_distance: channel shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

template <typename Real>
double max_abs(const State<Real>& s) {
  double m = 0;
  for (const auto& ch : s.channels)
    for (const Real& x : ch.data) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

template <typename Real>
bool all_finite(const State<Real>& s) {
  for (const auto& ch : s.channels)
    for (const Real& x : ch.data)
      if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

// ---- time grids ------------------------------------------------------------

template <typename Real>
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<Real> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw std::invalid_argument("time grid needs >= 2 points");
    if (times_.front() != Real(0) || times_.back() != Real(1))
      throw std::invalid_argument("time grid endpoints must be exactly 0 and 1");
    for (std::size_t k = 0; k + 1 < times_.size(); ++k)
      if (!(times_[k] < times_[k + 1]))
        throw std::invalid_argument("time grid must be strictly increasing");
  }

  int steps() const { return static_cast<int>(times_.size()) - 1; }  // K
  Real time(int k) const { return times_[static_cast<std::size_t>(k)]; }
  Real dt(int k) const {
    return times_[static_cast<std::size_t>(k) + 1] - times_[static_cast<std::size_t>(k)];
  }
  const std::vector<Real>& times() const { return times_; }

 private:
  std::vector<Real> times_;
};

template <typename Real>
TimeGrid<Real> make_uniform_grid(int steps) {
  if (steps < 1) throw std::invalid_argument("make_uniform_grid: steps must be >= 1");
  std::vector<Real> times(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k)
    times[static_cast<std::size_t>(k)] = static_cast<Real>(k) / static_cast<Real>(steps);
  times.front() = Real(0);
  times.back() = Real(1);
  return TimeGrid<Real>(std::move(times));
}

// ---- E(3) x S_N group action -----------------------------------------------

// Group arithmetic stays in double regardless of the state scalar; the action
// casts on application.
struct GroupElement {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> translation{0, 0, 0};
  std::vector<int> permutation;  // node i moves to permutation[i]
};

inline GroupElement identity_group(int n_nodes) {
  GroupElement g;
  g.permutation.resize(static_cast<std::size_t>(n_nodes));
  std::iota(g.permutation.begin(), g.permutation.end(), 0);
  return g;
}

inline double orthogonality_defect(const std::array<double, 9>& r) {
  // ||R^T R - I||_F
  double acc = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += r[3 * k + i] * r[3 * k + j];
      const double target = (i == j) ? 1.0 : 0.0;
      acc += (dot - target) * (dot - target);
    }
  return std::sqrt(acc);
}

inline double rotation_det(const std::array<double, 9>& r) {
  return r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
         r[2] * (r[3] * r[7] - r[4] * r[6]);
}

inline void validate(const GroupElement& g, int n_nodes) {
  if (orthogonality_defect(g.rotation) > 1e-12)
    throw std::invalid_argument("group element: rotation is not orthogonal");
  if (g.permutation.size() != static_cast<std::size_t>(n_nodes))
    throw ShapeError("group element: permutation size != n_nodes");
  std::vector<char> seen(static_cast<std::size_t>(n_nodes), 0);
  for (int p : g.permutation) {
    if (p < 0 || p >= n_nodes) throw std::invalid_argument("permutation image out of range");
    if (seen[static_cast<std::size_t>(p)]++) throw std::invalid_argument("permutation is not a bijection");
  }
}

// apply g2 first, then g1
inline GroupElement compose(const GroupElement& g1, const GroupElement& g2) {
  if (g1.permutation.size() != g2.permutation.size())
    throw ShapeError("compose: permutation sizes differ");
  GroupElement g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += g1.rotation[3 * i + k] * g2.rotation[3 * k + j];
      g.rotation[3 * i + j] = acc;
    }
  for (int i = 0; i < 3; ++i) {
    double acc = g1.translation[i];
    for (int k = 0; k < 3; ++k) acc += g1.rotation[3 * i + k] * g2.translation[k];
    g.translation[i] = acc;
  }
  g.permutation.resize(g2.permutation.size());
  for (std::size_t i = 0; i < g2.permutation.size(); ++i)
    g.permutation[i] = g1.permutation[static_cast<std::size_t>(g2.permutation[i])];
  return g;
}

inline GroupElement inverse(const GroupElement& g) {
  GroupElement inv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv.rotation[3 * i + j] = g.rotation[3 * j + i];
  for (int i = 0; i < 3; ++i) {
    double acc = 0;
    for (int k = 0; k < 3; ++k) acc -= inv.rotation[3 * i + k] * g.translation[k];
    inv.translation[i] = acc;
  }
  inv.permutation.resize(g.permutation.size());
  for (std::size_t i = 0; i < g.permutation.size(); ++i)
    inv.permutation[static_cast<std::size_t>(g.permutation[i])] = static_cast<int>(i);
  return inv;
}

// Points rotate, translate, and permute rows; node channels permute rows; edge
// channels keep their rows while the edge list is relabeled.
template <typename Real>
State<Real> apply_group(const GroupElement& g, const State<Real>& s) {
  validate(g, s.n_nodes);
  State<Real> out = s;
  for (std::size_t c = 0; c < s.channels.size(); ++c) {
    const auto& src = s.channels[c];
    auto& dst = out.channels[c];
    switch (src.role) {
      case ChannelRole::Points:
        if (src.cols != 3) throw ShapeError("points channel must have 3 columns");
        for (std::size_t i = 0; i < src.rows; ++i) {
          double y[3];
          for (int r = 0; r < 3; ++r) {
            double acc = g.translation[r];
            for (int k = 0; k < 3; ++k)
              acc += g.rotation[3 * r + k] * static_cast<double>(src.at(i, static_cast<std::size_t>(k)));
            y[r] = acc;
          }
          const auto pi = static_cast<std::size_t>(g.permutation[i]);
          for (int r = 0; r < 3; ++r) dst.at(pi, static_cast<std::size_t>(r)) = static_cast<Real>(y[r]);
        }
        break;
      case ChannelRole::Node:
        for (std::size_t i = 0; i < src.rows; ++i) {
          const auto pi = static_cast<std::size_t>(g.permutation[i]);
          for (std::size_t j = 0; j < src.cols; ++j) dst.at(pi, j) = src.at(i, j);
        }
        break;
      case ChannelRole::Edge:
        break;  // rows track edge indices, which do not move
    }
  }
  for (std::size_t e = 0; e < s.edges.size(); ++e)
    out.edges[e] = {g.permutation[static_cast<std::size_t>(s.edges[e].first)],
                    g.permutation[static_cast<std::size_t>(s.edges[e].second)]};
  return out;
}

// Pushforward on tangents: point rows rotate and permute but do NOT translate;
// invariant node channels permute; edge channels are untouched.
template <typename Real>
Tangent<Real> push_tangent(const GroupElement& g, const Tangent<Real>& v) {
  Tangent<Real> out = v;
  for (std::size_t c = 0; c < v.channels.size(); ++c) {
    const auto& src = v.channels[c];
    auto& dst = out.channels[c];
    if (src.role == ChannelRole::Edge) continue;
    if (src.rows != g.permutation.size())
      throw ShapeError("push_tangent: permutation size != channel rows");
    if (src.role == ChannelRole::Points) {
      if (src.cols != 3) throw ShapeError("points channel must have 3 columns");
      for (std::size_t i = 0; i < src.rows; ++i) {
        double y[3];
        for (int r = 0; r < 3; ++r) {
          double acc = 0;
          for (int k = 0; k < 3; ++k)
            acc += g.rotation[3 * r + k] * static_cast<double>(src.at(i, static_cast<std::size_t>(k)));
          y[r] = acc;
        }
        const auto pi = static_cast<std::size_t>(g.permutation[i]);
        for (int r = 0; r < 3; ++r) dst.at(pi, static_cast<std::size_t>(r)) = static_cast<Real>(y[r]);
      }
    } else {
      for (std::size_t i = 0; i < src.rows; ++i) {
        const auto pi = static_cast<std::size_t>(g.permutation[i]);
        for (std::size_t j = 0; j < src.cols; ++j) dst.at(pi, j) = src.at(i, j);
      }
    }
  }
  return out;
}

struct RandomGroupOptions {
  bool allow_reflection = true;
  double translation_scale = 1.0;
  bool randomize_permutation = true;
};

inline GroupElement random_group_element(Rng& rng, int n_nodes,
                                         const RandomGroupOptions& opt = {}) {
  GroupElement g = identity_group(n_nodes);
  // Orthonormal frame by Gram-Schmidt; third axis from the cross product so the
  // base element is a proper rotation.
  std::array<double, 3> a{}, b{};
  double na = 0;
  do {
    for (auto& x : a) x = rng.normal();
    na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  } while (na < 1e-8);
  for (auto& x : a) x /= na;
  double nb = 0;
  do {
    for (auto& x : b) x = rng.normal();
    const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for (int i = 0; i < 3; ++i) b[static_cast<std::size_t>(i)] -= d * a[static_cast<std::size_t>(i)];
    nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  } while (nb < 1e-8);
  for (auto& x : b) x /= nb;
  std::array<double, 3> c{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                          a[0] * b[1] - a[1] * b[0]};
  double flip = 1.0;
  if (opt.allow_reflection && rng.uniform() < 0.5) flip = -1.0;
  for (int j = 0; j < 3; ++j) {
    g.rotation[0 * 3 + j] = a[static_cast<std::size_t>(j)];
    g.rotation[1 * 3 + j] = b[static_cast<std::size_t>(j)];
    g.rotation[2 * 3 + j] = flip * c[static_cast<std::size_t>(j)];
  }
  for (auto& t : g.translation) t = opt.translation_scale * rng.normal();
  if (opt.randomize_permutation) {
    for (int i = n_nodes - 1; i > 0; --i)
      std::swap(g.permutation[static_cast<std::size_t>(i)],
                g.permutation[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }
  return g;
}

}  // namespace flowcache
