#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcache/core.hpp"
#include "flowcache/rng.hpp"

namespace flowcache {

// Evaluable time-dependent vector field v(x, t). Implementations must be
// deterministic in (state, t, parameters) and reentrant.
template <typename Real>
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual Tangent<Real> evaluate(const State<Real>& s, Real t) const = 0;
  virtual int block_count() const = 0;
};

template <typename Real>
void check_eval_args(const State<Real>& s, Real t) {
  if (!(t >= Real(0) && t < Real(1)))
    throw std::domain_error("vector field evaluated outside t in [0, 1)");
  if (!all_finite(s)) throw NumericError("vector field input has non-finite entries");
}

namespace detail {

// y = W2 * tanh(W1 * x + b1) + b2
template <typename Real>
struct Mlp {
  int in = 0, hidden = 0, out = 0;
  std::vector<Real> w1, b1, w2, b2;

  void init(Rng& rng, int in_dim, int hidden_dim, int out_dim, double scale) {
    in = in_dim;
    hidden = hidden_dim;
    out = out_dim;
    auto draw = [&](std::vector<Real>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = static_cast<Real>(rng.normal() * scale);
    };
    draw(w1, static_cast<std::size_t>(hidden) * static_cast<std::size_t>(in));
    draw(b1, static_cast<std::size_t>(hidden));
    draw(w2, static_cast<std::size_t>(out) * static_cast<std::size_t>(hidden));
    draw(b2, static_cast<std::size_t>(out));
  }

  void zero() {
    auto z = [](std::vector<Real>& v) { std::fill(v.begin(), v.end(), Real(0)); };
    z(w1); z(b1); z(w2); z(b2);
  }

  void apply(const Real* x, Real* hidden_buf, Real* y) const {
    for (int i = 0; i < hidden; ++i) {
      Real acc = b1[static_cast<std::size_t>(i)];
      const Real* row = &w1[static_cast<std::size_t>(i) * static_cast<std::size_t>(in)];
      for (int j = 0; j < in; ++j) acc += row[j] * x[j];
      hidden_buf[i] = std::tanh(acc);
    }
    for (int i = 0; i < out; ++i) {
      Real acc = b2[static_cast<std::size_t>(i)];
      const Real* row = &w2[static_cast<std::size_t>(i) * static_cast<std::size_t>(hidden)];
      for (int j = 0; j < hidden; ++j) acc += row[j] * hidden_buf[j];
      y[i] = acc;
    }
  }
};

}  // namespace detail

struct BackboneConfig {
  int blocks = 2;        // L
  int hidden = 16;       // H: hidden width of the per-block maps
  int node_dim = 4;      // A: invariant node channel width (0 = none)
  int edge_dim = 2;      // B: invariant edge channel width (0 = none)
  std::uint64_t seed = 0;
  // Extra dense tanh iterations per block, so one full evaluation costs what a
  // realistically sized backbone would. The result feeds only a NaN guard.
  int padding_rounds = 0;
};

// EGNN-style stack of L message-passing blocks over a point set with optional
// invariant node/edge channels. Messages see invariant quantities only
// (features, squared distances, time), and coordinates move along difference
// vectors, so evaluation commutes with E(3) x S_N. The emitted velocity is the
// per-channel residual accumulated across blocks.
template <typename Real>
class EquivariantBackbone : public VectorField<Real> {
 public:
  explicit EquivariantBackbone(const BackboneConfig& cfg) : cfg_(cfg) {
    if (cfg_.blocks < 1) throw std::invalid_argument("backbone: blocks must be >= 1");
    if (cfg_.hidden < 1) throw std::invalid_argument("backbone: hidden must be >= 1");
    if (cfg_.node_dim < 0 || cfg_.edge_dim < 0)
      throw std::invalid_argument("backbone: channel dims must be >= 0");
    if (cfg_.padding_rounds < 0)
      throw std::invalid_argument("backbone: padding_rounds must be >= 0");
    Rng rng(cfg_.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
    const int a = cfg_.node_dim, b = cfg_.edge_dim, h = cfg_.hidden;
    const int msg_in = 2 * (a + 1) + 1 + b;  // [h_u, t, h_v, t, |x_u-x_v|^2, e_uv]
    blocks_.resize(static_cast<std::size_t>(cfg_.blocks));
    for (auto& blk : blocks_) {
      blk.phi.init(rng, msg_in, h, h, scale);
      blk.psi.init(rng, h, h, 1, scale);
      if (a > 0) blk.rho.init(rng, a + 1 + h, h, a, scale);
      if (b > 0) blk.chi.init(rng, h, h, b, scale);
      blk.pad_w.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(h));
      for (auto& x : blk.pad_w) x = static_cast<Real>(rng.normal() * scale);
      blk.pad_b.resize(static_cast<std::size_t>(h));
      for (auto& x : blk.pad_b) x = static_cast<Real>(rng.normal() * scale);
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  int block_count() const override { return cfg_.blocks; }

  void set_padding_rounds(int rounds) {
    if (rounds < 0) throw std::invalid_argument("padding_rounds must be >= 0");
    cfg_.padding_rounds = rounds;
  }

  void zero_all_weights() {
    for (auto& blk : blocks_) {
      blk.phi.zero();
      blk.psi.zero();
      blk.rho.zero();
      blk.chi.zero();
      std::fill(blk.pad_w.begin(), blk.pad_w.end(), Real(0));
      std::fill(blk.pad_b.begin(), blk.pad_b.end(), Real(0));
    }
  }

  Tangent<Real> evaluate(const State<Real>& s, Real t) const override {
    check_eval_args(s, t);
    const int n = s.n_nodes;
    const int a = cfg_.node_dim, b = cfg_.edge_dim, h = cfg_.hidden;
    const Channel<Real>* pts = nullptr;
    const Channel<Real>* node = nullptr;
    const Channel<Real>* edge = nullptr;
    for (const auto& ch : s.channels) {
      if (ch.role == ChannelRole::Points) pts = &ch;
      if (ch.role == ChannelRole::Node) node = node ? node : &ch;
      if (ch.role == ChannelRole::Edge) edge = edge ? edge : &ch;
    }
    if (!pts) throw ShapeError("backbone: state has no points channel");
    if (a > 0 && (!node || node->cols != static_cast<std::size_t>(a)))
      throw ShapeError("backbone: expected a node channel of width " + std::to_string(a));
    if (b > 0 && (!edge || edge->cols != static_cast<std::size_t>(b)))
      throw ShapeError("backbone: expected an edge channel of width " + std::to_string(b));

    const std::size_t e_count = s.edges.size();
    std::vector<Real> x(pts->data);
    std::vector<Real> hf = (a > 0) ? node->data : std::vector<Real>{};
    std::vector<Real> ef = (b > 0) ? edge->data : std::vector<Real>{};

    const int msg_in = 2 * (a + 1) + 1 + b;
    std::vector<Real> in_buf(static_cast<std::size_t>(msg_in));
    std::vector<Real> hid_buf(static_cast<std::size_t>(h));
    std::vector<Real> m_uv(static_cast<std::size_t>(h)), m_vu(static_cast<std::size_t>(h));
    std::vector<Real> chi_buf(static_cast<std::size_t>(std::max(b, 1)));
    std::vector<Real> rho_in(static_cast<std::size_t>(a + 1 + h));
    std::vector<Real> coord_acc, node_acc, h_next, e_next;

    for (const auto& blk : blocks_) {
      coord_acc.assign(x.size(), Real(0));
      node_acc.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(h), Real(0));
      if (b > 0) e_next = ef;

      for (std::size_t ei = 0; ei < e_count; ++ei) {
        const int u = s.edges[ei].first;
        const int v = s.edges[ei].second;
        const Real* xu = &x[static_cast<std::size_t>(u) * 3];
        const Real* xv = &x[static_cast<std::size_t>(v) * 3];
        Real d2 = Real(0);
        for (int c = 0; c < 3; ++c) d2 += (xu[c] - xv[c]) * (xu[c] - xv[c]);

        for (int dir = 0; dir < 2; ++dir) {
          const int src = dir == 0 ? u : v;
          const int dst = dir == 0 ? v : u;
          std::size_t p = 0;
          for (int k = 0; k < a; ++k)
            in_buf[p++] = hf[static_cast<std::size_t>(src) * static_cast<std::size_t>(a) + static_cast<std::size_t>(k)];
          in_buf[p++] = t;
          for (int k = 0; k < a; ++k)
            in_buf[p++] = hf[static_cast<std::size_t>(dst) * static_cast<std::size_t>(a) + static_cast<std::size_t>(k)];
          in_buf[p++] = t;
          in_buf[p++] = d2;
          for (int k = 0; k < b; ++k)
            in_buf[p++] = ef[ei * static_cast<std::size_t>(b) + static_cast<std::size_t>(k)];
          blk.phi.apply(in_buf.data(), hid_buf.data(), dir == 0 ? m_uv.data() : m_vu.data());
        }

        Real psi_uv, psi_vu;
        blk.psi.apply(m_uv.data(), hid_buf.data(), &psi_uv);
        blk.psi.apply(m_vu.data(), hid_buf.data(), &psi_vu);
        for (int c = 0; c < 3; ++c) {
          const Real diff = xu[c] - xv[c];
          coord_acc[static_cast<std::size_t>(u) * 3 + static_cast<std::size_t>(c)] += diff * psi_uv;
          coord_acc[static_cast<std::size_t>(v) * 3 + static_cast<std::size_t>(c)] -= diff * psi_vu;
        }
        for (int k = 0; k < h; ++k) {
          node_acc[static_cast<std::size_t>(u) * static_cast<std::size_t>(h) + static_cast<std::size_t>(k)] += m_uv[static_cast<std::size_t>(k)];
          node_acc[static_cast<std::size_t>(v) * static_cast<std::size_t>(h) + static_cast<std::size_t>(k)] += m_vu[static_cast<std::size_t>(k)];
        }
        if (b > 0) {
          for (int dir = 0; dir < 2; ++dir) {
            blk.chi.apply(dir == 0 ? m_uv.data() : m_vu.data(), hid_buf.data(), chi_buf.data());
            for (int k = 0; k < b; ++k)
              e_next[ei * static_cast<std::size_t>(b) + static_cast<std::size_t>(k)] += chi_buf[static_cast<std::size_t>(k)];
          }
        }
      }

      if (n > 1) {
        const Real inv = Real(1) / static_cast<Real>(n - 1);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += coord_acc[i] * inv;
      }
      if (a > 0) {
        h_next = hf;
        for (int i = 0; i < n; ++i) {
          std::size_t p = 0;
          for (int k = 0; k < a; ++k)
            rho_in[p++] = hf[static_cast<std::size_t>(i) * static_cast<std::size_t>(a) + static_cast<std::size_t>(k)];
          rho_in[p++] = t;
          for (int k = 0; k < h; ++k)
            rho_in[p++] = node_acc[static_cast<std::size_t>(i) * static_cast<std::size_t>(h) + static_cast<std::size_t>(k)];
          std::vector<Real> delta(static_cast<std::size_t>(a));
          blk.rho.apply(rho_in.data(), hid_buf.data(), delta.data());
          for (int k = 0; k < a; ++k)
            h_next[static_cast<std::size_t>(i) * static_cast<std::size_t>(a) + static_cast<std::size_t>(k)] += delta[static_cast<std::size_t>(k)];
        }
        hf = h_next;
      }
      if (b > 0) ef = e_next;

      if (cfg_.padding_rounds > 0) run_padding(blk, x, t);
    }

    Tangent<Real> out = zero_tangent(s);
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
      const auto& src = s.channels[c];
      auto& dst = out.channels[c];
      const std::vector<Real>* now = nullptr;
      if (&src == pts) now = &x;
      else if (node && &src == node) now = &hf;
      else if (edge && &src == edge) now = &ef;
      if (!now) continue;  // channels the backbone does not touch keep zero velocity
      for (std::size_t i = 0; i < dst.data.size(); ++i)
        dst.data[i] = (*now)[i] - src.data[i];
    }
    return out;
  }

 private:
  struct Block {
    detail::Mlp<Real> phi, psi, rho, chi;
    std::vector<Real> pad_w, pad_b;
  };

  // Dense tanh iterations whose result feeds only a NaN guard. The scratch
  // vector is seeded from the current coordinates so the work cannot be
  // hoisted out of the block loop.
  void run_padding(const Block& blk, const std::vector<Real>& x, Real t) const {
    const int h = cfg_.hidden;
    std::vector<Real> scratch(static_cast<std::size_t>(h)), next(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i)
      scratch[static_cast<std::size_t>(i)] =
          std::tanh(blk.pad_b[static_cast<std::size_t>(i)] + x[static_cast<std::size_t>(i) % x.size()] + t);
    for (int round = 0; round < cfg_.padding_rounds; ++round) {
      for (int i = 0; i < h; ++i) {
        Real acc = blk.pad_b[static_cast<std::size_t>(i)];
        const Real* row = &blk.pad_w[static_cast<std::size_t>(i) * static_cast<std::size_t>(h)];
        for (int j = 0; j < h; ++j) acc += row[j] * scratch[static_cast<std::size_t>(j)];
        next[static_cast<std::size_t>(i)] = std::tanh(acc);
      }
      scratch.swap(next);
    }
    Real guard = Real(0);
    for (const Real& v : scratch) guard += v;
    if (std::isnan(static_cast<double>(guard)))
      throw NumericError("backbone compute padding produced NaN");
  }

  BackboneConfig cfg_;
  std::vector<Block> blocks_;
};

// Control field that feeds absolute coordinates through a per-node perceptron.
// Deliberately NOT rotation- or translation-equivariant; used to confirm that
// the equivariance checks can actually fail.
template <typename Real>
class AbsolutePositionField : public VectorField<Real> {
 public:
  explicit AbsolutePositionField(std::uint64_t seed, int hidden = 8) {
    Rng rng(seed);
    mlp_.init(rng, 3, hidden, 3, 1.0 / std::sqrt(static_cast<double>(hidden)));
  }

  int block_count() const override { return 1; }

  Tangent<Real> evaluate(const State<Real>& s, Real t) const override {
    check_eval_args(s, t);
    Tangent<Real> out = zero_tangent(s);
    const int pi = s.points_index();
    const auto& pts = s.channels[static_cast<std::size_t>(pi)];
    auto& vel = out.channels[static_cast<std::size_t>(pi)];
    std::vector<Real> hid(static_cast<std::size_t>(mlp_.hidden));
    for (std::size_t i = 0; i < pts.rows; ++i)
      mlp_.apply(&pts.data[i * 3], hid.data(), &vel.data[i * 3]);
    return out;
  }

 private:
  detail::Mlp<Real> mlp_;
};

}  // namespace flowcache
