#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sociallearn/rng.hpp"

namespace sociallearn {

/// Hyperparameters of a set network. `indicator` is the input column that
/// flags the self row (-1 when absent).
struct NetworkShape {
  int in = 0;
  int hidden = 64;
  int heads = 4;
  int blocks = 1;
  int out = 1;
  int indicator = -1;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Permutation-invariant network over a set of rows, all in double
/// precision:
///
///   embed     e_r = tanh(W_e x_r + b_e)
///   blocks    multi-head self-attention with residual, then a residual
///             tanh feed-forward layer (repeated `blocks` times)
///   pooling   attention pooling with a learned seed query; each row
///             contributes [z_r, x_r] so raw features stay reachable
///   self      the same [z_r, x_r] weighted by the self-indicator column
///   head      out = W_2 tanh(W_1 [pooled, self] + b_1) + b_2
///
/// Rows are sorted lexicographically before any arithmetic, which makes the
/// output bitwise identical under row permutations (floating-point sums see
/// rows in the same order regardless of input order).
///
/// Parameters live in one flat vector so optimizers, checkpoints and
/// finite-difference checks can treat them uniformly.
class SetNetwork {
 public:
  struct Workspace {
    struct Block {
      std::vector<double> zin, q, k, v, attn, ctx, y, ff, zout, row;
    };
    int rows = 0;
    std::vector<int> order;
    std::vector<double> x, e, keys, score, alpha, value, u_in, u, out;
    std::vector<Block> blocks;
    // backward scratch
    std::vector<double> dz, dzin, dy, dctx, dq, dk, dv, dvalue, du_in, du, dscore;
  };

  SetNetwork() = default;

  explicit SetNetwork(const NetworkShape& shape) : shape_(shape) {
    if (shape.in < 1 || shape.hidden < 1 || shape.out < 1 || shape.blocks < 0 || shape.heads < 1)
      throw std::invalid_argument("SetNetwork: invalid shape");
    if (shape.hidden % shape.heads != 0) throw std::invalid_argument("SetNetwork: hidden must be divisible by heads");
    if (shape.indicator >= shape.in) throw std::invalid_argument("SetNetwork: indicator column out of range");
    layout();
    params_.assign(total_, 0.0);
  }

  /// Glorot-uniform weights, zero biases; the output layer is scaled by
  /// `head_scale` so a fresh network starts near a flat output.
  void initialize(std::uint64_t seed, double head_scale) {
    Rng rng(derive_seed(seed, Stream::kInitParams));
    std::fill(params_.begin(), params_.end(), 0.0);
    auto glorot = [&](std::size_t off, int rows, int cols, double gain = 1.0) {
      const double a = gain * std::sqrt(6.0 / (rows + cols));
      for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); ++i)
        params_[off + i] = a * (2.0 * rng.uniform() - 1.0);
    };
    const int H = shape_.hidden;
    glorot(off_.we, H, shape_.in);
    for (const auto& b : off_.blocks) {
      glorot(b.wq, H, H), glorot(b.wk, H, H), glorot(b.wv, H, H), glorot(b.wo, H, H), glorot(b.wf, H, H);
    }
    glorot(off_.pk, H, H);
    glorot(off_.pq, 1, H);
    glorot(off_.w1, H, head_in());
    glorot(off_.w2, shape_.out, H, head_scale);
  }

  const NetworkShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return total_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Forward pass over `rows` rows of width shape().in. Returns a view of the
  /// output stored in `ws`.
  std::span<const double> forward(std::span<const double> input, int rows, Workspace& ws) const {
    const int F = shape_.in;
    const int H = shape_.hidden;
    const int R = rows;
    if (R < 1 || input.size() != static_cast<std::size_t>(R) * static_cast<std::size_t>(F))
      throw std::invalid_argument("SetNetwork: input shape mismatch");
    const double* P = params_.data();
    prepare(ws, R);

    ws.order.resize(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) ws.order[static_cast<std::size_t>(r)] = r;
    std::sort(ws.order.begin(), ws.order.end(), [&](int a, int b) {
      const double* ra = input.data() + static_cast<std::ptrdiff_t>(a) * F;
      const double* rb = input.data() + static_cast<std::ptrdiff_t>(b) * F;
      return std::lexicographical_compare(ra, ra + F, rb, rb + F);
    });
    for (int r = 0; r < R; ++r)
      std::copy_n(input.data() + static_cast<std::ptrdiff_t>(ws.order[static_cast<std::size_t>(r)]) * F, F,
                  ws.x.data() + static_cast<std::ptrdiff_t>(r) * F);

    for (int r = 0; r < R; ++r) {
      affine(P + off_.we, P + off_.be, ws.x.data() + r * F, ws.e.data() + r * H, F, H);
      for (int o = 0; o < H; ++o) ws.e[static_cast<std::size_t>(r * H + o)] = std::tanh(ws.e[static_cast<std::size_t>(r * H + o)]);
    }

    const double* z = ws.e.data();
    for (std::size_t b = 0; b < off_.blocks.size(); ++b) {
      block_forward(off_.blocks[b], z, R, ws.blocks[b]);
      z = ws.blocks[b].zout.data();
    }

    // attention pooling
    const double pool_scale = 1.0 / std::sqrt(static_cast<double>(H));
    for (int r = 0; r < R; ++r) {
      affine(P + off_.pk, nullptr, z + r * H, ws.keys.data() + r * H, H, H);
      double s = 0.0;
      for (int o = 0; o < H; ++o) s += P[off_.pq + static_cast<std::size_t>(o)] * ws.keys[static_cast<std::size_t>(r * H + o)];
      ws.score[static_cast<std::size_t>(r)] = s * pool_scale;
    }
    softmax(ws.score.data(), ws.alpha.data(), R);

    const int V = value_width();
    for (int r = 0; r < R; ++r) {
      std::copy_n(z + r * H, H, ws.value.data() + r * V);
      std::copy_n(ws.x.data() + r * F, F, ws.value.data() + r * V + H);
    }
    std::fill(ws.u_in.begin(), ws.u_in.end(), 0.0);
    for (int r = 0; r < R; ++r) {
      const double a = ws.alpha[static_cast<std::size_t>(r)];
      const double ind = shape_.indicator >= 0 ? ws.x[static_cast<std::size_t>(r * F + shape_.indicator)] : 0.0;
      for (int j = 0; j < V; ++j) {
        ws.u_in[static_cast<std::size_t>(j)] += a * ws.value[static_cast<std::size_t>(r * V + j)];
        if (shape_.indicator >= 0) ws.u_in[static_cast<std::size_t>(V + j)] += ind * ws.value[static_cast<std::size_t>(r * V + j)];
      }
    }

    affine(P + off_.w1, P + off_.b1, ws.u_in.data(), ws.u.data(), head_in(), H);
    for (auto& v : ws.u) v = std::tanh(v);
    affine(P + off_.w2, P + off_.b2, ws.u.data(), ws.out.data(), H, shape_.out);
    return ws.out;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) for
  /// the most recent forward() on `ws`.
  void backward(Workspace& ws, std::span<const double> dout, std::span<double> grad) const {
    const int F = shape_.in;
    const int H = shape_.hidden;
    const int R = ws.rows;
    const int V = value_width();
    const int U = head_in();
    if (dout.size() != static_cast<std::size_t>(shape_.out) || grad.size() != total_)
      throw std::invalid_argument("SetNetwork: gradient shape mismatch");
    const double* P = params_.data();
    double* G = grad.data();

    // head
    ws.du.assign(static_cast<std::size_t>(H), 0.0);
    for (int o = 0; o < shape_.out; ++o) {
      const double g = dout[static_cast<std::size_t>(o)];
      G[off_.b2 + static_cast<std::size_t>(o)] += g;
      for (int i = 0; i < H; ++i) {
        G[off_.w2 + static_cast<std::size_t>(o * H + i)] += g * ws.u[static_cast<std::size_t>(i)];
        ws.du[static_cast<std::size_t>(i)] += P[off_.w2 + static_cast<std::size_t>(o * H + i)] * g;
      }
    }
    for (int i = 0; i < H; ++i) ws.du[static_cast<std::size_t>(i)] *= 1.0 - ws.u[static_cast<std::size_t>(i)] * ws.u[static_cast<std::size_t>(i)];
    ws.du_in.assign(static_cast<std::size_t>(U), 0.0);
    for (int o = 0; o < H; ++o) {
      const double g = ws.du[static_cast<std::size_t>(o)];
      G[off_.b1 + static_cast<std::size_t>(o)] += g;
      for (int i = 0; i < U; ++i) {
        G[off_.w1 + static_cast<std::size_t>(o * U + i)] += g * ws.u_in[static_cast<std::size_t>(i)];
        ws.du_in[static_cast<std::size_t>(i)] += P[off_.w1 + static_cast<std::size_t>(o * U + i)] * g;
      }
    }

    // pooling and self readout
    ws.dvalue.assign(static_cast<std::size_t>(R * V), 0.0);
    ws.dscore.assign(static_cast<std::size_t>(R), 0.0);
    double weighted = 0.0;
    for (int r = 0; r < R; ++r) {
      const double a = ws.alpha[static_cast<std::size_t>(r)];
      const double ind = shape_.indicator >= 0 ? ws.x[static_cast<std::size_t>(r * F + shape_.indicator)] : 0.0;
      double da = 0.0;
      for (int j = 0; j < V; ++j) {
        const double gp = ws.du_in[static_cast<std::size_t>(j)];
        da += gp * ws.value[static_cast<std::size_t>(r * V + j)];
        double gv = a * gp;
        if (shape_.indicator >= 0) gv += ind * ws.du_in[static_cast<std::size_t>(V + j)];
        ws.dvalue[static_cast<std::size_t>(r * V + j)] = gv;
      }
      ws.dscore[static_cast<std::size_t>(r)] = da;
      weighted += a * da;
    }
    const double pool_scale = 1.0 / std::sqrt(static_cast<double>(H));
    const double* z = off_.blocks.empty() ? ws.e.data() : ws.blocks.back().zout.data();
    ws.dz.assign(static_cast<std::size_t>(R * H), 0.0);
    for (int r = 0; r < R; ++r) {
      const double ds = ws.alpha[static_cast<std::size_t>(r)] * (ws.dscore[static_cast<std::size_t>(r)] - weighted) * pool_scale;
      for (int o = 0; o < H; ++o) {
        const double dkey = ds * P[off_.pq + static_cast<std::size_t>(o)];
        G[off_.pq + static_cast<std::size_t>(o)] += ds * ws.keys[static_cast<std::size_t>(r * H + o)];
        for (int i = 0; i < H; ++i) {
          G[off_.pk + static_cast<std::size_t>(o * H + i)] += dkey * z[r * H + i];
          ws.dz[static_cast<std::size_t>(r * H + i)] += P[off_.pk + static_cast<std::size_t>(o * H + i)] * dkey;
        }
      }
      for (int i = 0; i < H; ++i) ws.dz[static_cast<std::size_t>(r * H + i)] += ws.dvalue[static_cast<std::size_t>(r * V + i)];
    }

    for (std::size_t b = off_.blocks.size(); b-- > 0;) block_backward(off_.blocks[b], ws.blocks[b], R, ws, G);

    // embedding
    for (int r = 0; r < R; ++r)
      for (int o = 0; o < H; ++o) {
        const double e = ws.e[static_cast<std::size_t>(r * H + o)];
        const double g = ws.dz[static_cast<std::size_t>(r * H + o)] * (1.0 - e * e);
        G[off_.be + static_cast<std::size_t>(o)] += g;
        for (int j = 0; j < F; ++j) G[off_.we + static_cast<std::size_t>(o * F + j)] += g * ws.x[static_cast<std::size_t>(r * F + j)];
      }
  }

 private:
  struct BlockOffsets {
    std::size_t wq, wk, wv, wo, bo, wf, bf;
  };
  struct Offsets {
    std::size_t we, be;
    std::vector<BlockOffsets> blocks;
    std::size_t pk, pq, w1, b1, w2, b2;
  };

  int value_width() const noexcept { return shape_.hidden + shape_.in; }
  int head_in() const noexcept { return shape_.indicator >= 0 ? 2 * value_width() : value_width(); }

  void layout() {
    const auto H = static_cast<std::size_t>(shape_.hidden);
    const auto F = static_cast<std::size_t>(shape_.in);
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      const std::size_t o = at;
      at += n;
      return o;
    };
    off_.we = take(H * F);
    off_.be = take(H);
    off_.blocks.clear();
    for (int b = 0; b < shape_.blocks; ++b) {
      BlockOffsets bo{};
      bo.wq = take(H * H);
      bo.wk = take(H * H);
      bo.wv = take(H * H);
      bo.wo = take(H * H);
      bo.bo = take(H);
      bo.wf = take(H * H);
      bo.bf = take(H);
      off_.blocks.push_back(bo);
    }
    off_.pk = take(H * H);
    off_.pq = take(H);
    off_.w1 = take(H * static_cast<std::size_t>(head_in()));
    off_.b1 = take(H);
    off_.w2 = take(static_cast<std::size_t>(shape_.out) * H);
    off_.b2 = take(static_cast<std::size_t>(shape_.out));
    total_ = at;
  }

  void prepare(Workspace& ws, int R) const {
    const auto H = static_cast<std::size_t>(shape_.hidden);
    const auto F = static_cast<std::size_t>(shape_.in);
    const auto r = static_cast<std::size_t>(R);
    ws.rows = R;
    ws.x.resize(r * F);
    ws.e.resize(r * H);
    ws.blocks.resize(off_.blocks.size());
    for (auto& b : ws.blocks) {
      for (auto* v : {&b.zin, &b.q, &b.k, &b.v, &b.ctx, &b.y, &b.ff, &b.zout}) v->resize(r * H);
      b.attn.resize(static_cast<std::size_t>(shape_.heads) * r * r);
      b.row.resize(r);
    }
    ws.keys.resize(r * H);
    ws.score.resize(r);
    ws.alpha.resize(r);
    ws.value.resize(r * static_cast<std::size_t>(value_width()));
    ws.u_in.resize(static_cast<std::size_t>(head_in()));
    ws.u.resize(H);
    ws.out.resize(static_cast<std::size_t>(shape_.out));
  }

  // y = W x (+ b), W is out x in row-major.
  static void affine(const double* W, const double* b, const double* x, double* y, int in, int out) {
    for (int o = 0; o < out; ++o) {
      double s = b ? b[o] : 0.0;
      const double* w = W + static_cast<std::ptrdiff_t>(o) * in;
      for (int i = 0; i < in; ++i) s += w[i] * x[i];
      y[o] = s;
    }
  }

  static void softmax(const double* s, double* p, int n) {
    double mx = s[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, s[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += (p[i] = std::exp(s[i] - mx));
    for (int i = 0; i < n; ++i) p[i] /= sum;
  }

  void block_forward(const BlockOffsets& bo, const double* z, int R, Workspace::Block& blk) const {
    const int H = shape_.hidden;
    const int dh = H / shape_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = params_.data();
    std::copy_n(z, R * H, blk.zin.data());
    for (int r = 0; r < R; ++r) {
      affine(P + bo.wq, nullptr, z + r * H, blk.q.data() + r * H, H, H);
      affine(P + bo.wk, nullptr, z + r * H, blk.k.data() + r * H, H, H);
      affine(P + bo.wv, nullptr, z + r * H, blk.v.data() + r * H, H, H);
    }
    std::vector<double>& row = blk.row;
    for (int h = 0; h < shape_.heads; ++h) {
      double* A = blk.attn.data() + static_cast<std::ptrdiff_t>(h) * R * R;
      for (int r = 0; r < R; ++r) {
        for (int c = 0; c < R; ++c) {
          double s = 0.0;
          for (int t = h * dh; t < (h + 1) * dh; ++t) s += blk.q[static_cast<std::size_t>(r * H + t)] * blk.k[static_cast<std::size_t>(c * H + t)];
          row[static_cast<std::size_t>(c)] = s * scale;
        }
        softmax(row.data(), A + r * R, R);
        for (int t = h * dh; t < (h + 1) * dh; ++t) {
          double s = 0.0;
          for (int c = 0; c < R; ++c) s += A[r * R + c] * blk.v[static_cast<std::size_t>(c * H + t)];
          blk.ctx[static_cast<std::size_t>(r * H + t)] = s;
        }
      }
    }
    for (int r = 0; r < R; ++r) {
      affine(P + bo.wo, P + bo.bo, blk.ctx.data() + r * H, blk.y.data() + r * H, H, H);
      for (int o = 0; o < H; ++o) blk.y[static_cast<std::size_t>(r * H + o)] += z[r * H + o];
      affine(P + bo.wf, P + bo.bf, blk.y.data() + r * H, blk.ff.data() + r * H, H, H);
      for (int o = 0; o < H; ++o) {
        const auto i = static_cast<std::size_t>(r * H + o);
        blk.ff[i] = std::tanh(blk.ff[i]);
        blk.zout[i] = blk.y[i] + blk.ff[i];
      }
    }
  }

  // On entry ws.dz holds d/d(zout); on exit it holds d/d(zin).
  void block_backward(const BlockOffsets& bo, const Workspace::Block& blk, int R, Workspace& ws, double* G) const {
    const int H = shape_.hidden;
    const int dh = H / shape_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = params_.data();
    const auto RH = static_cast<std::size_t>(R * H);

    // zout = y + tanh(W_f y + b_f)
    ws.dy.assign(ws.dz.begin(), ws.dz.end());
    for (int r = 0; r < R; ++r)
      for (int o = 0; o < H; ++o) {
        const auto idx = static_cast<std::size_t>(r * H + o);
        const double g = ws.dz[idx] * (1.0 - blk.ff[idx] * blk.ff[idx]);
        G[bo.bf + static_cast<std::size_t>(o)] += g;
        for (int i = 0; i < H; ++i) {
          G[bo.wf + static_cast<std::size_t>(o * H + i)] += g * blk.y[static_cast<std::size_t>(r * H + i)];
          ws.dy[static_cast<std::size_t>(r * H + i)] += P[bo.wf + static_cast<std::size_t>(o * H + i)] * g;
        }
      }

    // y = zin + W_o ctx + b_o
    ws.dzin.assign(ws.dy.begin(), ws.dy.end());
    ws.dctx.assign(RH, 0.0);
    for (int r = 0; r < R; ++r)
      for (int o = 0; o < H; ++o) {
        const double g = ws.dy[static_cast<std::size_t>(r * H + o)];
        G[bo.bo + static_cast<std::size_t>(o)] += g;
        for (int i = 0; i < H; ++i) {
          G[bo.wo + static_cast<std::size_t>(o * H + i)] += g * blk.ctx[static_cast<std::size_t>(r * H + i)];
          ws.dctx[static_cast<std::size_t>(r * H + i)] += P[bo.wo + static_cast<std::size_t>(o * H + i)] * g;
        }
      }

    // attention
    ws.dq.assign(RH, 0.0);
    ws.dk.assign(RH, 0.0);
    ws.dv.assign(RH, 0.0);
    std::vector<double> dA(static_cast<std::size_t>(R));
    for (int h = 0; h < shape_.heads; ++h) {
      const double* A = blk.attn.data() + static_cast<std::ptrdiff_t>(h) * R * R;
      for (int r = 0; r < R; ++r) {
        double dot = 0.0;
        for (int c = 0; c < R; ++c) {
          double s = 0.0;
          for (int t = h * dh; t < (h + 1) * dh; ++t) {
            s += ws.dctx[static_cast<std::size_t>(r * H + t)] * blk.v[static_cast<std::size_t>(c * H + t)];
            ws.dv[static_cast<std::size_t>(c * H + t)] += A[r * R + c] * ws.dctx[static_cast<std::size_t>(r * H + t)];
          }
          dA[static_cast<std::size_t>(c)] = s;
          dot += A[r * R + c] * s;
        }
        for (int c = 0; c < R; ++c) {
          const double dS = A[r * R + c] * (dA[static_cast<std::size_t>(c)] - dot) * scale;
          for (int t = h * dh; t < (h + 1) * dh; ++t) {
            ws.dq[static_cast<std::size_t>(r * H + t)] += dS * blk.k[static_cast<std::size_t>(c * H + t)];
            ws.dk[static_cast<std::size_t>(c * H + t)] += dS * blk.q[static_cast<std::size_t>(r * H + t)];
          }
        }
      }
    }

    for (int r = 0; r < R; ++r)
      for (int o = 0; o < H; ++o) {
        const auto idx = static_cast<std::size_t>(r * H + o);
        const double gq = ws.dq[idx];
        const double gk = ws.dk[idx];
        const double gv = ws.dv[idx];
        for (int i = 0; i < H; ++i) {
          const double zi = blk.zin[static_cast<std::size_t>(r * H + i)];
          const auto w = static_cast<std::size_t>(o * H + i);
          G[bo.wq + w] += gq * zi;
          G[bo.wk + w] += gk * zi;
          G[bo.wv + w] += gv * zi;
          ws.dzin[static_cast<std::size_t>(r * H + i)] += P[bo.wq + w] * gq + P[bo.wk + w] * gk + P[bo.wv + w] * gv;
        }
      }
    ws.dz.swap(ws.dzin);
  }

  NetworkShape shape_;
  Offsets off_{};
  std::size_t total_ = 0;
  std::vector<double> params_;
};

}  // namespace sociallearn
