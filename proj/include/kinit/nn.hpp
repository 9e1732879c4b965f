#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kinit/rng.hpp"
#include "kinit/tensor.hpp"

namespace kinit::nn {

// When enabled, every forward op verifies its output is finite. Used by the
// test suites; off by default for speed.
inline std::atomic<bool>& checked_mode_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}
inline void set_checked_mode(bool on) { checked_mode_flag().store(on); }

template <typename T>
void assert_finite(const Tensor<T>& t, const char* where) {
  if (!checked_mode_flag().load(std::memory_order_relaxed)) return;
  if (!t.all_finite()) throw std::runtime_error(std::string("non-finite values after ") + where);
}

// ---------------------------------------------------------------------------
// conv2d: Same padding, stride 1, cross-correlation convention. Input is
// [H x W x Cin], kernels [kh x kw x Cin x Cout], bias [Cout]. Even kernels
// pad asymmetrically (extra row/col at bottom/right).

template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                    Tensor<T>& out) {
  require(in.rank() == 3 && w.rank() == 4 && b.rank() == 1, Errc::ShapeMismatch,
          "conv2d expects input [HxWxC], kernels [khxkwxCixCo], bias [Co]");
  const int H = in.dim(0), W = in.dim(1), Ci = in.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), Co = w.dim(3);
  require(w.dim(2) == Ci, Errc::ShapeMismatch, "kernel input channels mismatch");
  require(b.dim(0) == Co, Errc::ShapeMismatch, "bias length mismatch");

  if (out.shape != std::vector<int>{H, W, Co}) out = Tensor<T>({H, W, Co});
  const int pad_top = (kh - 1) / 2;
  const int pad_left = (kw - 1) / 2;

  const T* inp = in.data.data();
  const T* wp = w.data.data();
  const T* bp = b.data.data();
  T* op = out.data.data();

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      T* o = op + (static_cast<std::size_t>(y) * W + x) * Co;
      for (int co = 0; co < Co; ++co) o[co] = bp[co];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = y + ky - pad_top;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = x + kx - pad_left;
          if (ix < 0 || ix >= W) continue;
          const T* irow = inp + (static_cast<std::size_t>(iy) * W + ix) * Ci;
          const T* wrow = wp + (static_cast<std::size_t>(ky) * kw + kx) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T v = irow[ci];
            const T* wr = wrow + static_cast<std::size_t>(ci) * Co;
            for (int co = 0; co < Co; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
  assert_finite(out, "conv2d");
}

// din is overwritten; dw and db are accumulated into (callers zero them once
// per batch item).
template <typename T>
void conv2d_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout,
                     Tensor<T>& din, Tensor<T>& dw, Tensor<T>& db) {
  const int H = in.dim(0), W = in.dim(1), Ci = in.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), Co = w.dim(3);
  require(dout.shape == std::vector<int>({H, W, Co}), Errc::ShapeMismatch,
          "conv2d_backward: dout shape mismatch");
  require(dw.shape == w.shape && db.shape == std::vector<int>({Co}), Errc::ShapeMismatch,
          "conv2d_backward: gradient buffer shape mismatch");
  if (din.shape != in.shape) din = Tensor<T>(in.shape);
  din.zero();

  const int pad_top = (kh - 1) / 2;
  const int pad_left = (kw - 1) / 2;

  const T* inp = in.data.data();
  const T* wp = w.data.data();
  const T* dop = dout.data.data();
  T* dip = din.data.data();
  T* dwp = dw.data.data();
  T* dbp = db.data.data();

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const T* dorow = dop + (static_cast<std::size_t>(y) * W + x) * Co;
      for (int co = 0; co < Co; ++co) dbp[co] += dorow[co];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = y + ky - pad_top;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = x + kx - pad_left;
          if (ix < 0 || ix >= W) continue;
          const std::size_t in_off = (static_cast<std::size_t>(iy) * W + ix) * Ci;
          const std::size_t w_off = (static_cast<std::size_t>(ky) * kw + kx) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T* wr = wp + w_off + static_cast<std::size_t>(ci) * Co;
            T* dwr = dwp + w_off + static_cast<std::size_t>(ci) * Co;
            const T v = inp[in_off + static_cast<std::size_t>(ci)];
            T acc = T(0);
            for (int co = 0; co < Co; ++co) {
              const T g = dorow[co];
              acc += g * wr[co];
              dwr[co] += v * g;
            }
            dip[in_off + static_cast<std::size_t>(ci)] += acc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// maxpool: p x p window, stride p, ceil semantics (right/bottom edge windows
// truncated). p = 1 is the identity. Ties break toward the first element in
// row-major window order. argmax stores flat input indices for the backward
// pass.

template <typename T>
void maxpool_forward(const Tensor<T>& in, int p, Tensor<T>& out, Tensor<std::int64_t>& argmax) {
  require(in.rank() == 3, Errc::ShapeMismatch, "maxpool expects [HxWxC]");
  require(p >= 1, Errc::BadArgument, "pool size must be >= 1");
  const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const int Ho = (H + p - 1) / p;
  const int Wo = (W + p - 1) / p;
  if (out.shape != std::vector<int>{Ho, Wo, C}) out = Tensor<T>({Ho, Wo, C});
  if (argmax.shape != out.shape) argmax = Tensor<std::int64_t>(out.shape);

  const T* inp = in.data.data();
  for (int oy = 0; oy < Ho; ++oy) {
    const int y0 = oy * p, y1 = std::min(y0 + p, H);
    for (int ox = 0; ox < Wo; ++ox) {
      const int x0 = ox * p, x1 = std::min(x0 + p, W);
      T* o = out.data.data() + (static_cast<std::size_t>(oy) * Wo + ox) * C;
      std::int64_t* a = argmax.data.data() + (static_cast<std::size_t>(oy) * Wo + ox) * C;
      for (int c = 0; c < C; ++c) {
        std::int64_t best_idx = (static_cast<std::int64_t>(y0) * W + x0) * C + c;
        T best = inp[best_idx];
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            const std::int64_t idx = (static_cast<std::int64_t>(y) * W + x) * C + c;
            if (inp[idx] > best) {
              best = inp[idx];
              best_idx = idx;
            }
          }
        }
        o[c] = best;
        a[c] = best_idx;
      }
    }
  }
  assert_finite(out, "maxpool");
}

template <typename T>
void maxpool_backward(const Tensor<std::int64_t>& argmax, const Tensor<T>& dout,
                      const std::vector<int>& in_shape, Tensor<T>& din) {
  require(dout.shape == argmax.shape, Errc::ShapeMismatch, "maxpool_backward shape mismatch");
  if (din.shape != in_shape) din = Tensor<T>(in_shape);
  din.zero();
  for (std::size_t i = 0; i < dout.data.size(); ++i) {
    din.data[static_cast<std::size_t>(argmax.data[i])] += dout.data[i];
  }
}

// ---------------------------------------------------------------------------
// ReLU. Backward gates on "value > 0"; pre- and post-activation values give
// the same gate, so callers may apply it in place and pass the output.

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out) {
  if (out.shape != in.shape) out = Tensor<T>(in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.data) {
    if (v < T(0)) v = T(0);
  }
}

template <typename T>
void relu_backward(const Tensor<T>& gate, const Tensor<T>& dout, Tensor<T>& din) {
  require(gate.shape == dout.shape, Errc::ShapeMismatch, "relu_backward shape mismatch");
  if (din.shape != dout.shape) din = Tensor<T>(dout.shape);
  for (std::size_t i = 0; i < dout.data.size(); ++i) {
    din.data[i] = gate.data[i] > T(0) ? dout.data[i] : T(0);
  }
}

// ---------------------------------------------------------------------------
// dense: out = x W + b with x [n], W [n x m], b [m].

template <typename T>
void dense_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& out) {
  require(in.rank() == 1 && w.rank() == 2 && b.rank() == 1, Errc::ShapeMismatch,
          "dense expects x [n], W [n x m], b [m]");
  const int n = in.dim(0), m = w.dim(1);
  require(w.dim(0) == n && b.dim(0) == m, Errc::ShapeMismatch, "dense shape mismatch");
  if (out.shape != std::vector<int>{m}) out = Tensor<T>({m});
  for (int j = 0; j < m; ++j) out.data[static_cast<std::size_t>(j)] = b.data[static_cast<std::size_t>(j)];
  const T* wp = w.data.data();
  for (int i = 0; i < n; ++i) {
    const T v = in.data[static_cast<std::size_t>(i)];
    const T* wr = wp + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out.data[static_cast<std::size_t>(j)] += v * wr[j];
  }
  assert_finite(out, "dense");
}

template <typename T>
void dense_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout,
                    Tensor<T>& din, Tensor<T>& dw, Tensor<T>& db) {
  const int n = in.dim(0), m = w.dim(1);
  require(dout.shape == std::vector<int>({m}), Errc::ShapeMismatch,
          "dense_backward: dout shape mismatch");
  require(dw.shape == w.shape && db.shape == std::vector<int>({m}), Errc::ShapeMismatch,
          "dense_backward: gradient buffer shape mismatch");
  if (din.shape != in.shape) din = Tensor<T>(in.shape);
  const T* wp = w.data.data();
  T* dwp = dw.data.data();
  for (int j = 0; j < m; ++j) db.data[static_cast<std::size_t>(j)] += dout.data[static_cast<std::size_t>(j)];
  for (int i = 0; i < n; ++i) {
    const T* wr = wp + static_cast<std::size_t>(i) * m;
    T* dwr = dwp + static_cast<std::size_t>(i) * m;
    const T v = in.data[static_cast<std::size_t>(i)];
    T acc = T(0);
    for (int j = 0; j < m; ++j) {
      const T g = dout.data[static_cast<std::size_t>(j)];
      acc += g * wr[j];
      dwr[j] += v * g;
    }
    din.data[static_cast<std::size_t>(i)] = acc;
  }
}

// ---------------------------------------------------------------------------
// Softmax + categorical cross-entropy, stabilized by max subtraction.
// The gradient w.r.t. the logits is probs - one_hot.

template <typename T>
T softmax_cross_entropy_index(const Tensor<T>& logits, int target, Tensor<T>& probs) {
  require(logits.rank() == 1, Errc::ShapeMismatch, "logits must be rank 1");
  const int k = logits.dim(0);
  require(target >= 0 && target < k, Errc::BadArgument, "target class out of range");
  if (probs.shape != logits.shape) probs = Tensor<T>(logits.shape);

  T mx = logits.data[0];
  for (const T v : logits.data) mx = std::max(mx, v);
  T sum = T(0);
  for (int j = 0; j < k; ++j) {
    const T e = std::exp(logits.data[static_cast<std::size_t>(j)] - mx);
    probs.data[static_cast<std::size_t>(j)] = e;
    sum += e;
  }
  for (auto& p : probs.data) p /= sum;
  const T loss = -std::log(probs.data[static_cast<std::size_t>(target)]);
  assert_finite(probs, "softmax");
  return loss;
}

template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits,
                                              const Tensor<T>& one_hot_target) {
  require(one_hot_target.shape == logits.shape, Errc::ShapeMismatch,
          "target shape must match logits");
  int target = -1;
  for (int j = 0; j < logits.dim(0); ++j) {
    const T v = one_hot_target.data[static_cast<std::size_t>(j)];
    require(v == T(0) || v == T(1), Errc::BadArgument, "target must be one-hot");
    if (v == T(1)) {
      require(target < 0, Errc::BadArgument, "target must be one-hot");
      target = j;
    }
  }
  require(target >= 0, Errc::BadArgument, "target must be one-hot");
  Tensor<T> probs;
  const T loss = softmax_cross_entropy_index(logits, target, probs);
  return {loss, std::move(probs)};
}

// ---------------------------------------------------------------------------
// Adam. One state per parameter tensor.

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t t = 0;
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  explicit AdamState(const std::vector<int>& shape, T learning_rate = T(1e-3))
      : m(shape), v(shape), lr(learning_rate) {}
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state) {
  require(param.shape == grad.shape && param.shape == state.m.shape, Errc::ShapeMismatch,
          "adam_step: parameter/gradient/state shapes must mirror");
  state.t += 1;
  const T b1 = state.beta1, b2 = state.beta2;
  const T corr1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1), static_cast<double>(state.t)));
  const T corr2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2), static_cast<double>(state.t)));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const T g = grad.data[i];
    state.m.data[i] = b1 * state.m.data[i] + (T(1) - b1) * g;
    state.v.data[i] = b2 * state.v.data[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m.data[i] / corr1;
    const T v_hat = state.v.data[i] / corr2;
    param.data[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// He-style uniform init in +/- sqrt(6 / fan_in), deterministic per seed.

template <typename T>
Tensor<T> seeded_init(const std::vector<int>& shape, int fan_in, std::uint64_t seed) {
  require(fan_in > 0, Errc::BadArgument, "fan_in must be positive");
  Tensor<T> t(shape);
  const double bound = std::sqrt(6.0 / fan_in);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace kinit::nn
