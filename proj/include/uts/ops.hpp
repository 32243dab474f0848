#pragma once

// Forward kernels for every tensor operation the model needs. All functions
// are pure: no hidden state, same inputs give bitwise-identical outputs.
// Reverse-mode derivatives live in tape.hpp and reuse these conventions.

#include <algorithm>
#include <cmath>
#include <string>

#include "uts/tensor.hpp"

namespace uts {

enum class Padding { same, valid };
enum class PoolMode { avg, max };
enum class Act { relu, sigmoid };

// ---------------------------------------------------------------------------
// Convolution arithmetic
// ---------------------------------------------------------------------------

struct Conv2dPlan {
  int h_out = 0, w_out = 0;
  int pad_top = 0, pad_left = 0;
  int stride = 1, dilation = 1;
};

// "same" pads with zeros symmetrically, extra pad on the high side when odd.
inline Conv2dPlan conv2d_plan(int h, int w, int kh, int kw, int stride, int dilation,
                              Padding pad) {
  if (stride < 1 || dilation < 1)
    throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
  const int eff_kh = (kh - 1) * dilation + 1;
  const int eff_kw = (kw - 1) * dilation + 1;
  Conv2dPlan p;
  p.stride = stride;
  p.dilation = dilation;
  if (pad == Padding::same) {
    p.h_out = (h + stride - 1) / stride;
    p.w_out = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (p.h_out - 1) * stride + eff_kh - h);
    const int pad_w = std::max(0, (p.w_out - 1) * stride + eff_kw - w);
    p.pad_top = pad_h / 2;
    p.pad_left = pad_w / 2;
  } else {
    if (h < eff_kh || w < eff_kw)
      throw std::invalid_argument("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                                  " smaller than effective kernel " + std::to_string(eff_kh) +
                                  "x" + std::to_string(eff_kw) + " with valid padding");
    p.h_out = (h - eff_kh) / stride + 1;
    p.w_out = (w - eff_kw) / stride + 1;
  }
  return p;
}

// ---------------------------------------------------------------------------
// conv2d: input HWC, kernel KhKwCinCout, bias Cout (empty tensor = no bias)
// ---------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                     int dilation, Padding pad) {
  if (input.rank() != 3)
    throw std::invalid_argument("conv2d: input must be HWC, got " + input.shape_str());
  if (kernel.rank() != 4)
    throw std::invalid_argument("conv2d: kernel must be KhKwCinCout, got " + kernel.shape_str());
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1);
  if (kernel.dim(2) != cin)
    throw std::invalid_argument("conv2d: kernel input channels mismatch, input " +
                                input.shape_str() + " vs kernel " + kernel.shape_str());
  const int cout = kernel.dim(3);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != cout))
    throw std::invalid_argument("conv2d: bias shape " + bias.shape_str() + " vs kernel " +
                                kernel.shape_str());

  const Conv2dPlan p = conv2d_plan(h, w, kh, kw, stride, dilation, pad);
  Tensor out({p.h_out, p.w_out, cout});
  const double* in = input.data.data();
  const double* k = kernel.data.data();
  double* o = out.data.data();
  for (int oy = 0; oy < p.h_out; ++oy) {
    for (int ox = 0; ox < p.w_out; ++ox) {
      double* orow = o + (static_cast<size_t>(oy) * p.w_out + ox) * cout;
      if (!bias.empty())
        for (int c = 0; c < cout; ++c) orow[c] = bias.data[static_cast<size_t>(c)];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky * dilation - p.pad_top;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride + kx * dilation - p.pad_left;
          if (ix < 0 || ix >= w) continue;
          const double* irow = in + (static_cast<size_t>(iy) * w + ix) * cin;
          const double* krow = k + (static_cast<size_t>(ky) * kw + kx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double a = irow[ci];
            const double* kc = krow + static_cast<size_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) orow[c] += a * kc[c];
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense: out[j] = sum_i in[i]*w[i][j] + b[j]; bias may be empty
// ---------------------------------------------------------------------------

inline Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 1)
    throw std::invalid_argument("dense: input must be a vector, got " + input.shape_str());
  if (weight.rank() != 2 || weight.dim(0) != input.dim(0))
    throw std::invalid_argument("dense: dimension mismatch, input " + input.shape_str() +
                                " vs weight " + weight.shape_str());
  const int n = weight.dim(0), m = weight.dim(1);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != m))
    throw std::invalid_argument("dense: bias shape " + bias.shape_str() + " vs weight " +
                                weight.shape_str());
  Tensor out({m});
  if (!bias.empty()) out.data = bias.data;
  for (int i = 0; i < n; ++i) {
    const double a = input.data[static_cast<size_t>(i)];
    const double* wr = weight.data.data() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) out.data[static_cast<size_t>(j)] += a * wr[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul with optional transposes: op(a) is p x q, op(b) is q x r
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
                     bool trans_b = false) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: both operands must be rank-2, got " + a.shape_str() +
                                " and " + b.shape_str());
  const int p = trans_a ? a.dim(1) : a.dim(0);
  const int q = trans_a ? a.dim(0) : a.dim(1);
  const int qb = trans_b ? b.dim(1) : b.dim(0);
  const int r = trans_b ? b.dim(0) : b.dim(1);
  if (q != qb)
    throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor out({p, r});
  for (int i = 0; i < p; ++i) {
    double* orow = out.data.data() + static_cast<size_t>(i) * r;
    for (int kk = 0; kk < q; ++kk) {
      const double av = trans_a ? a.at(kk, i) : a.at(i, kk);
      if (trans_b) {
        for (int j = 0; j < r; ++j) orow[j] += av * b.at(j, kk);
      } else {
        const double* brow = b.data.data() + static_cast<size_t>(kk) * r;
        for (int j = 0; j < r; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// Per-channel mean or max over all spatial positions: HWC -> C.
inline Tensor global_pool(const Tensor& input, PoolMode mode) {
  if (input.rank() != 3)
    throw std::invalid_argument("global_pool: input must be HWC, got " + input.shape_str());
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  Tensor out({c});
  if (mode == PoolMode::avg) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(ch) += input.at(y, x, ch);
    for (int ch = 0; ch < c; ++ch) out.at(ch) /= static_cast<double>(h) * w;
  } else {
    for (int ch = 0; ch < c; ++ch) out.at(ch) = input.at(0, 0, ch);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(ch) = std::max(out.at(ch), input.at(y, x, ch));
  }
  return out;
}

// Per-pixel mean or max across channels: HWC -> HW1.
inline Tensor spatial_pool_over_channels(const Tensor& input, PoolMode mode) {
  if (input.rank() != 3)
    throw std::invalid_argument("spatial_pool: input must be HWC, got " + input.shape_str());
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  Tensor out({h, w, 1});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* px = input.data.data() + (static_cast<size_t>(y) * w + x) * c;
      double v = mode == PoolMode::avg ? 0.0 : px[0];
      if (mode == PoolMode::avg) {
        for (int ch = 0; ch < c; ++ch) v += px[ch];
        v /= c;
      } else {
        for (int ch = 1; ch < c; ++ch) v = std::max(v, px[ch]);
      }
      out.at(y, x, 0) = v;
    }
  }
  return out;
}

// Non-overlapping factor x factor average pooling: HWC -> (H/f)(W/f)C.
inline Tensor avg_pool2d(const Tensor& input, int factor) {
  if (input.rank() != 3)
    throw std::invalid_argument("avg_pool2d: input must be HWC, got " + input.shape_str());
  if (factor < 1) throw std::invalid_argument("avg_pool2d: factor must be >= 1");
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("avg_pool2d: " + input.shape_str() + " not divisible by factor " +
                                std::to_string(factor));
  Tensor out({h / factor, w / factor, c});
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int oy = 0; oy < h / factor; ++oy)
    for (int ox = 0; ox < w / factor; ++ox)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += input.at(oy * factor + dy, ox * factor + dx, ch);
        out.at(oy, ox, ch) = s * inv;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor activation(const Tensor& input, Act kind) {
  Tensor out = input;
  if (kind == Act::relu) {
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : out.data) v = sigmoid_scalar(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax over the last axis, computed with max-subtraction
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& input) {
  if (input.rank() == 0 || input.last_dim() < 1)
    throw std::invalid_argument("softmax: empty last axis");
  Tensor out = input;
  const int n = input.last_dim();
  const int64_t rows = input.row_count();
  for (int64_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * n;
    double m = row[0];
    for (int i = 1; i < n; ++i) m = std::max(m, row[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - m);
      sum += row[i];
    }
    for (int i = 0; i < n; ++i) row[i] /= sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm over the last axis: zero mean, unit variance, then gamma/beta
// ---------------------------------------------------------------------------

inline Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         double epsilon) {
  const int n = input.last_dim();
  if (gamma.rank() != 1 || gamma.dim(0) != n || beta.rank() != 1 || beta.dim(0) != n)
    throw std::invalid_argument("layer_norm: gamma/beta must match last axis " +
                                std::to_string(n) + ", got " + gamma.shape_str() + " and " +
                                beta.shape_str());
  Tensor out = input;
  const int64_t rows = input.row_count();
  for (int64_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * n;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += row[i];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    for (int i = 0; i < n; ++i)
      row[i] = gamma.at(i) * ((row[i] - mean) * inv) + beta.at(i);
  }
  return out;
}

}  // namespace uts
