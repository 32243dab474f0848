#pragma once

// Reverse-mode autodiff over whole tensors. A Tape records one forward pass;
// backward() replays the recorded closures in reverse creation order, which
// is a valid topological order because every op only consumes earlier nodes.
// Tapes are one-shot: build, backward once, read gradients, discard.

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "uts/ops.hpp"
#include "uts/tensor.hpp"

namespace uts {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var input(Tensor v) { return push(std::move(v), nullptr, false); }
  Var param(Tensor v) { return push(std::move(v), nullptr, true); }

  const Tensor& value(Var v) const { return node(v.id).value; }
  const Tensor& grad(Var v) const { return node(v.id).grad; }
  size_t size() const { return nodes_.size(); }

  // -- arithmetic ----------------------------------------------------------

  Var add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += value(b).data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var scale(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    return push(std::move(out), [a, c](Tape& t, const Tensor& g) {
      Tensor gi = g;
      for (double& v : gi.data) v *= c;
      t.accumulate(a, gi);
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(value(a), value(b), "mul");
    Tensor out = value(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
      Tensor ga(g.shape);
      Tensor gb(g.shape);
      const Tensor& av = t.value(a);
      const Tensor& bv = t.value(b);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] = g.data[i] * bv.data[i];
        gb.data[i] = g.data[i] * av.data[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  Var sum_all(Var x) {
    double s = 0.0;
    for (double v : value(x).data) s += v;
    Tensor out({1});
    out.data[0] = s;
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
      Tensor gx(t.value(x).shape);
      for (double& v : gx.data) v = g.data[0];
      t.accumulate(x, gx);
    });
  }

  // x: n x m, b: m. Adds b to every row.
  Var add_row_bias(Var x, Var b) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(b);
    if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
      throw std::invalid_argument("add_row_bias: " + xv.shape_str() + " vs " + bv.shape_str());
    const int n = xv.dim(0), m = xv.dim(1);
    Tensor out = xv;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out.at(i, j) += bv.at(j);
    return push(std::move(out), [x, b, n, m](Tape& t, const Tensor& g) {
      Tensor gb(t.value(b).shape);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb.at(j) += g.at(i, j);
      t.accumulate(x, g);
      t.accumulate(b, gb);
    });
  }

  // x: HWC, s: C. out[y][x][c] = x[y][x][c] * s[c].
  Var mul_channel(Var x, Var s) {
    const Tensor& xv = value(x);
    const Tensor& sv = value(s);
    if (xv.rank() != 3 || sv.rank() != 1 || sv.dim(0) != xv.dim(2))
      throw std::invalid_argument("mul_channel: " + xv.shape_str() + " vs " + sv.shape_str());
    const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    Tensor out = xv;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) *= sv.at(ch);
    return push(std::move(out), [x, s, h, w, c](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const Tensor& sv = t.value(s);
      Tensor gx(xv.shape);
      Tensor gs(sv.shape);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int ch = 0; ch < c; ++ch) {
            gx.at(y, xx, ch) = g.at(y, xx, ch) * sv.at(ch);
            gs.at(ch) += g.at(y, xx, ch) * xv.at(y, xx, ch);
          }
      t.accumulate(x, gx);
      t.accumulate(s, gs);
    });
  }

  // x: HWC, m: HW1. out[y][x][c] = x[y][x][c] * m[y][x][0].
  Var mul_pixel(Var x, Var m) {
    const Tensor& xv = value(x);
    const Tensor& mv = value(m);
    if (xv.rank() != 3 || mv.rank() != 3 || mv.dim(0) != xv.dim(0) || mv.dim(1) != xv.dim(1) ||
        mv.dim(2) != 1)
      throw std::invalid_argument("mul_pixel: " + xv.shape_str() + " vs " + mv.shape_str());
    const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    Tensor out = xv;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) *= mv.at(y, xx, 0);
    return push(std::move(out), [x, m, h, w, c](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const Tensor& mv = t.value(m);
      Tensor gx(xv.shape);
      Tensor gm(mv.shape);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int ch = 0; ch < c; ++ch) {
            gx.at(y, xx, ch) = g.at(y, xx, ch) * mv.at(y, xx, 0);
            gm.at(y, xx, 0) += g.at(y, xx, ch) * xv.at(y, xx, ch);
          }
      t.accumulate(x, gx);
      t.accumulate(m, gm);
    });
  }

  // -- linear algebra ------------------------------------------------------

  Var conv2d(Var x, Var k, Var b, int stride, int dilation, Padding pad) {
    const Tensor& xv = value(x);
    const Tensor& kv = value(k);
    Tensor out = uts::conv2d(xv, kv, b.valid() ? value(b) : Tensor{}, stride, dilation, pad);
    const Conv2dPlan plan =
        conv2d_plan(xv.dim(0), xv.dim(1), kv.dim(0), kv.dim(1), stride, dilation, pad);
    return push(std::move(out), [x, k, b, plan](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const Tensor& kv = t.value(k);
      const int h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
      const int kh = kv.dim(0), kw = kv.dim(1), cout = kv.dim(3);
      Tensor gx(xv.shape);
      Tensor gk(kv.shape);
      Tensor gb = b.valid() ? Tensor(t.value(b).shape) : Tensor{};
      for (int oy = 0; oy < plan.h_out; ++oy)
        for (int ox = 0; ox < plan.w_out; ++ox) {
          const double* grow =
              g.data.data() + (static_cast<size_t>(oy) * plan.w_out + ox) * cout;
          if (b.valid())
            for (int c = 0; c < cout; ++c) gb.at(c) += grow[c];
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * plan.stride + ky * plan.dilation - plan.pad_top;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * plan.stride + kx * plan.dilation - plan.pad_left;
              if (ix < 0 || ix >= w) continue;
              const double* irow = xv.data.data() + (static_cast<size_t>(iy) * w + ix) * cin;
              double* gxrow = gx.data.data() + (static_cast<size_t>(iy) * w + ix) * cin;
              for (int ci = 0; ci < cin; ++ci) {
                const size_t koff =
                    ((static_cast<size_t>(ky) * kw + kx) * cin + ci) * cout;
                double acc = 0.0;
                for (int c = 0; c < cout; ++c) {
                  acc += kv.data[koff + c] * grow[c];
                  gk.data[koff + c] += irow[ci] * grow[c];
                }
                gxrow[ci] += acc;
              }
            }
          }
        }
      t.accumulate(x, gx);
      t.accumulate(k, gk);
      if (b.valid()) t.accumulate(b, gb);
    });
  }

  Var dense(Var x, Var w, Var b) {
    Tensor out = uts::dense(value(x), value(w), b.valid() ? value(b) : Tensor{});
    return push(std::move(out), [x, w, b](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const Tensor& wv = t.value(w);
      const int n = wv.dim(0), m = wv.dim(1);
      Tensor gx(xv.shape);
      Tensor gw(wv.shape);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) {
          acc += wv.at(i, j) * g.at(j);
          gw.at(i, j) = xv.at(i) * g.at(j);
        }
        gx.at(i) = acc;
      }
      t.accumulate(x, gx);
      t.accumulate(w, gw);
      if (b.valid()) t.accumulate(b, g);
    });
  }

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    Tensor out = uts::matmul(value(a), value(b), trans_a, trans_b);
    return push(std::move(out), [a, b, trans_a, trans_b](Tape& t, const Tensor& g) {
      const Tensor& av = t.value(a);
      const Tensor& bv = t.value(b);
      Tensor ga, gb;
      if (!trans_a && !trans_b) {
        ga = uts::matmul(g, bv, false, true);
        gb = uts::matmul(av, g, true, false);
      } else if (trans_a && !trans_b) {
        ga = uts::matmul(bv, g, false, true);
        gb = uts::matmul(av, g, false, false);
      } else if (!trans_a && trans_b) {
        ga = uts::matmul(g, bv, false, false);
        gb = uts::matmul(g, av, true, false);
      } else {
        ga = uts::matmul(bv, g, true, true);
        gb = uts::matmul(g, av, true, true);
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  // -- shape plumbing ------------------------------------------------------

  Var reshape(Var x, std::vector<int> shape) {
    Tensor out(std::move(shape), value(x).data);
    std::vector<int> back_shape = value(x).shape;
    return push(std::move(out), [x, back_shape](Tape& t, const Tensor& g) {
      t.accumulate(x, Tensor(back_shape, g.data));
    });
  }

  Var concat_last(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != bv.rank())
      throw std::invalid_argument("concat_last: rank mismatch " + av.shape_str() + " vs " +
                                  bv.shape_str());
    for (int d = 0; d + 1 < av.rank(); ++d)
      if (av.dim(d) != bv.dim(d))
        throw std::invalid_argument("concat_last: " + av.shape_str() + " vs " + bv.shape_str());
    const int ca = av.last_dim(), cb = bv.last_dim();
    std::vector<int> shape = av.shape;
    shape.back() = ca + cb;
    Tensor out(shape);
    const int64_t rows = av.row_count();
    for (int64_t r = 0; r < rows; ++r) {
      for (int i = 0; i < ca; ++i) out.data[r * (ca + cb) + i] = av.data[r * ca + i];
      for (int i = 0; i < cb; ++i) out.data[r * (ca + cb) + ca + i] = bv.data[r * cb + i];
    }
    return push(std::move(out), [a, b, ca, cb, rows](Tape& t, const Tensor& g) {
      Tensor ga(t.value(a).shape);
      Tensor gb(t.value(b).shape);
      for (int64_t r = 0; r < rows; ++r) {
        for (int i = 0; i < ca; ++i) ga.data[r * ca + i] = g.data[r * (ca + cb) + i];
        for (int i = 0; i < cb; ++i) gb.data[r * cb + i] = g.data[r * (ca + cb) + ca + i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  Var slice_last(Var x, int start, int len) {
    const Tensor& xv = value(x);
    const int c = xv.last_dim();
    if (start < 0 || len < 1 || start + len > c)
      throw std::invalid_argument("slice_last: [" + std::to_string(start) + "," +
                                  std::to_string(start + len) + ") out of " + xv.shape_str());
    std::vector<int> shape = xv.shape;
    shape.back() = len;
    Tensor out(shape);
    const int64_t rows = xv.row_count();
    for (int64_t r = 0; r < rows; ++r)
      for (int i = 0; i < len; ++i) out.data[r * len + i] = xv.data[r * c + start + i];
    return push(std::move(out), [x, start, len, c, rows](Tape& t, const Tensor& g) {
      Tensor gx(t.value(x).shape);
      for (int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < len; ++i) gx.data[r * c + start + i] = g.data[r * len + i];
      t.accumulate(x, gx);
    });
  }

  // -- pooling -------------------------------------------------------------

  Var global_pool(Var x, PoolMode mode) {
    const Tensor& xv = value(x);
    Tensor out = uts::global_pool(xv, mode);
    const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    std::vector<int> argmax;
    if (mode == PoolMode::max) {
      // first maximum in scan order wins, so ties route deterministically
      argmax.assign(static_cast<size_t>(c), 0);
      for (int ch = 0; ch < c; ++ch) {
        double best = xv.at(0, 0, ch);
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            if (xv.at(y, xx, ch) > best) {
              best = xv.at(y, xx, ch);
              argmax[static_cast<size_t>(ch)] = y * w + xx;
            }
      }
    }
    return push(std::move(out),
                [x, mode, h, w, c, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                  Tensor gx(t.value(x).shape);
                  if (mode == PoolMode::avg) {
                    const double inv = 1.0 / (static_cast<double>(h) * w);
                    for (int y = 0; y < h; ++y)
                      for (int xx = 0; xx < w; ++xx)
                        for (int ch = 0; ch < c; ++ch) gx.at(y, xx, ch) = g.at(ch) * inv;
                  } else {
                    for (int ch = 0; ch < c; ++ch) {
                      const int pos = argmax[static_cast<size_t>(ch)];
                      gx.at(pos / w, pos % w, ch) = g.at(ch);
                    }
                  }
                  t.accumulate(x, gx);
                });
  }

  Var spatial_pool(Var x, PoolMode mode) {
    const Tensor& xv = value(x);
    Tensor out = uts::spatial_pool_over_channels(xv, mode);
    const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    std::vector<int> argmax;
    if (mode == PoolMode::max) {
      argmax.assign(static_cast<size_t>(h) * w, 0);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double best = xv.at(y, xx, 0);
          for (int ch = 1; ch < c; ++ch)
            if (xv.at(y, xx, ch) > best) {
              best = xv.at(y, xx, ch);
              argmax[static_cast<size_t>(y) * w + xx] = ch;
            }
        }
    }
    return push(std::move(out),
                [x, mode, h, w, c, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                  Tensor gx(t.value(x).shape);
                  for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                      if (mode == PoolMode::avg) {
                        const double gv = g.at(y, xx, 0) / c;
                        for (int ch = 0; ch < c; ++ch) gx.at(y, xx, ch) = gv;
                      } else {
                        gx.at(y, xx, argmax[static_cast<size_t>(y) * w + xx]) = g.at(y, xx, 0);
                      }
                    }
                  t.accumulate(x, gx);
                });
  }

  Var avg_pool2d(Var x, int factor) {
    Tensor out = uts::avg_pool2d(value(x), factor);
    return push(std::move(out), [x, factor](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
      Tensor gx(xv.shape);
      const double inv = 1.0 / (static_cast<double>(factor) * factor);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int ch = 0; ch < c; ++ch)
            gx.at(y, xx, ch) = g.at(y / factor, xx / factor, ch) * inv;
      t.accumulate(x, gx);
    });
  }

  // mean over rows of an n x d matrix -> d
  Var mean_rows(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2)
      throw std::invalid_argument("mean_rows: input must be rank-2, got " + xv.shape_str());
    const int n = xv.dim(0), d = xv.dim(1);
    Tensor out({d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out.at(j) += xv.at(i, j);
    for (int j = 0; j < d; ++j) out.at(j) /= n;
    return push(std::move(out), [x, n, d](Tape& t, const Tensor& g) {
      Tensor gx(t.value(x).shape);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gx.at(i, j) = g.at(j) / n;
      t.accumulate(x, gx);
    });
  }

  // -- nonlinearities ------------------------------------------------------

  Var relu(Var x) {
    Tensor out = activation(value(x), Act::relu);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      Tensor gx = g;
      for (size_t i = 0; i < gx.data.size(); ++i)
        if (xv.data[i] <= 0.0) gx.data[i] = 0.0;
      t.accumulate(x, gx);
    });
  }

  Var sigmoid(Var x) {
    Tensor out = activation(value(x), Act::sigmoid);
    const int id_out = static_cast<int>(nodes_.size());
    return push(std::move(out), [x, id_out](Tape& t, const Tensor& g) {
      const Tensor& y = t.node(id_out).value;
      Tensor gx = g;
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= y.data[i] * (1.0 - y.data[i]);
      t.accumulate(x, gx);
    });
  }

  Var softmax(Var x) {
    Tensor out = uts::softmax(value(x));
    const int id_out = static_cast<int>(nodes_.size());
    return push(std::move(out), [x, id_out](Tape& t, const Tensor& g) {
      const Tensor& y = t.node(id_out).value;
      const int n = y.last_dim();
      const int64_t rows = y.row_count();
      Tensor gx(y.shape);
      for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y.data.data() + r * n;
        const double* gr = g.data.data() + r * n;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += gr[i] * yr[i];
        for (int i = 0; i < n; ++i) gx.data[r * n + i] = yr[i] * (gr[i] - dot);
      }
      t.accumulate(x, gx);
    });
  }

  Var layer_norm(Var x, Var gamma, Var beta, double epsilon) {
    const Tensor& xv = value(x);
    Tensor out = uts::layer_norm(xv, value(gamma), value(beta), epsilon);
    return push(std::move(out), [x, gamma, beta, epsilon](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(x);
      const Tensor& gv = t.value(gamma);
      const int n = xv.last_dim();
      const int64_t rows = xv.row_count();
      Tensor gx(xv.shape);
      Tensor ggamma(gv.shape);
      Tensor gbeta(gv.shape);
      for (int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data.data() + r * n;
        const double* grow = g.data.data() + r * n;
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += row[i];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + epsilon);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
          const double xhat = (row[i] - mean) * inv;
          const double dxhat = grow[i] * gv.at(i);
          ggamma.at(i) += grow[i] * xhat;
          gbeta.at(i) += grow[i];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat;
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        for (int i = 0; i < n; ++i) {
          const double xhat = (row[i] - mean) * inv;
          const double dxhat = grow[i] * gv.at(i);
          gx.data[r * n + i] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
      }
      t.accumulate(x, gx);
      t.accumulate(gamma, ggamma);
      t.accumulate(beta, gbeta);
    });
  }

  // -- loss ----------------------------------------------------------------

  // Negative log-likelihood on already-softmaxed probabilities. The floor
  // keeps the loss finite; when it engages, the gradient is zero there.
  Var nll(Var probs, int label) {
    const Tensor& pv = value(probs);
    if (pv.rank() != 1 || label < 0 || label >= pv.dim(0))
      throw std::invalid_argument("nll: label " + std::to_string(label) + " out of range for " +
                                  pv.shape_str());
    constexpr double kFloor = 1e-12;
    const double p = pv.at(label);
    Tensor out = Tensor::scalar(-std::log(std::max(p, kFloor)));
    return push(std::move(out), [probs, label, p](Tape& t, const Tensor& g) {
      Tensor gp(t.value(probs).shape);
      if (p > kFloor) gp.at(label) = -g.at(0) / p;
      t.accumulate(probs, gp);
    });
  }

  // -- driver --------------------------------------------------------------

  void backward(Var loss) {
    if (backward_done_) throw std::logic_error("Tape::backward called twice");
    backward_done_ = true;
    Tensor& lg = node(loss.id).grad;
    if (lg.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got " +
                                  node(loss.id).value.shape_str());
    lg.data[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back(*this, nodes_[static_cast<size_t>(i)].grad);
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Tensor&)> back;
    bool is_param = false;
  };

  Var push(Tensor v, std::function<void(Tape&, const Tensor&)> back, bool is_param = false) {
    Node n;
    n.grad = Tensor(v.shape);
    n.value = std::move(v);
    n.back = std::move(back);
    n.is_param = is_param;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void accumulate(Var v, const Tensor& g) {
    Tensor& dst = node(v.id).grad;
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
  }

  Node& node(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("Tape: bad var id " + std::to_string(id));
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& node(int id) const { return const_cast<Tape*>(this)->node(id); }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace uts
