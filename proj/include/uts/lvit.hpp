#pragma once

// The tile classifier: 3-stage backbone with taps, DAT-SE and D-CBAM
// attention, MLFF fusion, transformer stack, softmax head. Every block
// exists twice: a tape builder used for training, and a pure forward
// wrapper that runs a throwaway tape (used by inference and the oracles).

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "uts/rng.hpp"
#include "uts/tape.hpp"
#include "uts/tensor.hpp"

namespace uts {

// Architecture constants. Channel plan 16/32/64 with taps after each stage;
// the 4x4 top grid becomes 16 tokens of width 64.
struct LVitDims {
  static constexpr int kTile = 32;
  static constexpr int kStageChannels[3] = {16, 32, 64};
  static constexpr int kTokens = 16;
  static constexpr int kEmbed = 64;
  static constexpr int kHeads = 4;
  static constexpr int kFfnHidden = 128;
  static constexpr int kRLin = 8;
  static constexpr int kSeReduction = 8;
  static constexpr int kSeKernel = 7;
  static constexpr int kCbamKernel = 7;
  static constexpr int kCbamDilation = 2;
  static constexpr int kDepth = 2;
};

inline constexpr double kLayerNormEps = 1e-5;

struct LVitConfig {
  bool use_datse = false;
  bool use_dcbam = false;
  bool use_mlff = false;
  bool use_vtm = false;
  bool use_linear_attn = false;

  static LVitConfig from_preset(const std::string& name) {
    LVitConfig c;
    if (name == "backbone") return c;
    if (name == "vtm") {
      c.use_vtm = true;
      return c;
    }
    if (name == "vtm-datse") {
      c.use_vtm = c.use_datse = true;
      return c;
    }
    if (name == "all") {
      c.use_vtm = c.use_datse = c.use_dcbam = c.use_mlff = true;
      return c;
    }
    throw std::invalid_argument("unknown model preset '" + name +
                                "' (backbone, vtm, vtm-datse, all)");
  }

  std::string describe() const {
    std::string s = "datse=" + std::to_string(use_datse) + " dcbam=" + std::to_string(use_dcbam) +
                    " mlff=" + std::to_string(use_mlff) + " vtm=" + std::to_string(use_vtm) +
                    " linear_attn=" + std::to_string(use_linear_attn);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

struct ConvParams {
  Tensor kernel, bias;
};
struct StageParams {
  ConvParams a, b;  // stride-2 then stride-1
};
struct SeBlockParams {
  Tensor w1, w2, spatial_kernel;
  int reduction = LVitDims::kSeReduction;
};
struct CbamParams {
  Tensor w1, w0, dilated_kernel;  // w1: C x C/r, w0: C/r x C, shared across GAP/GMP
  int dilation = LVitDims::kCbamDilation;
};
struct AttentionParams {
  Tensor wq, wk, wv, wo;
  Tensor proj_e, proj_f;  // token-axis projections for the linear variant
  int heads = LVitDims::kHeads;
};
struct FfnParams {
  Tensor w1, b1, w2, b2;
};
struct BlockParams {
  AttentionParams attn;
  FfnParams ffn;
  Tensor ln_gamma, ln_beta;
};

struct FeaturePyramid {
  Tensor phi_l, phi_m, phi_h;
};

struct LVitParams {
  std::array<StageParams, 3> stages;
  SeBlockParams se;
  CbamParams cbam;
  Tensor proj_l, proj_m, proj_h;  // 1x1 fusion projections
  Tensor token_proj;              // 1x1 tokenizer
  Tensor pos_table;               // kTokens x kEmbed, used with the transformer
  std::array<BlockParams, LVitDims::kDepth> vtm;
  Tensor head_w, head_b;
};

// Fixed parameter order: the checkpoint layout, gradient vectors and the
// initialization draw order all follow this list.
inline std::vector<std::pair<std::string, Tensor*>> named_params(LVitParams& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (int s = 0; s < 3; ++s) {
    const std::string base = "backbone.stage" + std::to_string(s);
    out.emplace_back(base + ".conv_a.kernel", &p.stages[static_cast<size_t>(s)].a.kernel);
    out.emplace_back(base + ".conv_a.bias", &p.stages[static_cast<size_t>(s)].a.bias);
    out.emplace_back(base + ".conv_b.kernel", &p.stages[static_cast<size_t>(s)].b.kernel);
    out.emplace_back(base + ".conv_b.bias", &p.stages[static_cast<size_t>(s)].b.bias);
  }
  out.emplace_back("se.w1", &p.se.w1);
  out.emplace_back("se.w2", &p.se.w2);
  out.emplace_back("se.spatial_kernel", &p.se.spatial_kernel);
  out.emplace_back("cbam.w1", &p.cbam.w1);
  out.emplace_back("cbam.w0", &p.cbam.w0);
  out.emplace_back("cbam.dilated_kernel", &p.cbam.dilated_kernel);
  out.emplace_back("mlff.proj_l", &p.proj_l);
  out.emplace_back("mlff.proj_m", &p.proj_m);
  out.emplace_back("mlff.proj_h", &p.proj_h);
  out.emplace_back("token_proj", &p.token_proj);
  out.emplace_back("pos_table", &p.pos_table);
  for (int b = 0; b < LVitDims::kDepth; ++b) {
    const std::string base = "vtm.block" + std::to_string(b);
    BlockParams& blk = p.vtm[static_cast<size_t>(b)];
    out.emplace_back(base + ".attn.wq", &blk.attn.wq);
    out.emplace_back(base + ".attn.wk", &blk.attn.wk);
    out.emplace_back(base + ".attn.wv", &blk.attn.wv);
    out.emplace_back(base + ".attn.wo", &blk.attn.wo);
    out.emplace_back(base + ".attn.proj_e", &blk.attn.proj_e);
    out.emplace_back(base + ".attn.proj_f", &blk.attn.proj_f);
    out.emplace_back(base + ".ffn.w1", &blk.ffn.w1);
    out.emplace_back(base + ".ffn.b1", &blk.ffn.b1);
    out.emplace_back(base + ".ffn.w2", &blk.ffn.w2);
    out.emplace_back(base + ".ffn.b2", &blk.ffn.b2);
    out.emplace_back(base + ".ln_gamma", &blk.ln_gamma);
    out.emplace_back(base + ".ln_beta", &blk.ln_beta);
  }
  out.emplace_back("head.weight", &p.head_w);
  out.emplace_back("head.bias", &p.head_b);
  return out;
}

// All tensors allocated to their architecture shapes, zero-filled.
inline LVitParams make_params() {
  using D = LVitDims;
  LVitParams p;
  int cin = 3;
  for (int s = 0; s < 3; ++s) {
    const int cout = D::kStageChannels[s];
    p.stages[static_cast<size_t>(s)].a.kernel = Tensor({3, 3, cin, cout});
    p.stages[static_cast<size_t>(s)].a.bias = Tensor({cout});
    p.stages[static_cast<size_t>(s)].b.kernel = Tensor({3, 3, cout, cout});
    p.stages[static_cast<size_t>(s)].b.bias = Tensor({cout});
    cin = cout;
  }
  const int c = D::kStageChannels[2], r = D::kSeReduction;
  p.se.w1 = Tensor({c, c / r});
  p.se.w2 = Tensor({c / r, c});
  p.se.spatial_kernel = Tensor({D::kSeKernel, D::kSeKernel, 2, 1});
  p.cbam.w1 = Tensor({c, c / r});
  p.cbam.w0 = Tensor({c / r, c});
  p.cbam.dilated_kernel = Tensor({D::kCbamKernel, D::kCbamKernel, 2, 1});
  p.proj_l = Tensor({1, 1, D::kStageChannels[0], D::kEmbed});
  p.proj_m = Tensor({1, 1, D::kStageChannels[1], D::kEmbed});
  p.proj_h = Tensor({1, 1, D::kStageChannels[2], D::kEmbed});
  p.token_proj = Tensor({1, 1, c, D::kEmbed});
  p.pos_table = Tensor({D::kTokens, D::kEmbed});
  for (auto& blk : p.vtm) {
    blk.attn.wq = Tensor({D::kEmbed, D::kEmbed});
    blk.attn.wk = Tensor({D::kEmbed, D::kEmbed});
    blk.attn.wv = Tensor({D::kEmbed, D::kEmbed});
    blk.attn.wo = Tensor({D::kEmbed, D::kEmbed});
    blk.attn.proj_e = Tensor({D::kTokens, D::kRLin});
    blk.attn.proj_f = Tensor({D::kTokens, D::kRLin});
    blk.ffn.w1 = Tensor({D::kEmbed, D::kFfnHidden});
    blk.ffn.b1 = Tensor({D::kFfnHidden});
    blk.ffn.w2 = Tensor({D::kFfnHidden, D::kEmbed});
    blk.ffn.b2 = Tensor({D::kEmbed});
    blk.ln_gamma = Tensor({D::kEmbed});
    blk.ln_beta = Tensor({D::kEmbed});
  }
  p.head_w = Tensor({D::kEmbed, 3});
  p.head_b = Tensor({3});
  return p;
}

namespace detail {
// fan_in/fan_out with the receptive-field convention for KhKwCinCout conv
// kernels; rank-2 weights use their two extents.
inline void fans(const Tensor& t, double& fan_in, double& fan_out) {
  if (t.rank() == 4) {
    const double rf = static_cast<double>(t.dim(0)) * t.dim(1);
    fan_in = rf * t.dim(2);
    fan_out = rf * t.dim(3);
  } else if (t.rank() == 2) {
    fan_in = t.dim(0);
    fan_out = t.dim(1);
  } else {
    throw std::logic_error("init fans: unexpected rank " + std::to_string(t.rank()));
  }
}

// Uniform Xavier bound sqrt(6/(fan_in+fan_out)) for linear/sigmoid paths.
inline void xavier_fill(Tensor& t, Rng& rng) {
  double fan_in = 0, fan_out = 0;
  fans(t, fan_in, fan_out);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-a, a);
}

// Uniform He bound sqrt(6/fan_in) for weights feeding a relu; keeps the
// activation scale roughly constant through the conv stack, which a plain
// Xavier draw does not (each relu halves the variance).
inline void he_fill(Tensor& t, Rng& rng) {
  double fan_in = 0, fan_out = 0;
  fans(t, fan_in, fan_out);
  const double a = std::sqrt(6.0 / fan_in);
  for (double& v : t.data) v = rng.uniform(-a, a);
}
}  // namespace detail

// He bounds ahead of relu units and for the tokenizer, Xavier elsewhere,
// biases zero, norm gamma one / beta zero. The positional table starts
// near zero so early training is driven by content rather than position.
// Draw order follows named_params, one stream for all.
inline LVitParams init_params(uint64_t seed) {
  LVitParams p = make_params();
  Rng rng(seed);
  for (auto& [name, t] : named_params(p)) {
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".b1") ||
                         name.ends_with(".b2") || name.ends_with("ln_beta");
    const bool is_gamma = name.ends_with("ln_gamma");
    // stage convs, the first squeeze layer of both attention blocks, the
    // fusion projections and the first FFN layer all feed relus; the
    // tokenizer reads post-relu features (half of them dark) and gets the
    // same bound, else the token scale starts too small to train out of
    const bool fan_in_bound = name.find("stage") != std::string::npos ||
                              name.ends_with("se.w1") || name.ends_with("cbam.w1") ||
                              name.starts_with("mlff.") || name.ends_with("ffn.w1") ||
                              name == "token_proj";
    if (is_bias) {
      for (double& v : t->data) v = 0.0;
    } else if (is_gamma) {
      for (double& v : t->data) v = 1.0;
    } else if (name == "pos_table") {
      for (double& v : t->data) v = rng.uniform(-0.02, 0.02);
    } else if (fan_in_bound) {
      detail::he_fill(*t, rng);
    } else {
      detail::xavier_fill(*t, rng);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape-side parameter registration
// ---------------------------------------------------------------------------

struct SeVars {
  Var w1, w2, spatial_kernel;
};
struct CbamVars {
  Var w1, w0, dilated_kernel;
  int dilation = LVitDims::kCbamDilation;
};
struct AttnVars {
  Var wq, wk, wv, wo, proj_e, proj_f;
  int heads = LVitDims::kHeads;
};
struct FfnVars {
  Var w1, b1, w2, b2;
};
struct BlockVars {
  AttnVars attn;
  FfnVars ffn;
  Var ln_gamma, ln_beta;
};
struct LVitVars {
  std::array<std::array<Var, 4>, 3> stages;  // kernel_a, bias_a, kernel_b, bias_b
  SeVars se;
  CbamVars cbam;
  Var proj_l, proj_m, proj_h, token_proj, pos_table;
  std::array<BlockVars, LVitDims::kDepth> vtm;
  Var head_w, head_b;
  std::vector<Var> ordered;  // same order as named_params
};

inline LVitVars register_params(Tape& t, const LVitParams& params) {
  LVitParams copy = params;
  LVitVars v;
  v.cbam.dilation = params.cbam.dilation;
  auto named = named_params(copy);
  std::vector<Var> vars;
  vars.reserve(named.size());
  for (auto& [name, tensor] : named) vars.push_back(t.param(*tensor));
  v.ordered = vars;
  size_t i = 0;
  for (int s = 0; s < 3; ++s)
    for (int j = 0; j < 4; ++j) v.stages[static_cast<size_t>(s)][static_cast<size_t>(j)] = vars[i++];
  v.se.w1 = vars[i++];
  v.se.w2 = vars[i++];
  v.se.spatial_kernel = vars[i++];
  v.cbam.w1 = vars[i++];
  v.cbam.w0 = vars[i++];
  v.cbam.dilated_kernel = vars[i++];
  v.proj_l = vars[i++];
  v.proj_m = vars[i++];
  v.proj_h = vars[i++];
  v.token_proj = vars[i++];
  v.pos_table = vars[i++];
  for (auto& blk : v.vtm) {
    blk.attn.wq = vars[i++];
    blk.attn.wk = vars[i++];
    blk.attn.wv = vars[i++];
    blk.attn.wo = vars[i++];
    blk.attn.proj_e = vars[i++];
    blk.attn.proj_f = vars[i++];
    blk.ffn.w1 = vars[i++];
    blk.ffn.b1 = vars[i++];
    blk.ffn.w2 = vars[i++];
    blk.ffn.b2 = vars[i++];
    blk.ln_gamma = vars[i++];
    blk.ln_beta = vars[i++];
  }
  v.head_w = vars[i++];
  v.head_b = vars[i++];
  return v;
}

// ---------------------------------------------------------------------------
// Block builders (tape graphs)
// ---------------------------------------------------------------------------

inline std::array<Var, 3> build_backbone(Tape& t, Var tile, const LVitVars& v) {
  const Tensor& tv = t.value(tile);
  if (tv.rank() != 3 || tv.dim(0) != LVitDims::kTile || tv.dim(1) != LVitDims::kTile ||
      tv.dim(2) != 3)
    throw std::invalid_argument("backbone: tile must be [32x32x3], got " + tv.shape_str());
  std::array<Var, 3> taps;
  // tiles arrive in [0,1]; shift to +-0.5 so the all-positive luminance
  // common mode does not push every first-stage unit the same direction
  Tensor half(tv.shape);
  for (double& d : half.data) d = -0.5;
  Var x = t.add(tile, t.input(std::move(half)));
  for (int s = 0; s < 3; ++s) {
    const auto& st = v.stages[static_cast<size_t>(s)];
    x = t.relu(t.conv2d(x, st[0], st[1], 2, 1, Padding::same));
    x = t.relu(t.conv2d(x, st[2], st[3], 1, 1, Padding::same));
    taps[static_cast<size_t>(s)] = x;
  }
  return taps;
}

// X' = X * s * M: channel gate from the squeezed GAP vector, spatial gate
// from a conv over the channel-pooled avg/max pair.
inline Var build_dat_se(Tape& t, Var x, const SeVars& se) {
  Var z = t.global_pool(x, PoolMode::avg);
  Var s = t.sigmoid(t.dense(t.relu(t.dense(z, se.w1, Var{})), se.w2, Var{}));
  Var cat = t.concat_last(t.spatial_pool(x, PoolMode::avg), t.spatial_pool(x, PoolMode::max));
  Var m = t.sigmoid(t.conv2d(cat, se.spatial_kernel, Var{}, 1, 1, Padding::same));
  return t.mul_pixel(t.mul_channel(x, s), m);
}

// M_c = sigma(W0 relu(W1 GAP) + W0 relu(W1 GMP)), shared weights; M_s from
// the dilated conv over the channel-pooled pair.
inline Var build_d_cbam(Tape& t, Var x, const CbamVars& cb) {
  Var pa = t.dense(t.relu(t.dense(t.global_pool(x, PoolMode::avg), cb.w1, Var{})), cb.w0, Var{});
  Var pm = t.dense(t.relu(t.dense(t.global_pool(x, PoolMode::max), cb.w1, Var{})), cb.w0, Var{});
  Var mc = t.sigmoid(t.add(pa, pm));
  Var cat = t.concat_last(t.spatial_pool(x, PoolMode::avg), t.spatial_pool(x, PoolMode::max));
  Var ms = t.sigmoid(t.conv2d(cat, cb.dilated_kernel, Var{}, 1, cb.dilation, Padding::same));
  return t.mul_pixel(t.mul_channel(x, mc), ms);
}

// Project each tap to the common width, pool the finer grids down to the
// coarse 4x4 one, sum, ReLU.
inline Var build_mlff(Tape& t, Var phi_l, Var phi_m, Var phi_h, const LVitVars& v) {
  Var pl = t.conv2d(phi_l, v.proj_l, Var{}, 1, 1, Padding::same);
  Var pm = t.conv2d(phi_m, v.proj_m, Var{}, 1, 1, Padding::same);
  Var ph = t.conv2d(phi_h, v.proj_h, Var{}, 1, 1, Padding::same);
  const int target = t.value(ph).dim(0);
  pl = t.avg_pool2d(pl, t.value(pl).dim(0) / target);
  pm = t.avg_pool2d(pm, t.value(pm).dim(0) / target);
  return t.relu(t.add(t.add(pl, pm), ph));
}

namespace detail {
inline Var attention_core(Tape& t, Var q, Var k, Var v, int heads) {
  const int d = t.value(q).dim(1);
  if (d % heads != 0)
    throw std::invalid_argument("attention: embed width " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  const int dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Var out{};
  for (int h = 0; h < heads; ++h) {
    Var qi = t.slice_last(q, h * dk, dk);
    Var ki = t.slice_last(k, h * dk, dk);
    Var vi = t.slice_last(v, h * dk, dk);
    Var att = t.softmax(t.scale(t.matmul(qi, ki, false, true), scale));
    Var head = t.matmul(att, vi);
    out = h == 0 ? head : t.concat_last(out, head);
  }
  return out;
}
}  // namespace detail

inline Var build_mhsa(Tape& t, Var tokens, const AttnVars& a) {
  Var q = t.matmul(tokens, a.wq);
  Var k = t.matmul(tokens, a.wk);
  Var v = t.matmul(tokens, a.wv);
  return t.matmul(detail::attention_core(t, q, k, v, a.heads), a.wo);
}

// Keys/values projected along the token axis to r_lin rows before the usual
// scaled dot-product, so each layer costs O(n * r_lin * D).
inline Var build_linear_attention(Tape& t, Var tokens, const AttnVars& a) {
  const int n = t.value(tokens).dim(0);
  const Tensor& ev = t.value(a.proj_e);
  const Tensor& fv = t.value(a.proj_f);
  if (ev.rank() != 2 || ev.dim(0) != n || fv.rank() != 2 || fv.dim(0) != n)
    throw std::invalid_argument("linear attention: projections " + ev.shape_str() + "/" +
                                fv.shape_str() + " do not match " + std::to_string(n) +
                                " tokens");
  Var q = t.matmul(tokens, a.wq);
  Var k = t.matmul(a.proj_e, t.matmul(tokens, a.wk), true, false);
  Var v = t.matmul(a.proj_f, t.matmul(tokens, a.wv), true, false);
  return t.matmul(detail::attention_core(t, q, k, v, a.heads), a.wo);
}

// Y = LayerNorm(X + attention(X) + FFN(X)): both branches read the block
// input, one shared residual normalization.
inline Var build_transformer_block(Tape& t, Var tokens, const BlockVars& b, bool linear_attn) {
  Var att = linear_attn ? build_linear_attention(t, tokens, b.attn) : build_mhsa(t, tokens, b.attn);
  Var h = t.relu(t.add_row_bias(t.matmul(tokens, b.ffn.w1), b.ffn.b1));
  Var ffn = t.add_row_bias(t.matmul(h, b.ffn.w2), b.ffn.b2);
  Var y = t.add(t.add(tokens, att), ffn);
  return t.layer_norm(y, b.ln_gamma, b.ln_beta, kLayerNormEps);
}

// Full pipeline to class probabilities.
inline Var build_lvit(Tape& t, Var tile, const LVitVars& v, const LVitConfig& cfg) {
  std::array<Var, 3> taps = build_backbone(t, tile, v);
  Var x = taps[2];
  if (cfg.use_datse) x = build_dat_se(t, x, v.se);
  if (cfg.use_dcbam) x = build_d_cbam(t, x, v.cbam);
  Var feat = cfg.use_mlff ? build_mlff(t, taps[0], taps[1], x, v) : x;
  Var tok_map = t.conv2d(feat, v.token_proj, Var{}, 1, 1, Padding::same);
  Var tokens = t.reshape(tok_map, {LVitDims::kTokens, LVitDims::kEmbed});
  if (cfg.use_vtm) {
    tokens = t.add(tokens, v.pos_table);
    for (const auto& blk : v.vtm)
      tokens = build_transformer_block(t, tokens, blk, cfg.use_linear_attn);
  }
  Var logits = t.dense(t.mean_rows(tokens), v.head_w, v.head_b);
  return t.softmax(logits);
}

// Rejects configurations whose parameters were never allocated (e.g. a
// checkpoint stripped of unused blocks).
inline void validate_config(const LVitParams& p, const LVitConfig& cfg) {
  if (cfg.use_datse && (p.se.w1.empty() || p.se.w2.empty() || p.se.spatial_kernel.empty()))
    throw std::invalid_argument("DAT-SE enabled but its parameters are missing");
  if (cfg.use_dcbam && (p.cbam.w1.empty() || p.cbam.w0.empty() || p.cbam.dilated_kernel.empty()))
    throw std::invalid_argument("D-CBAM enabled but its parameters are missing");
  if (cfg.use_mlff && (p.proj_l.empty() || p.proj_m.empty() || p.proj_h.empty()))
    throw std::invalid_argument("MLFF enabled but its parameters are missing");
  if (cfg.use_vtm)
    for (const auto& blk : p.vtm)
      if (blk.attn.wq.empty() || blk.ffn.w1.empty())
        throw std::invalid_argument("VTM enabled but its parameters are missing");
}

// ---------------------------------------------------------------------------
// Pure forward wrappers
// ---------------------------------------------------------------------------

inline Tensor dat_se_forward(const Tensor& x, const SeBlockParams& p) {
  Tape t;
  SeVars v{t.param(p.w1), t.param(p.w2), t.param(p.spatial_kernel)};
  return t.value(build_dat_se(t, t.input(x), v));
}

inline Tensor d_cbam_forward(const Tensor& x, const CbamParams& p) {
  Tape t;
  CbamVars v;
  v.w1 = t.param(p.w1);
  v.w0 = t.param(p.w0);
  v.dilated_kernel = t.param(p.dilated_kernel);
  v.dilation = p.dilation;
  return t.value(build_d_cbam(t, t.input(x), v));
}

inline Tensor mlff_fuse(const FeaturePyramid& pyr, const Tensor& proj_l, const Tensor& proj_m,
                        const Tensor& proj_h) {
  Tape t;
  LVitVars v;
  v.proj_l = t.param(proj_l);
  v.proj_m = t.param(proj_m);
  v.proj_h = t.param(proj_h);
  return t.value(
      build_mlff(t, t.input(pyr.phi_l), t.input(pyr.phi_m), t.input(pyr.phi_h), v));
}

inline Tensor mhsa_forward(const Tensor& tokens, const AttentionParams& p) {
  Tape t;
  AttnVars v;
  v.wq = t.param(p.wq);
  v.wk = t.param(p.wk);
  v.wv = t.param(p.wv);
  v.wo = t.param(p.wo);
  v.heads = p.heads;
  return t.value(build_mhsa(t, t.input(tokens), v));
}

inline Tensor linear_attention_forward(const Tensor& tokens, const AttentionParams& p) {
  Tape t;
  AttnVars v;
  v.wq = t.param(p.wq);
  v.wk = t.param(p.wk);
  v.wv = t.param(p.wv);
  v.wo = t.param(p.wo);
  v.proj_e = t.param(p.proj_e);
  v.proj_f = t.param(p.proj_f);
  v.heads = p.heads;
  return t.value(build_linear_attention(t, t.input(tokens), v));
}

inline Tensor transformer_block_forward(const Tensor& tokens, const BlockParams& p,
                                        bool linear_attn = false) {
  Tape t;
  BlockVars v;
  v.attn.wq = t.param(p.attn.wq);
  v.attn.wk = t.param(p.attn.wk);
  v.attn.wv = t.param(p.attn.wv);
  v.attn.wo = t.param(p.attn.wo);
  if (!p.attn.proj_e.empty()) v.attn.proj_e = t.param(p.attn.proj_e);
  if (!p.attn.proj_f.empty()) v.attn.proj_f = t.param(p.attn.proj_f);
  v.attn.heads = p.attn.heads;
  v.ffn.w1 = t.param(p.ffn.w1);
  v.ffn.b1 = t.param(p.ffn.b1);
  v.ffn.w2 = t.param(p.ffn.w2);
  v.ffn.b2 = t.param(p.ffn.b2);
  v.ln_gamma = t.param(p.ln_gamma);
  v.ln_beta = t.param(p.ln_beta);
  return t.value(build_transformer_block(t, t.input(tokens), v, linear_attn));
}

inline FeaturePyramid backbone_forward(const Tensor& tile, const LVitParams& p) {
  Tape t;
  LVitVars v = register_params(t, p);
  std::array<Var, 3> taps = build_backbone(t, t.input(tile), v);
  return {t.value(taps[0]), t.value(taps[1]), t.value(taps[2])};
}

inline std::array<double, 3> lvit_forward(const Tensor& tile, const LVitParams& p,
                                          const LVitConfig& cfg) {
  validate_config(p, cfg);
  Tape t;
  LVitVars v = register_params(t, p);
  const Tensor& probs = t.value(build_lvit(t, t.input(tile), v, cfg));
  return {probs.at(0), probs.at(1), probs.at(2)};
}

inline int lvit_predict(const Tensor& tile, const LVitParams& p, const LVitConfig& cfg) {
  const std::array<double, 3> probs = lvit_forward(tile, p, cfg);
  int best = 0;
  for (int c = 1; c < 3; ++c)
    if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
  return best;
}

}  // namespace uts
