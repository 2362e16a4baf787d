// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "vision/model.hpp"

#include "common/random.hpp"

namespace resmlp {

namespace {

template <typename N, typename Fn>
void visit_norm(const std::string& prefix, N& norm, Fn& fn) {
  if (norm.alpha) fn(prefix + ".alpha", *norm.alpha);
  if (norm.beta) fn(prefix + ".beta", *norm.beta);
}

template <typename S, typename Fn>
void visit_scale(const std::string& prefix, S& post, Fn& fn) {
  if (post.scale) fn(prefix + ".scale", *post.scale);
  if (post.bias) fn(prefix + ".bias", *post.bias);
}

template <typename M, typename Fn>
void visit_model(M& m, Fn& fn) {
  fn(std::string("patch_embed.weight"), m.patch_weight);
  fn(std::string("patch_embed.bias"), m.patch_bias);
  if (m.pos_embed) fn(std::string("pos_embed"), *m.pos_embed);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    if (b.has_mix) {
      visit_norm(p + ".norm1", b.norm1, fn);
      fn(p + ".mix.weight", b.mix_weight);
      fn(p + ".mix.bias", b.mix_bias);
      if (b.mix2_weight) fn(p + ".mix2.weight", *b.mix2_weight);
      if (b.mix2_bias) fn(p + ".mix2.bias", *b.mix2_bias);
      visit_scale(p + ".post1", b.post1, fn);
    }
    visit_norm(p + ".norm2", b.norm2, fn);
    fn(p + ".fc1.weight", b.fc1_weight);
    fn(p + ".fc1.bias", b.fc1_bias);
    fn(p + ".fc2.weight", b.fc2_weight);
    fn(p + ".fc2.bias", b.fc2_bias);
    visit_scale(p + ".post2", b.post2, fn);
  }
  visit_norm(std::string("final_norm"), m.final_norm, fn);
  if (m.cls_token) fn(std::string("cls_token"), *m.cls_token);
  for (std::size_t i = 0; i < m.class_layers.size(); ++i) {
    auto& c = m.class_layers[i];
    const std::string p = "class_layers." + std::to_string(i);
    visit_norm(p + ".norm1", c.norm1, fn);
    fn(p + ".agg.weight", c.agg_weight);
    fn(p + ".agg.bias", c.agg_bias);
    visit_scale(p + ".post1", c.post1, fn);
    visit_norm(p + ".norm2", c.norm2, fn);
    fn(p + ".fc1.weight", c.fc1_weight);
    fn(p + ".fc1.bias", c.fc1_bias);
    fn(p + ".fc2.weight", c.fc2_weight);
    fn(p + ".fc2.bias", c.fc2_bias);
    visit_scale(p + ".post2", c.post2, fn);
  }
  fn(std::string("head.weight"), m.head_weight);
  fn(std::string("head.bias"), m.head_bias);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
Var<T> param(Tape<T>& tape, const std::optional<Tensor<T>>& t) {
  return t ? tape.parameter(*t) : Var<T>();
}

// Each fused branch applies its LayerScale before the residual add; these
// helpers fold it into the adjacent linear maps.
template <typename T>
Tensor<T> ones_like_dim(std::int64_t d) {
  return Tensor<T>(Shape{d}, T(1));
}

// Cross-patch (or class-aggregation) branch with a square-free linear mixer:
// s * (A (alpha x + beta) + b) + t == A ((s alpha) x + s beta) + (b s^T + t).
template <typename T>
void fuse_mixing_branch(Norm<T>& norm, Tensor<T>& bias, BranchScale<T>& post, std::int64_t d) {
  const Tensor<T> s = post.scale ? *post.scale : ones_like_dim<T>(d);
  Tensor<T> alpha = norm.alpha ? *norm.alpha : ones_like_dim<T>(d);
  Tensor<T> beta = norm.beta ? *norm.beta : Tensor<T>(Shape{d});
  for (std::int64_t c = 0; c < d; ++c) {
    alpha[c] = s[c] * alpha[c];
    beta[c] = s[c] * beta[c];
  }
  norm.alpha = std::move(alpha);
  norm.beta = std::move(beta);
  const std::int64_t rows = bias.shape()[0];
  Tensor<T> matrix(Shape{rows, d});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < d; ++c) {
      T v = bias[r] * s[c];
      if (post.bias) v = v + (*post.bias)[c];
      matrix[r * d + c] = v;
    }
  }
  bias = std::move(matrix);
  post = BranchScale<T>{};
}

// Channel MLP: B (alpha z + beta) + b1 -> (B diag alpha) z + (B beta + b1);
// s * (C h + b2) + t -> (diag s C) h + (s b2 + t).
template <typename T>
void fuse_channel_branch(Norm<T>& norm, Tensor<T>& w1, Tensor<T>& b1, Tensor<T>& w2, Tensor<T>& b2,
                         BranchScale<T>& post) {
  const std::int64_t hid = w1.shape()[0];
  const std::int64_t in = w1.shape()[1];
  if (norm.alpha || norm.beta) {
    for (std::int64_t o = 0; o < hid; ++o) {
      T shift = 0;
      for (std::int64_t i = 0; i < in; ++i) {
        const T w = w1[o * in + i];
        if (norm.beta) shift += w * (*norm.beta)[i];
        if (norm.alpha) w1[o * in + i] = w * (*norm.alpha)[i];
      }
      b1[o] = b1[o] + shift;
    }
    norm.alpha.reset();
    norm.beta.reset();
  }
  const std::int64_t out = w2.shape()[0];
  const std::int64_t mid = w2.shape()[1];
  if (post.scale || post.bias) {
    for (std::int64_t o = 0; o < out; ++o) {
      const T s = post.scale ? (*post.scale)[o] : T(1);
      if (post.scale) {
        for (std::int64_t i = 0; i < mid; ++i) w2[o * mid + i] = s * w2[o * mid + i];
      }
      b2[o] = s * b2[o];
      if (post.bias) b2[o] = b2[o] + (*post.bias)[o];
    }
    post = BranchScale<T>{};
  }
}

template <typename T>
Var<T> channel_mlp(const Var<T>& x, const Norm<T>& norm, const Tensor<T>& w1, const Tensor<T>& b1,
                   const Tensor<T>& w2, const Tensor<T>& b2, const BranchScale<T>& post,
                   Activation act) {
  auto& tape = x.tape();
  auto y = apply_norm(x, norm, tape);
  y = linear(y, tape.parameter(w1), tape.parameter(b1));
  y = activation(y, act);
  y = linear(y, tape.parameter(w2), tape.parameter(b2));
  return apply_branch_scale(y, post, tape);
}

}  // namespace

template <typename T>
void VisionModel<T>::visit(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  auto f = [&](const std::string& n, Tensor<T>& t) { fn(n, t); };
  visit_model(*this, f);
}

template <typename T>
void VisionModel<T>::visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  auto f = [&](const std::string& n, const Tensor<T>& t) { fn(n, t); };
  visit_model(*this, f);
}

template <typename T>
std::uint64_t VisionModel<T>::parameter_count() const {
  std::uint64_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
VisionModel<T> VisionModel<T>::skeleton(const ModelConfig& cfg, bool fused) {
  cfg.validate();
  const std::int64_t d = cfg.dim;
  const std::int64_t tokens = cfg.tokens();
  const std::int64_t hid = cfg.hidden();
  const bool ln = cfg.pre_norm == PreNorm::layernorm;
  auto full_norm = [&] {
    Norm<T> n;
    n.standardize = ln;
    n.alpha = Tensor<T>(Shape{d});
    n.beta = Tensor<T>(Shape{d});
    return n;
  };
  auto folded_norm = [&] {
    Norm<T> n;
    n.standardize = ln;
    return n;
  };
  auto post = [&] {
    BranchScale<T> s;
    s.scale = Tensor<T>(Shape{d});
    if (cfg.post_affine_bias) s.bias = Tensor<T>(Shape{d});
    return s;
  };

  VisionModel m;
  m.config = cfg;
  m.fused = fused;
  m.patch_weight = Tensor<T>(Shape{d, cfg.patch_dim()});
  m.patch_bias = Tensor<T>(Shape{d});
  if (cfg.positional_embedding) m.pos_embed = Tensor<T>(Shape{tokens, d});
  for (int i = 0; i < cfg.depth; ++i) {
    BlockParams<T> b;
    b.has_mix = cfg.communication != Communication::none;
    if (cfg.communication == Communication::linear) {
      b.norm1 = full_norm();
      b.mix_weight = Tensor<T>(Shape{tokens, tokens});
      b.mix_bias = fused ? Tensor<T>(Shape{tokens, d}) : Tensor<T>(Shape{tokens});
      if (!fused) b.post1 = post();
    } else if (cfg.communication == Communication::mlp) {
      const std::int64_t h = cfg.comm_hidden();
      b.norm1 = full_norm();
      b.mix_weight = Tensor<T>(Shape{h, tokens});
      b.mix_bias = Tensor<T>(Shape{h});
      b.mix2_weight = Tensor<T>(Shape{tokens, h});
      b.mix2_bias = Tensor<T>(Shape{tokens});
      b.post1 = post();
    }
    b.norm2 = fused ? folded_norm() : full_norm();
    b.fc1_weight = Tensor<T>(Shape{hid, d});
    b.fc1_bias = Tensor<T>(Shape{hid});
    b.fc2_weight = Tensor<T>(Shape{d, hid});
    b.fc2_bias = Tensor<T>(Shape{d});
    if (!fused) b.post2 = post();
    m.blocks.push_back(std::move(b));
  }
  m.final_norm = (fused && cfg.pooling == Pooling::average) ? folded_norm() : full_norm();
  if (cfg.pooling == Pooling::class_mlp) {
    m.cls_token = Tensor<T>(Shape{d});
    for (int i = 0; i < 2; ++i) {
      ClassLayerParams<T> c;
      c.norm1 = full_norm();
      c.agg_weight = Tensor<T>(Shape{1, tokens + 1});
      c.agg_bias = fused ? Tensor<T>(Shape{1, d}) : Tensor<T>(Shape{1});
      if (!fused) c.post1 = post();
      c.norm2 = fused ? folded_norm() : full_norm();
      c.fc1_weight = Tensor<T>(Shape{hid, d});
      c.fc1_bias = Tensor<T>(Shape{hid});
      c.fc2_weight = Tensor<T>(Shape{d, hid});
      c.fc2_bias = Tensor<T>(Shape{d});
      if (!fused) c.post2 = post();
      m.class_layers.push_back(std::move(c));
    }
  }
  m.head_weight = Tensor<T>(Shape{cfg.num_classes, d});
  m.head_bias = Tensor<T>(Shape{cfg.num_classes});
  return m;
}

template <typename T>
VisionModel<T> VisionModel<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  VisionModel m = skeleton(cfg, false);
  Rng rng(seed);
  const T eps = static_cast<T>(cfg.layerscale());
  m.visit([&](const std::string& name, Tensor<T>& t) {
    if (ends_with(name, ".alpha")) {
      t.fill(T(1));
    } else if (ends_with(name, ".beta") || ends_with(name, ".bias") || name == "cls_token") {
      t.fill(T(0));
    } else if (ends_with(name, ".scale")) {
      t.fill(eps);
    } else {
      for (auto& v : t.values()) v = static_cast<T>(rng.trunc_normal(0.02));
    }
  });
  return m;
}

template <typename T>
Var<T> VisionModel<T>::forward(Tape<T>& tape, const Tensor<T>& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != config.channels || s[2] != config.image_size ||
      s[3] != config.image_size) {
    throw DimensionError("forward: batch " + shape_string(s) + " does not match model geometry [b x " +
                         std::to_string(config.channels) + "x" + std::to_string(config.image_size) +
                         "x" + std::to_string(config.image_size) + "]");
  }
  auto patches = tape.constant(patchify(images, config.patch_size));
  auto x = linear(patches, tape.parameter(patch_weight), tape.parameter(patch_bias));
  if (pos_embed) x = add(x, tape.parameter(*pos_embed));
  for (const auto& b : blocks) x = block_forward(x, b, config);
  x = apply_norm(x, final_norm, tape);
  Var<T> pooled = config.pooling == Pooling::average ? reduce(x, 1, ReduceKind::mean)
                                                     : class_mlp_pool(x, *this);
  return linear(pooled, tape.parameter(head_weight), tape.parameter(head_bias));
}

template <typename T>
Tensor<T> VisionModel<T>::logits(const Tensor<T>& images) const {
  Tape<T> tape(false);
  return forward(tape, images).value();
}

template <typename T>
template <typename U>
VisionModel<U> VisionModel<T>::cast() const {
  auto out = VisionModel<U>::skeleton(config, fused);
  std::vector<const Tensor<T>*> src;
  visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.visit([&](const std::string& name, Tensor<U>& t) {
    if (i >= src.size() || src[i]->shape() != t.shape()) {
      throw InvariantError("cast: parameter layout mismatch at " + name);
    }
    t = src[i++]->template cast<U>();
  });
  if (i != src.size()) throw InvariantError("cast: parameter count mismatch");
  return out;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int p) {
  const auto& s = images.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw RankError("patchify: expected [C, H, W] or [b, C, H, W], got " + shape_string(s));
  }
  const bool batched = s.size() == 4;
  const std::int64_t batch = batched ? s[0] : 1;
  const std::int64_t c = s[s.size() - 3];
  const std::int64_t h = s[s.size() - 2];
  const std::int64_t w = s[s.size() - 1];
  if (p <= 0 || h != w || h % p != 0) {
    throw DimensionError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " cannot be split into " + std::to_string(p) + "x" + std::to_string(p) +
                         " patches");
  }
  const std::int64_t n = h / p;
  const std::int64_t cols = c * p * p;
  Shape os = batched ? Shape{batch, n * n, cols} : Shape{n * n, cols};
  Tensor<T> out(os);
  const T* src = images.data();
  T* dst = out.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < n; ++j) {
        T* row = dst + ((b * n + i) * n + j) * cols;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t r = 0; r < p; ++r) {
            const T* px = src + ((b * c + ch) * h + i * p + r) * w + j * p;
            std::copy(px, px + p, row + (ch * p + r) * p);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Var<T> apply_norm(const Var<T>& x, const Norm<T>& norm, Tape<T>& tape) {
  Var<T> y = x;
  if (norm.standardize) y = layer_norm(y, Var<T>(), Var<T>());
  if (norm.alpha || norm.beta) y = scale_shift(y, param(tape, norm.alpha), param(tape, norm.beta));
  return y;
}

template <typename T>
Var<T> apply_branch_scale(const Var<T>& x, const BranchScale<T>& post, Tape<T>& tape) {
  if (!post.scale && !post.bias) return x;
  return scale_shift(x, param(tape, post.scale), param(tape, post.bias));
}

template <typename T>
Var<T> block_forward(const Var<T>& x, const BlockParams<T>& p, const ModelConfig& cfg) {
  const auto& s = x.shape();
  if ((s.size() != 2 && s.size() != 3) || s[s.size() - 2] != cfg.tokens() || s.back() != cfg.dim) {
    throw DimensionError("block_forward: input " + shape_string(s) + " does not match [" +
                         std::to_string(cfg.tokens()) + "x" + std::to_string(cfg.dim) + "]");
  }
  auto& tape = x.tape();
  Var<T> out = x;
  if (p.has_mix) {
    auto y = apply_norm(x, p.norm1, tape);
    if (p.mix2_weight) {
      auto h = token_mix(tape.parameter(p.mix_weight), y, tape.parameter(p.mix_bias));
      h = activation(h, cfg.activation);
      y = token_mix(tape.parameter(*p.mix2_weight), h, param(tape, p.mix2_bias));
    } else {
      y = token_mix(tape.parameter(p.mix_weight), y, tape.parameter(p.mix_bias));
    }
    y = apply_branch_scale(y, p.post1, tape);
    out = add(out, y);
  }
  auto y = channel_mlp(out, p.norm2, p.fc1_weight, p.fc1_bias, p.fc2_weight, p.fc2_bias, p.post2,
                       cfg.activation);
  return add(out, y);
}

template <typename T>
Var<T> class_mlp_pool(const Var<T>& x, const VisionModel<T>& model) {
  const auto& cfg = model.config;
  if (!model.cls_token || model.class_layers.empty()) {
    throw ConfigError("class-MLP pooling needs a class token and class layers");
  }
  auto& tape = x.tape();
  const bool single = x.shape().size() == 2;
  Var<T> patches = single ? reshape(x, Shape{1, x.shape()[0], x.shape()[1]}) : x;
  const auto& s = patches.shape();
  if (s.size() != 3 || s[1] != cfg.tokens() || s[2] != cfg.dim) {
    throw DimensionError("class_mlp_pool: input " + shape_string(x.shape()) + " does not match config");
  }
  if (cfg.class_mlp_stop_gradient) patches = detach(patches);
  const std::int64_t b = s[0];
  const std::int64_t d = s[2];
  Var<T> cls = add(tape.constant(Tensor<T>(Shape{b, 1, d})), tape.parameter(*model.cls_token));
  for (const auto& layer : model.class_layers) {
    auto tokens = concat(cls, patches, 1);
    auto y = apply_norm(tokens, layer.norm1, tape);
    auto agg = token_mix(tape.parameter(layer.agg_weight), y, tape.parameter(layer.agg_bias));
    agg = apply_branch_scale(agg, layer.post1, tape);
    cls = add(cls, agg);
    auto m = channel_mlp(cls, layer.norm2, layer.fc1_weight, layer.fc1_bias, layer.fc2_weight,
                         layer.fc2_bias, layer.post2, cfg.activation);
    cls = add(cls, m);
  }
  return single ? reshape(cls, Shape{d}) : reshape(cls, Shape{b, d});
}

template <typename T>
VisionModel<T> fuse_affine(const VisionModel<T>& model) {
  VisionModel<T> out = model;
  if (model.fused) return out;
  out.fused = true;
  const std::int64_t d = model.config.dim;
  for (auto& b : out.blocks) {
    if (b.has_mix && !b.mix2_weight) fuse_mixing_branch(b.norm1, b.mix_bias, b.post1, d);
    fuse_channel_branch(b.norm2, b.fc1_weight, b.fc1_bias, b.fc2_weight, b.fc2_bias, b.post2);
  }
  for (auto& c : out.class_layers) {
    fuse_mixing_branch(c.norm1, c.agg_bias, c.post1, d);
    fuse_channel_branch(c.norm2, c.fc1_weight, c.fc1_bias, c.fc2_weight, c.fc2_bias, c.post2);
  }
  if (model.config.pooling == Pooling::average) {
    // head(mean(alpha x + beta)) == (W diag alpha) mean(x) + (W beta + b)
    BranchScale<T> none;
    Tensor<T> unused_w(Shape{1, 1});
    Tensor<T> unused_b(Shape{1});
    fuse_channel_branch(out.final_norm, out.head_weight, out.head_bias, unused_w, unused_b, none);
  }
  return out;
}

template <typename T>
int block_stage_count(const BlockParams<T>& b) {
  auto norm_stages = [](const Norm<T>& n) { return (n.standardize ? 1 : 0) + ((n.alpha || n.beta) ? 1 : 0); };
  auto scale_stages = [](const BranchScale<T>& s) { return (s.scale || s.bias) ? 1 : 0; };
  int n = 0;
  if (b.has_mix) n += norm_stages(b.norm1) + (b.mix2_weight ? 3 : 1) + scale_stages(b.post1);
  n += norm_stages(b.norm2) + 3 + scale_stages(b.post2);
  return n;
}

#define RESMLP_INSTANTIATE_VISION(T)                                                   \
  template struct VisionModel<T>;                                                      \
  template Tensor<T> patchify(const Tensor<T>&, int);                                  \
  template Var<T> apply_norm(const Var<T>&, const Norm<T>&, Tape<T>&);                 \
  template Var<T> apply_branch_scale(const Var<T>&, const BranchScale<T>&, Tape<T>&);  \
  template Var<T> block_forward(const Var<T>&, const BlockParams<T>&, const ModelConfig&); \
  template Var<T> class_mlp_pool(const Var<T>&, const VisionModel<T>&);                \
  template VisionModel<T> fuse_affine(const VisionModel<T>&);                          \
  template int block_stage_count(const BlockParams<T>&);

RESMLP_INSTANTIATE_VISION(float)
RESMLP_INSTANTIATE_VISION(double)

template VisionModel<double> VisionModel<float>::cast<double>() const;
template VisionModel<float> VisionModel<double>::cast<float>() const;
template VisionModel<float> VisionModel<float>::cast<float>() const;
template VisionModel<double> VisionModel<double>::cast<double>() const;

#undef RESMLP_INSTANTIATE_VISION

}  // namespace resmlp
