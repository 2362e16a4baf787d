// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "seq2seq/model.hpp"

#include <cmath>

#include "common/random.hpp"

namespace resmlp {

void Seq2SeqConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("vocab_size must be at least 4 (three reserved ids plus one token)");
  if (dim <= 0) throw ConfigError("seq2seq dim must be positive");
  if (hidden <= 0) throw ConfigError("seq2seq hidden must be positive");
  if (encoder_depth < 0 || decoder_depth < 0) throw ConfigError("seq2seq depths must be non-negative");
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("seq2seq dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (max_len < 2) throw ConfigError("seq2seq max_len must be at least 2");
  if (!std::isfinite(layerscale_init)) throw ConfigError("seq2seq layerscale_init must be finite");
}

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
  fn(std::string("src_embed"), m.src_embed);
  fn(std::string("tgt_embed"), m.tgt_embed);
  if (m.src_pos) fn(std::string("src_pos"), *m.src_pos);
  if (m.tgt_pos) fn(std::string("tgt_pos"), *m.tgt_pos);
  for (std::size_t i = 0; i < m.encoder.size(); ++i) {
    auto& l = m.encoder[i];
    const std::string p = "encoder." + std::to_string(i);
    visit_norm(p + ".norm1", l.norm1, fn);
    fn(p + ".mix.weight", l.mix_weight);
    fn(p + ".mix.bias", l.mix_bias);
    visit_scale(p + ".post1", l.post1, fn);
    visit_norm(p + ".norm2", l.norm2, fn);
    fn(p + ".fc1.weight", l.fc1_weight);
    fn(p + ".fc1.bias", l.fc1_bias);
    fn(p + ".fc2.weight", l.fc2_weight);
    fn(p + ".fc2.bias", l.fc2_bias);
    visit_scale(p + ".post2", l.post2, fn);
  }
  visit_norm(std::string("encoder_norm"), m.encoder_norm, fn);
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    auto& l = m.decoder[i];
    const std::string p = "decoder." + std::to_string(i);
    visit_norm(p + ".norm1", l.norm1, fn);
    fn(p + ".mix.packed", l.mix_packed);
    fn(p + ".mix.bias", l.mix_bias);
    visit_scale(p + ".post1", l.post1, fn);
    visit_norm(p + ".norm2", l.norm2, fn);
    fn(p + ".attn.q.weight", l.attn.q_weight);
    fn(p + ".attn.q.bias", l.attn.q_bias);
    fn(p + ".attn.k.weight", l.attn.k_weight);
    fn(p + ".attn.k.bias", l.attn.k_bias);
    fn(p + ".attn.v.weight", l.attn.v_weight);
    fn(p + ".attn.v.bias", l.attn.v_bias);
    fn(p + ".attn.o.weight", l.attn.o_weight);
    fn(p + ".attn.o.bias", l.attn.o_bias);
    visit_scale(p + ".post2", l.post2, fn);
    visit_norm(p + ".norm3", l.norm3, fn);
    fn(p + ".fc1.weight", l.fc1_weight);
    fn(p + ".fc1.bias", l.fc1_bias);
    fn(p + ".fc2.weight", l.fc2_weight);
    fn(p + ".fc2.bias", l.fc2_bias);
    visit_scale(p + ".post3", l.post3, fn);
  }
  visit_norm(std::string("decoder_norm"), m.decoder_norm, fn);
  fn(std::string("out.weight"), m.out_weight);
  fn(std::string("out.bias"), m.out_bias);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
Var<T> param(Tape<T>& tape, const std::optional<Tensor<T>>& t) {
  return t ? tape.parameter(*t) : Var<T>();
}

template <typename T>
Var<T> channel_mlp(const Var<T>& x, const Norm<T>& norm, const Tensor<T>& w1, const Tensor<T>& b1,
                   const Tensor<T>& w2, const Tensor<T>& b2, const BranchScale<T>& post, Activation act) {
  auto& tape = x.tape();
  auto y = apply_norm(x, norm, tape);
  y = activation(linear(y, tape.parameter(w1), tape.parameter(b1)), act);
  y = linear(y, tape.parameter(w2), tape.parameter(b2));
  return add(x, apply_branch_scale(y, post, tape));
}

void check_ids(const TokenBatch& b, const Seq2SeqConfig& cfg, const char* which) {
  if (b.batch < 1) throw DataError(std::string(which) + " batch is empty");
  if (b.max_len > cfg.max_len) {
    throw CapacityError(std::string(which) + " length " + std::to_string(b.max_len) + " exceeds the model capacity " +
                        std::to_string(cfg.max_len));
  }
  if (static_cast<int>(b.lengths.size()) != b.batch ||
      b.ids.size() != static_cast<std::size_t>(b.batch) * static_cast<std::size_t>(b.max_len)) {
    throw DimensionError(std::string(which) + " batch layout is inconsistent");
  }
  for (int len : b.lengths) {
    if (len < 1 || len > b.max_len) throw DataError(std::string(which) + " sequence length out of range");
  }
  for (int id : b.ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw DataError(std::string(which) + " token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

template <typename T>
Var<T> embed(Tape<T>& tape, const Tensor<T>& table, const std::optional<Tensor<T>>& pos, const TokenBatch& b) {
  auto x = embedding(tape.parameter(table), std::span<const int>(b.ids), Shape{b.batch, b.max_len});
  if (pos) x = add(x, slice(tape.parameter(*pos), 0, 0, b.max_len));
  return mask_rows(x, std::span<const int>(b.lengths));
}

}  // namespace

template <typename T>
void Seq2SeqModel<T>::visit(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  auto f = [&](const std::string& n, Tensor<T>& t) { fn(n, t); };
  visit_model(*this, f);
}

template <typename T>
void Seq2SeqModel<T>::visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  auto f = [&](const std::string& n, const Tensor<T>& t) { fn(n, t); };
  visit_model(*this, f);
}

template <typename T>
std::uint64_t Seq2SeqModel<T>::parameter_count() const {
  std::uint64_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
Seq2SeqModel<T> Seq2SeqModel<T>::skeleton(const Seq2SeqConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.dim;
  const std::int64_t h = cfg.hidden;
  const std::int64_t v = cfg.vocab_size;
  const std::int64_t cap = cfg.max_len;
  auto norm = [&] {
    Norm<T> n;
    n.standardize = cfg.pre_norm == PreNorm::layernorm;
    n.alpha = Tensor<T>(Shape{d});
    n.beta = Tensor<T>(Shape{d});
    return n;
  };
  auto post = [&] {
    BranchScale<T> s;
    s.scale = Tensor<T>(Shape{d});
    return s;
  };
  Seq2SeqModel m;
  m.config = cfg;
  m.src_embed = Tensor<T>(Shape{v, d});
  m.tgt_embed = Tensor<T>(Shape{v, d});
  if (cfg.positional_embedding) {
    m.src_pos = Tensor<T>(Shape{cap, d});
    m.tgt_pos = Tensor<T>(Shape{cap, d});
  }
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    EncoderLayerParams<T> l;
    l.norm1 = norm();
    l.mix_weight = Tensor<T>(Shape{cap, cap});
    l.mix_bias = Tensor<T>(Shape{cap});
    l.post1 = post();
    l.norm2 = norm();
    l.fc1_weight = Tensor<T>(Shape{h, d});
    l.fc1_bias = Tensor<T>(Shape{h});
    l.fc2_weight = Tensor<T>(Shape{d, h});
    l.fc2_bias = Tensor<T>(Shape{d});
    l.post2 = post();
    m.encoder.push_back(std::move(l));
  }
  m.encoder_norm = norm();
  for (int i = 0; i < cfg.decoder_depth; ++i) {
    DecoderLayerParams<T> l;
    l.norm1 = norm();
    l.mix_packed = Tensor<T>(Shape{cap * (cap + 1) / 2});
    l.mix_bias = Tensor<T>(Shape{cap});
    l.post1 = post();
    l.norm2 = norm();
    for (auto* w : {&l.attn.q_weight, &l.attn.k_weight, &l.attn.v_weight, &l.attn.o_weight}) *w = Tensor<T>(Shape{d, d});
    for (auto* b : {&l.attn.q_bias, &l.attn.k_bias, &l.attn.v_bias, &l.attn.o_bias}) *b = Tensor<T>(Shape{d});
    l.post2 = post();
    l.norm3 = norm();
    l.fc1_weight = Tensor<T>(Shape{h, d});
    l.fc1_bias = Tensor<T>(Shape{h});
    l.fc2_weight = Tensor<T>(Shape{d, h});
    l.fc2_bias = Tensor<T>(Shape{d});
    l.post3 = post();
    m.decoder.push_back(std::move(l));
  }
  m.decoder_norm = norm();
  m.out_weight = Tensor<T>(Shape{v, d});
  m.out_bias = Tensor<T>(Shape{v});
  return m;
}

template <typename T>
Seq2SeqModel<T> Seq2SeqModel<T>::init(const Seq2SeqConfig& cfg, std::uint64_t seed) {
  Seq2SeqModel m = skeleton(cfg);
  Rng rng(seed);
  const T eps = static_cast<T>(cfg.layerscale_init);
  m.visit([&](const std::string& name, Tensor<T>& t) {
    if (ends_with(name, ".alpha")) {
      t.fill(T(1));
    } else if (ends_with(name, ".beta") || ends_with(name, ".bias")) {
      t.fill(T(0));
    } else if (ends_with(name, ".scale")) {
      t.fill(eps);
    } else {
      for (auto& v : t.values()) v = static_cast<T>(rng.trunc_normal(0.02));
    }
  });
  // The pad row stays zero so padded positions embed to nothing.
  const auto d = static_cast<std::size_t>(cfg.dim);
  std::fill(m.src_embed.data(), m.src_embed.data() + d, T(0));
  std::fill(m.tgt_embed.data(), m.tgt_embed.data() + d, T(0));
  return m;
}

template <typename T>
Var<T> Seq2SeqModel<T>::encode(Tape<T>& tape, const TokenBatch& src) const {
  check_ids(src, config, "source");
  const std::span<const int> lengths(src.lengths);
  const std::int64_t len = src.max_len;
  auto x = embed(tape, src_embed, src_pos, src);
  for (const auto& l : encoder) {
    // Pad rows are zeroed before mixing so they cannot leak into real rows.
    auto y = mask_rows(apply_norm(x, l.norm1, tape), lengths);
    auto a = slice(slice(tape.parameter(l.mix_weight), 0, 0, len), 1, 0, len);
    y = token_mix(a, y, slice(tape.parameter(l.mix_bias), 0, 0, len));
    x = add(x, apply_branch_scale(y, l.post1, tape));
    x = channel_mlp(x, l.norm2, l.fc1_weight, l.fc1_bias, l.fc2_weight, l.fc2_bias, l.post2, config.activation);
  }
  return apply_norm(x, encoder_norm, tape);
}

template <typename T>
Var<T> Seq2SeqModel<T>::embed_target(Tape<T>& tape, const TokenBatch& tgt_in) const {
  check_ids(tgt_in, config, "target");
  return embed(tape, tgt_embed, tgt_pos, tgt_in);
}

template <typename T>
Var<T> Seq2SeqModel<T>::decode(const Var<T>& memory, std::span<const int> src_lengths,
                               const Var<T>& tgt_embedded) const {
  const auto& s = tgt_embedded.shape();
  if (s.size() != 3 || s[2] != config.dim) {
    throw DimensionError("decode: targets must be [B, L, " + std::to_string(config.dim) + "], got " + shape_string(s));
  }
  if (s[1] > config.max_len) {
    throw CapacityError("target length " + std::to_string(s[1]) + " exceeds the model capacity " +
                        std::to_string(config.max_len));
  }
  auto& tape = tgt_embedded.tape();
  const std::int64_t len = s[1];
  auto x = tgt_embedded;
  for (const auto& l : decoder) {
    x = causal_sublayer(x, tril_expand(tape.parameter(l.mix_packed), len),
                        slice(tape.parameter(l.mix_bias), 0, 0, len), l.norm1, l.post1);
    auto q = apply_norm(x, l.norm2, tape);
    auto att = cross_attention(q, memory, l.attn, config.heads, src_lengths);
    x = add(x, apply_branch_scale(att.output, l.post2, tape));
    x = channel_mlp(x, l.norm3, l.fc1_weight, l.fc1_bias, l.fc2_weight, l.fc2_bias, l.post3, config.activation);
  }
  x = apply_norm(x, decoder_norm, tape);
  return linear(x, tape.parameter(out_weight), tape.parameter(out_bias));
}

template <typename T>
Var<T> Seq2SeqModel<T>::forward(Tape<T>& tape, const TokenBatch& src, const TokenBatch& tgt_in) const {
  if (src.batch != tgt_in.batch) throw DimensionError("source and target batch sizes differ");
  auto memory = encode(tape, src);
  return decode(memory, std::span<const int>(src.lengths), embed_target(tape, tgt_in));
}

template <typename T>
template <typename U>
Seq2SeqModel<U> Seq2SeqModel<T>::cast() const {
  auto out = Seq2SeqModel<U>::skeleton(config);
  std::vector<const Tensor<T>*> src;
  visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.visit([&](const std::string& name, Tensor<U>& t) {
    if (i >= src.size() || src[i]->shape() != t.shape()) throw InvariantError("cast: parameter layout mismatch at " + name);
    t = src[i++]->template cast<U>();
  });
  if (i != src.size()) throw InvariantError("cast: parameter count mismatch");
  return out;
}

template <typename T>
Tensor<T> extract_submatrix(const Tensor<T>& a, std::int64_t length) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw DimensionError("extract_submatrix: expected a square matrix");
  const std::int64_t cap = a.dim(0);
  if (length < 1 || length > cap) {
    throw CapacityError("extract_submatrix: length " + std::to_string(length) + " exceeds capacity " +
                        std::to_string(cap));
  }
  Tensor<T> out(Shape{length, length});
  for (std::int64_t i = 0; i < length; ++i) {
    std::copy(a.data() + i * cap, a.data() + i * cap + length, out.data() + i * length);
  }
  return out;
}

template <typename T>
Var<T> causal_sublayer(const Var<T>& x, const Var<T>& a, const Var<T>& bias, const Norm<T>& norm,
                       const BranchScale<T>& post) {
  const auto& av = a.value();
  if (av.rank() != 2 || av.dim(0) != av.dim(1)) throw DimensionError("causal_sublayer: A must be square");
  const std::int64_t n = av.dim(0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      if (av[i * n + j] != T(0)) {
        throw InvariantError("causal_sublayer: A[" + std::to_string(i) + "," + std::to_string(j) +
                             "] is above the diagonal but non-zero");
      }
    }
  }
  auto& tape = x.tape();
  auto y = token_mix(a, apply_norm(x, norm, tape), bias);
  return add(x, apply_branch_scale(y, post, tape));
}

template <typename T>
AttentionResult<T> cross_attention(const Var<T>& queries, const Var<T>& memory, const CrossAttentionParams<T>& p,
                                   int heads, std::span<const int> src_lengths) {
  const auto& qs = queries.shape();
  const auto& ms = memory.shape();
  if (qs.size() != 3 || ms.size() != 3 || qs[0] != ms[0] || qs[2] != ms[2]) {
    throw DimensionError("cross_attention: queries " + shape_string(qs) + " vs memory " + shape_string(ms));
  }
  const std::int64_t b = qs[0];
  const std::int64_t lt = qs[1];
  const std::int64_t ls = ms[1];
  const std::int64_t d = qs[2];
  if (heads <= 0 || d % heads != 0) throw ConfigError("cross_attention: width not divisible by heads");
  if (static_cast<std::int64_t>(src_lengths.size()) != b) {
    throw DimensionError("cross_attention: need one source length per batch row");
  }
  const std::int64_t dh = d / heads;
  auto& tape = queries.tape();
  auto split = [&](const Var<T>& x, std::int64_t len) {
    return reshape(permute(reshape(x, Shape{b, len, heads, dh}), {0, 2, 1, 3}), Shape{b * heads, len, dh});
  };
  auto q = split(linear(queries, tape.parameter(p.q_weight), tape.parameter(p.q_bias)), lt);
  auto k = split(linear(memory, tape.parameter(p.k_weight), tape.parameter(p.k_bias)), ls);
  auto v = split(linear(memory, tape.parameter(p.v_weight), tape.parameter(p.v_bias)), ls);
  std::vector<int> lengths;
  lengths.reserve(static_cast<std::size_t>(b * heads));
  for (std::int64_t i = 0; i < b; ++i) {
    for (int h = 0; h < heads; ++h) lengths.push_back(src_lengths[static_cast<std::size_t>(i)]);
  }
  auto scores = scale(bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  auto weights = masked_softmax(scores, std::span<const int>(lengths));
  auto mixed = bmm(weights, v, false);  // [B*h, L_t, dh]
  auto merged = reshape(permute(reshape(mixed, Shape{b, heads, lt, dh}), {0, 2, 1, 3}), Shape{b, lt, d});
  return {linear(merged, tape.parameter(p.o_weight), tape.parameter(p.o_bias)), weights};
}

#define RESMLP_INSTANTIATE_SEQ2SEQ(T)                                                                       \
  template struct Seq2SeqModel<T>;                                                                          \
  template Tensor<T> extract_submatrix(const Tensor<T>&, std::int64_t);                                     \
  template Var<T> causal_sublayer(const Var<T>&, const Var<T>&, const Var<T>&, const Norm<T>&,              \
                                  const BranchScale<T>&);                                                   \
  template AttentionResult<T> cross_attention(const Var<T>&, const Var<T>&, const CrossAttentionParams<T>&, \
                                              int, std::span<const int>);

RESMLP_INSTANTIATE_SEQ2SEQ(float)
RESMLP_INSTANTIATE_SEQ2SEQ(double)

template Seq2SeqModel<double> Seq2SeqModel<float>::cast<double>() const;
template Seq2SeqModel<float> Seq2SeqModel<double>::cast<float>() const;
template Seq2SeqModel<float> Seq2SeqModel<float>::cast<float>() const;
template Seq2SeqModel<double> Seq2SeqModel<double>::cast<double>() const;

#undef RESMLP_INSTANTIATE_SEQ2SEQ

}  // namespace resmlp
