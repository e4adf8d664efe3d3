#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokf/autodiff.hpp"
#include "tokf/errors.hpp"
#include "tokf/pattention.hpp"
#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

// Which projection family a model uses; shared by checkpointing and the CLI.
enum class Arm { Tokenformer, Transformer };

inline const char* arm_name(Arm a) { return a == Arm::Tokenformer ? "tokenformer" : "transformer"; }

inline Arm parse_arm(const std::string& name) {
  if (name == "tokenformer") return Arm::Tokenformer;
  if (name == "transformer") return Arm::Transformer;
  throw ConfigError("unknown arm '" + name + "' (tokenformer|transformer)");
}

struct ModelConfig {
  std::int64_t n_layer = 2;
  std::int64_t d_model = 64;  // = d_token
  std::int64_t n_q = 64, n_k = 64, n_v = 64, n_o = 64;  // attention pair counts
  std::int64_t n_ffn = 256;
  std::int64_t n_head = 4;
  std::int64_t n_vocab = 257;  // bytes + pad
  std::int64_t max_seq = 128;
  bool ln_affine = false;
  Activation variant = Activation::GeluL2;

  void validate() const {
    auto positive = [](std::int64_t v, const char* name) {
      if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
    };
    positive(n_layer, "n_layer");
    positive(d_model, "d_model");
    positive(n_q, "n_q");
    positive(n_k, "n_k");
    positive(n_v, "n_v");
    positive(n_o, "n_o");
    positive(n_ffn, "n_ffn");
    positive(n_head, "n_head");
    positive(n_vocab, "n_vocab");
    positive(max_seq, "max_seq");
    if (d_model % n_head != 0) {
      throw ConfigError("model config: d_model " + std::to_string(d_model) +
                        " not divisible by n_head " + std::to_string(n_head));
    }
  }

  bool operator==(const ModelConfig&) const = default;

  // The axes progressive scaling must NOT change.
  bool same_fixed_dims(const ModelConfig& other) const {
    return n_layer == other.n_layer && d_model == other.d_model && n_head == other.n_head &&
           n_vocab == other.n_vocab && max_seq == other.max_seq &&
           ln_affine == other.ln_affine && variant == other.variant;
  }
};

struct ParamCounts {
  std::uint64_t non_embedding = 0;
  std::uint64_t embedding = 0;
  std::uint64_t total = 0;
};

// Parameter accounting in the cost-table convention:
//   non_embedding = n_layer * d_token * (n_q + n_k + n_v + n_o + 2*n_ffn)
//   embedding     = n_vocab * d_model + max_seq * d_model
// Note this convention counts each attention projection as n*d; the instantiated
// layer stores keys AND values (2*n*d), see TokenformerLM::num_parameters().
inline ParamCounts count_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamCounts c;
  const std::uint64_t d = static_cast<std::uint64_t>(cfg.d_model);
  c.non_embedding = static_cast<std::uint64_t>(cfg.n_layer) * d *
                    static_cast<std::uint64_t>(cfg.n_q + cfg.n_k + cfg.n_v + cfg.n_o +
                                               2 * cfg.n_ffn);
  c.embedding = static_cast<std::uint64_t>(cfg.n_vocab) * d +
                static_cast<std::uint64_t>(cfg.max_seq) * d;
  c.total = c.non_embedding + c.embedding;
  return c;
}

// Per-row (x - mean) / sqrt(var + eps); gamma/beta only in the affine ablation.
template <class T>
Tensor<T> layer_norm_nonparam(const Tensor<T>& x, T eps = T(kLayerNormEps),
                              const Tensor<T>* gamma = nullptr, const Tensor<T>* beta = nullptr) {
  if (!(eps > T(0))) throw ConfigError("layer_norm eps must be positive");
  if (x.rank() != 2) throw DimensionError("layer_norm expects rank-2, got " + x.shape_str());
  const std::int64_t d = x.cols();
  const T inv_d = T(1) / static_cast<T>(d);
  Tensor<T> out = x;
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    const T* row = x.row_ptr(i);
    T sum = 0;
    for (std::int64_t j = 0; j < d; ++j) sum += row[j];
    const T mean = sum * inv_d;
    T varsum = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      varsum += c * c;
    }
    const T sd = std::sqrt(varsum * inv_d + eps);
    T* orow = out.row_ptr(i);
    for (std::int64_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) / sd;
  }
  if (gamma != nullptr && beta != nullptr) {
    for (std::int64_t i = 0; i < out.rows(); ++i)
      for (std::int64_t j = 0; j < d; ++j) out(i, j) = out(i, j) * (*gamma)(0, j) + (*beta)(0, j);
  }
  ensure_finite(out, "layer_norm");
  return out;
}

// Taped layer norm, composed from primitives. Pass invalid gamma/beta vars for
// the non-parametric form.
template <class T>
ad::Var layer_norm(ad::Tape<T>& t, ad::Var x, T eps = T(kLayerNormEps),
                   ad::Var gamma = ad::Var{}, ad::Var beta = ad::Var{}) {
  const T inv_d = T(1) / static_cast<T>(t.value(x).cols());
  ad::Var mean = ad::scale(t, ad::row_sum(t, x), inv_d);
  ad::Var centered = ad::sub_colvec(t, x, mean);
  ad::Var var = ad::scale(t, ad::row_sum(t, ad::square(t, centered)), inv_d);
  ad::Var sd = ad::sqrt_op(t, ad::add_scalar(t, var, eps));
  ad::Var out = ad::div_colvec(t, centered, sd);
  if (gamma.id >= 0 && beta.id >= 0) {
    out = ad::add_rowvec(t, ad::mul_rowvec(t, out, gamma), beta);
  }
  return out;
}

template <class T>
struct TokenformerBlock {
  ParamTokens<T> q, k, v, o, ffn;
  // [1 x d] each; allocated only when ln_affine is on.
  Tensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

template <class T>
class TokenformerLM {
 public:
  ModelConfig cfg;
  Tensor<T> tok_embedding;  // [n_vocab x d], tied de-embedding
  Tensor<T> pos_embedding;  // [max_seq x d]
  std::vector<TokenformerBlock<T>> blocks;

  static TokenformerLM init(const ModelConfig& cfg, Rng& rng, T init_std = T(kInitStd)) {
    cfg.validate();
    TokenformerLM m;
    m.cfg = cfg;
    m.tok_embedding = randn<T>(rng, {cfg.n_vocab, cfg.d_model}, T(0), init_std);
    m.pos_embedding = randn<T>(rng, {cfg.max_seq, cfg.d_model}, T(0), init_std);
    m.blocks.reserve(static_cast<std::size_t>(cfg.n_layer));
    for (std::int64_t l = 0; l < cfg.n_layer; ++l) {
      TokenformerBlock<T> b;
      b.q = make_param_tokens<T>(rng, cfg.n_q, cfg.d_model, cfg.d_model, init_std, cfg.variant);
      b.k = make_param_tokens<T>(rng, cfg.n_k, cfg.d_model, cfg.d_model, init_std, cfg.variant);
      b.v = make_param_tokens<T>(rng, cfg.n_v, cfg.d_model, cfg.d_model, init_std, cfg.variant);
      b.o = make_param_tokens<T>(rng, cfg.n_o, cfg.d_model, cfg.d_model, init_std, cfg.variant);
      b.ffn =
          make_param_tokens<T>(rng, cfg.n_ffn, cfg.d_model, cfg.d_model, init_std, cfg.variant);
      if (cfg.ln_affine) {
        b.ln1_gamma = Tensor<T>::full({1, cfg.d_model}, T(1));
        b.ln1_beta = Tensor<T>({1, cfg.d_model});
        b.ln2_gamma = Tensor<T>::full({1, cfg.d_model}, T(1));
        b.ln2_beta = Tensor<T>({1, cfg.d_model});
      }
      m.blocks.push_back(std::move(b));
    }
    return m;
  }

  // Canonical parameter order: embeddings, then per block Q,K,V,O,FFN with key
  // before value, then the block's LN params when affine. Checkpointing, the
  // optimizer and tape registration all share this order.
  template <class Fn>
  void visit_parameters(Fn&& fn) {
    fn("token_embedding", tok_embedding, false);
    fn("position_embedding", pos_embedding, false);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const std::string prefix = "blocks." + std::to_string(l) + ".";
      TokenformerBlock<T>& b = blocks[l];
      fn(prefix + "q.key", b.q.keys, true);
      fn(prefix + "q.value", b.q.values, true);
      fn(prefix + "k.key", b.k.keys, true);
      fn(prefix + "k.value", b.k.values, true);
      fn(prefix + "v.key", b.v.keys, true);
      fn(prefix + "v.value", b.v.values, true);
      fn(prefix + "o.key", b.o.keys, true);
      fn(prefix + "o.value", b.o.values, true);
      fn(prefix + "ffn.key", b.ffn.keys, true);
      fn(prefix + "ffn.value", b.ffn.values, true);
      if (cfg.ln_affine) {
        fn(prefix + "ln1.gamma", b.ln1_gamma, false);
        fn(prefix + "ln1.beta", b.ln1_beta, false);
        fn(prefix + "ln2.gamma", b.ln2_gamma, false);
        fn(prefix + "ln2.beta", b.ln2_beta, false);
      }
    }
  }

  std::int64_t num_parameters() const {
    std::int64_t n = 0;
    const_cast<TokenformerLM*>(this)->visit_parameters(
        [&n](const std::string&, const Tensor<T>& t, bool) { n += t.numel(); });
    return n;
  }
};

// Tape handles for one model's parameters, in canonical order.
template <class T>
struct TapedParams {
  std::vector<std::pair<std::string, ad::Var>> vars;

  ad::Var at(const std::string& name) const {
    for (const auto& [n, v] : vars) {
      if (n == name) return v;
    }
    throw StateError("no taped parameter named '" + name + "'");
  }
};

template <class T, class Model>
TapedParams<T> register_parameters(ad::Tape<T>& tape, Model& model) {
  TapedParams<T> out;
  model.visit_parameters([&](const std::string& name, Tensor<T>& tensor, bool) {
    out.vars.emplace_back(name, tape.leaf(tensor));
  });
  return out;
}

namespace detail {

// Causal multi-head token-token attention over full-width Q,K,V. Pattention
// projections produce full d; head splitting happens only here.
template <class T>
ad::Var token_token_attention(ad::Tape<T>& t, ad::Var q, ad::Var k, ad::Var v,
                              std::int64_t n_head) {
  const std::int64_t d = t.value(q).cols();
  const std::int64_t dh = d / n_head;
  const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<std::size_t>(n_head));
  for (std::int64_t h = 0; h < n_head; ++h) {
    ad::Var qh = ad::slice_cols(t, q, h * dh, dh);
    ad::Var kh = ad::slice_cols(t, k, h * dh, dh);
    ad::Var vh = ad::slice_cols(t, v, h * dh, dh);
    ad::Var scores = ad::scale(t, ad::matmul_nt(t, qh, kh), att_scale);
    ad::Var probs = ad::softmax(t, scores, /*causal=*/true);
    heads.push_back(ad::matmul(t, probs, vh));
  }
  return n_head == 1 ? heads[0] : ad::concat_cols(t, heads);
}

}  // namespace detail

template <class T>
struct TokenformerBlockVars {
  ad::Var qk, qv, kk, kv, vk, vv, ok, ov, fk, fv;
  ad::Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

template <class T>
TokenformerBlockVars<T> block_vars(const TapedParams<T>& params, const ModelConfig& cfg,
                                   std::size_t layer) {
  const std::string p = "blocks." + std::to_string(layer) + ".";
  TokenformerBlockVars<T> b;
  b.qk = params.at(p + "q.key");
  b.qv = params.at(p + "q.value");
  b.kk = params.at(p + "k.key");
  b.kv = params.at(p + "k.value");
  b.vk = params.at(p + "v.key");
  b.vv = params.at(p + "v.value");
  b.ok = params.at(p + "o.key");
  b.ov = params.at(p + "o.value");
  b.fk = params.at(p + "ffn.key");
  b.fv = params.at(p + "ffn.value");
  if (cfg.ln_affine) {
    b.ln1_gamma = params.at(p + "ln1.gamma");
    b.ln1_beta = params.at(p + "ln1.beta");
    b.ln2_gamma = params.at(p + "ln2.gamma");
    b.ln2_beta = params.at(p + "ln2.beta");
  }
  return b;
}

// MHA sub-layer on an already-normalized input (Pattention QKV projections,
// causal token-token attention, Pattention output projection).
template <class T>
ad::Var mha_forward(ad::Tape<T>& t, ad::Var x, const TokenformerBlockVars<T>& b,
                    const TokenformerBlock<T>& weights, const ModelConfig& cfg,
                    T eps = default_l2_eps<T>()) {
  ad::Var q = pattention_forward(t, x, b.qk, b.qv, weights.q.tau, weights.q.variant, eps);
  ad::Var k = pattention_forward(t, x, b.kk, b.kv, weights.k.tau, weights.k.variant, eps);
  ad::Var v = pattention_forward(t, x, b.vk, b.vv, weights.v.tau, weights.v.variant, eps);
  ad::Var x_att = detail::token_token_attention(t, q, k, v, cfg.n_head);
  return pattention_forward(t, x_att, b.ok, b.ov, weights.o.tau, weights.o.variant, eps);
}

template <class T>
ad::Var block_forward(ad::Tape<T>& t, ad::Var x_in, const TokenformerBlockVars<T>& b,
                      const TokenformerBlock<T>& weights, const ModelConfig& cfg,
                      T eps = default_l2_eps<T>()) {
  ad::Var ln1 = layer_norm(t, x_in, T(kLayerNormEps), b.ln1_gamma, b.ln1_beta);
  ad::Var x_inter = ad::add(t, x_in, mha_forward(t, ln1, b, weights, cfg, eps));
  ad::Var ln2 = layer_norm(t, x_inter, T(kLayerNormEps), b.ln2_gamma, b.ln2_beta);
  ad::Var ffn = pattention_forward(t, ln2, b.fk, b.fv, weights.ffn.tau, weights.ffn.variant, eps);
  return ad::add(t, x_inter, ffn);
}

// Embed + position -> blocks -> final non-parametric LN -> tied de-embedding.
template <class T>
ad::Var lm_forward(ad::Tape<T>& t, const TapedParams<T>& params, const TokenformerLM<T>& model,
                   const std::vector<std::int32_t>& tokens) {
  const ModelConfig& cfg = model.cfg;
  const std::int64_t seq = static_cast<std::int64_t>(tokens.size());
  if (seq > cfg.max_seq) {
    throw DimensionError("sequence length " + std::to_string(seq) + " exceeds max_seq " +
                         std::to_string(cfg.max_seq));
  }
  for (std::int32_t id : tokens) {
    if (id < 0 || id >= cfg.n_vocab) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(cfg.n_vocab));
    }
  }
  ad::Var tok_emb = params.at("token_embedding");
  ad::Var x = ad::add(t, ad::embed(t, tok_emb, tokens),
                      ad::slice_rows(t, params.at("position_embedding"), 0, seq));
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    x = block_forward(t, x, block_vars(params, cfg, l), model.blocks[l], cfg);
  }
  ad::Var h = layer_norm(t, x, T(kLayerNormEps));
  return ad::matmul_nt(t, h, tok_emb);
}

// Convenience forward: fresh tape per call, logits returned by value.
template <class T>
Tensor<T> lm_logits(TokenformerLM<T>& model, const std::vector<std::int32_t>& tokens) {
  ad::Tape<T> tape;
  TapedParams<T> params = register_parameters(tape, model);
  return tape.value(lm_forward(tape, params, model, tokens));
}

}  // namespace tokf
