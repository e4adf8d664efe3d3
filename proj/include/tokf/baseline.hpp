#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokf/autodiff.hpp"
#include "tokf/errors.hpp"
#include "tokf/model.hpp"
#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

// Linear-projection transformer block, the comparison arm. Residual wiring is
// identical to the Tokenformer block so the two differ only in projections.
template <class T>
struct LinearBlockWeights {
  Tensor<T> w_q, w_k, w_v;  // [d x d]
  Tensor<T> w_o;            // [d x d]
  Tensor<T> w1;             // [d x 4d]
  Tensor<T> w2;             // [4d x d]
  Tensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // [1 x d], affine arm only
};

template <class T>
class TransformerLM {
 public:
  ModelConfig cfg;  // pair counts unused by this arm
  Tensor<T> tok_embedding;  // [n_vocab x d], tied de-embedding
  Tensor<T> pos_embedding;  // [max_seq x d]
  std::vector<LinearBlockWeights<T>> blocks;

  static TransformerLM init(const ModelConfig& cfg, Rng& rng, T init_std = T(kInitStd)) {
    cfg.validate();
    TransformerLM m;
    m.cfg = cfg;
    const std::int64_t d = cfg.d_model;
    m.tok_embedding = randn<T>(rng, {cfg.n_vocab, d}, T(0), init_std);
    m.pos_embedding = randn<T>(rng, {cfg.max_seq, d}, T(0), init_std);
    m.blocks.reserve(static_cast<std::size_t>(cfg.n_layer));
    for (std::int64_t l = 0; l < cfg.n_layer; ++l) {
      LinearBlockWeights<T> b;
      b.w_q = randn<T>(rng, {d, d}, T(0), init_std);
      b.w_k = randn<T>(rng, {d, d}, T(0), init_std);
      b.w_v = randn<T>(rng, {d, d}, T(0), init_std);
      b.w_o = randn<T>(rng, {d, d}, T(0), init_std);
      b.w1 = randn<T>(rng, {d, 4 * d}, T(0), init_std);
      b.w2 = randn<T>(rng, {4 * d, d}, T(0), init_std);
      if (cfg.ln_affine) {
        b.ln1_gamma = Tensor<T>::full({1, d}, T(1));
        b.ln1_beta = Tensor<T>({1, d});
        b.ln2_gamma = Tensor<T>::full({1, d}, T(1));
        b.ln2_beta = Tensor<T>({1, d});
      }
      m.blocks.push_back(std::move(b));
    }
    return m;
  }

  template <class Fn>
  void visit_parameters(Fn&& fn) {
    fn("token_embedding", tok_embedding, false);
    fn("position_embedding", pos_embedding, false);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const std::string prefix = "blocks." + std::to_string(l) + ".";
      LinearBlockWeights<T>& b = blocks[l];
      fn(prefix + "w_q", b.w_q, true);
      fn(prefix + "w_k", b.w_k, true);
      fn(prefix + "w_v", b.w_v, true);
      fn(prefix + "w_o", b.w_o, true);
      fn(prefix + "w1", b.w1, true);
      fn(prefix + "w2", b.w2, true);
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
    const_cast<TransformerLM*>(this)->visit_parameters(
        [&n](const std::string&, const Tensor<T>& t, bool) { n += t.numel(); });
    return n;
  }
};

template <class T>
struct LinearBlockVars {
  ad::Var w_q, w_k, w_v, w_o, w1, w2;
  ad::Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

template <class T>
LinearBlockVars<T> linear_block_vars(const TapedParams<T>& params, const ModelConfig& cfg,
                                     std::size_t layer) {
  const std::string p = "blocks." + std::to_string(layer) + ".";
  LinearBlockVars<T> b;
  b.w_q = params.at(p + "w_q");
  b.w_k = params.at(p + "w_k");
  b.w_v = params.at(p + "w_v");
  b.w_o = params.at(p + "w_o");
  b.w1 = params.at(p + "w1");
  b.w2 = params.at(p + "w2");
  if (cfg.ln_affine) {
    b.ln1_gamma = params.at(p + "ln1.gamma");
    b.ln1_beta = params.at(p + "ln1.beta");
    b.ln2_gamma = params.at(p + "ln2.gamma");
    b.ln2_beta = params.at(p + "ln2.beta");
  }
  return b;
}

// Pre-norm residual block with linear projections and a GeLU MLP.
template <class T>
ad::Var linear_block_forward(ad::Tape<T>& t, ad::Var x_in, const LinearBlockVars<T>& b,
                             const ModelConfig& cfg) {
  ad::Var ln1 = layer_norm(t, x_in, T(kLayerNormEps), b.ln1_gamma, b.ln1_beta);
  ad::Var q = ad::matmul(t, ln1, b.w_q);
  ad::Var k = ad::matmul(t, ln1, b.w_k);
  ad::Var v = ad::matmul(t, ln1, b.w_v);
  ad::Var x_att = detail::token_token_attention(t, q, k, v, cfg.n_head);
  ad::Var x_inter = ad::add(t, x_in, ad::matmul(t, x_att, b.w_o));
  ad::Var ln2 = layer_norm(t, x_inter, T(kLayerNormEps), b.ln2_gamma, b.ln2_beta);
  ad::Var ffn = ad::matmul(t, ad::gelu(t, ad::matmul(t, ln2, b.w1)), b.w2);
  return ad::add(t, x_inter, ffn);
}

template <class T>
ad::Var lm_forward(ad::Tape<T>& t, const TapedParams<T>& params, const TransformerLM<T>& model,
                   const std::vector<std::int32_t>& tokens) {
  const ModelConfig& cfg = model.cfg;
  const std::int64_t seq = static_cast<std::int64_t>(tokens.size());
  if (seq > cfg.max_seq) {
    throw DimensionError("sequence length " + std::to_string(seq) + " exceeds max_seq " +
                         std::to_string(cfg.max_seq));
  }
  ad::Var tok_emb = params.at("token_embedding");
  ad::Var x = ad::add(t, ad::embed(t, tok_emb, tokens),
                      ad::slice_rows(t, params.at("position_embedding"), 0, seq));
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    x = linear_block_forward(t, x, linear_block_vars(params, cfg, l), cfg);
  }
  ad::Var h = layer_norm(t, x, T(kLayerNormEps));
  return ad::matmul_nt(t, h, tok_emb);
}

template <class T>
Tensor<T> lm_logits(TransformerLM<T>& model, const std::vector<std::int32_t>& tokens) {
  ad::Tape<T> tape;
  TapedParams<T> params = register_parameters(tape, model);
  return tape.value(lm_forward(tape, params, model, tokens));
}

// ---- Net2Net width expansion -------------------------------------------------

enum class ExpandInit { Zeros, Gaussian };

inline ExpandInit parse_expand_init(const std::string& name) {
  if (name == "zeros") return ExpandInit::Zeros;
  if (name == "gaussian") return ExpandInit::Gaussian;
  throw ConfigError("unknown expansion init '" + name + "' (zeros|gaussian)");
}

namespace detail {
// Block-extend a weight along both axes: the old tensor occupies the top-left
// block, the three new blocks follow the init policy.
template <class T>
Tensor<T> block_extend(const Tensor<T>& w, std::int64_t rows_l, std::int64_t cols_l,
                       ExpandInit init, Rng& rng, T init_std) {
  if (rows_l < w.rows() || cols_l < w.cols()) {
    throw DimensionError("block_extend target " + std::to_string(rows_l) + "x" +
                         std::to_string(cols_l) + " smaller than source " + w.shape_str());
  }
  Tensor<T> out = init == ExpandInit::Zeros ? Tensor<T>({rows_l, cols_l})
                                            : randn<T>(rng, {rows_l, cols_l}, T(0), init_std);
  for (std::int64_t i = 0; i < w.rows(); ++i)
    for (std::int64_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j);
  return out;
}
}  // namespace detail

// Square-weight expansion per the classical width-growth scheme: W_l holds W_s
// in its top-left block; W_l(12), W_l(21), W_l(22) follow the init policy.
template <class T>
Tensor<T> net2net_expand(const Tensor<T>& w_s, std::int64_t d_l, ExpandInit init, Rng& rng,
                         T init_std = T(kInitStd)) {
  if (w_s.rank() != 2 || w_s.rows() != w_s.cols()) {
    throw DimensionError("net2net_expand expects a square weight, got " + w_s.shape_str());
  }
  if (d_l <= w_s.rows()) {
    throw DimensionError("net2net_expand target width " + std::to_string(d_l) +
                         " must exceed source width " + std::to_string(w_s.rows()));
  }
  return detail::block_extend(w_s, d_l, d_l, init, rng, init_std);
}

// Whole-model width expansion d_s -> d_l. Square block weights expand per
// net2net_expand; rectangular ones (FFN, embeddings) block-extend each axis
// analogously; embedding rows (the vocab/position axes) are never expanded.
// Affine LN params extend neutrally (gamma 1, beta 0).
template <class T>
TransformerLM<T> expand_transformer(const TransformerLM<T>& model, std::int64_t d_l,
                                    ExpandInit init, Rng& rng, T init_std = T(kInitStd)) {
  const std::int64_t d_s = model.cfg.d_model;
  if (d_l <= d_s) {
    throw DimensionError("expand_transformer: target width " + std::to_string(d_l) +
                         " must exceed " + std::to_string(d_s));
  }
  if (d_l % model.cfg.n_head != 0) {
    throw ConfigError("expand_transformer: target width " + std::to_string(d_l) +
                      " not divisible by n_head " + std::to_string(model.cfg.n_head));
  }
  TransformerLM<T> out;
  out.cfg = model.cfg;
  out.cfg.d_model = d_l;
  out.tok_embedding =
      detail::block_extend(model.tok_embedding, model.cfg.n_vocab, d_l, init, rng, init_std);
  out.pos_embedding =
      detail::block_extend(model.pos_embedding, model.cfg.max_seq, d_l, init, rng, init_std);
  out.blocks.reserve(model.blocks.size());
  for (const LinearBlockWeights<T>& b : model.blocks) {
    LinearBlockWeights<T> nb;
    nb.w_q = detail::block_extend(b.w_q, d_l, d_l, init, rng, init_std);
    nb.w_k = detail::block_extend(b.w_k, d_l, d_l, init, rng, init_std);
    nb.w_v = detail::block_extend(b.w_v, d_l, d_l, init, rng, init_std);
    nb.w_o = detail::block_extend(b.w_o, d_l, d_l, init, rng, init_std);
    nb.w1 = detail::block_extend(b.w1, d_l, 4 * d_l, init, rng, init_std);
    nb.w2 = detail::block_extend(b.w2, 4 * d_l, d_l, init, rng, init_std);
    if (model.cfg.ln_affine) {
      nb.ln1_gamma = Tensor<T>::full({1, d_l}, T(1));
      nb.ln1_beta = Tensor<T>({1, d_l});
      nb.ln2_gamma = Tensor<T>::full({1, d_l}, T(1));
      nb.ln2_beta = Tensor<T>({1, d_l});
      for (std::int64_t j = 0; j < d_s; ++j) {
        nb.ln1_gamma(0, j) = b.ln1_gamma(0, j);
        nb.ln1_beta(0, j) = b.ln1_beta(0, j);
        nb.ln2_gamma(0, j) = b.ln2_gamma(0, j);
        nb.ln2_beta(0, j) = b.ln2_beta(0, j);
      }
    }
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

// Transformer parameter accounting: non-embedding 12 * n_layer * d_model^2.
inline std::uint64_t transformer_non_embedding_params(std::int64_t n_layer,
                                                      std::int64_t d_model) {
  return 12ull * static_cast<std::uint64_t>(n_layer) * static_cast<std::uint64_t>(d_model) *
         static_cast<std::uint64_t>(d_model);
}

}  // namespace tokf
