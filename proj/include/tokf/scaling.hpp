#pragma once

#include <cstdint>
#include <iostream>
#include <string>

#include "tokf/model.hpp"
#include "tokf/pattention.hpp"
#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

// Init policy for the value rows of newly appended parameter tokens. New key
// rows are always zero: zero keys alone make the grown layer output-identical,
// and nonzero values give the new slots gradient signal once their keys move.
enum class ValueInit { Gaussian, Zeros };

inline const char* value_init_name(ValueInit v) {
  return v == ValueInit::Gaussian ? "gaussian" : "zeros";
}

inline ValueInit parse_value_init(const std::string& name) {
  if (name == "gaussian") return ValueInit::Gaussian;
  if (name == "zeros") return ValueInit::Zeros;
  throw ConfigError("unknown value init '" + name + "' (gaussian|zeros)");
}

// Append m parameter tokens: keys get zero rows, values follow the init
// policy, tau stays frozen, existing rows are bit-identical.
template <class T>
ParamTokens<T> scale_pattention(const ParamTokens<T>& p, std::int64_t m, ValueInit value_init,
                                Rng& rng, T init_std = T(kInitStd)) {
  if (m < 0) throw ConfigError("scale_pattention: cannot remove parameter tokens");
  if (m == 0) return p;
  ParamTokens<T> out;
  out.tau = p.tau;
  out.variant = p.variant;
  out.keys = concat_rows(p.keys, Tensor<T>({m, p.d_in()}));
  Tensor<T> new_values = value_init == ValueInit::Zeros
                             ? Tensor<T>({m, p.d_out()})
                             : randn<T>(rng, {m, p.d_out()}, T(0), init_std);
  out.values = concat_rows(p.values, new_values);
  return out;
}

// Grow every Pattention layer of the model to the target pair counts. Fixed
// axes (layers, width, heads, vocab, context) must match; pair counts may only
// grow. Embeddings are copied unchanged.
template <class T>
TokenformerLM<T> scale_model(const TokenformerLM<T>& model, const ModelConfig& target,
                             ValueInit value_init, Rng& rng, T init_std = T(kInitStd)) {
  target.validate();
  if (!model.cfg.same_fixed_dims(target)) {
    throw ConfigError(
        "scale_model: target config changes fixed dimensions "
        "(layers/width/heads/vocab/context must match the source)");
  }
  const ModelConfig& src = model.cfg;
  if (target.n_q < src.n_q || target.n_k < src.n_k || target.n_v < src.n_v ||
      target.n_o < src.n_o || target.n_ffn < src.n_ffn) {
    throw ConfigError("scale_model: shrinking pair counts is unsupported");
  }
  TokenformerLM<T> out;
  out.cfg = target;
  out.tok_embedding = model.tok_embedding;
  out.pos_embedding = model.pos_embedding;
  out.blocks.reserve(model.blocks.size());
  for (const TokenformerBlock<T>& b : model.blocks) {
    TokenformerBlock<T> nb;
    nb.q = scale_pattention(b.q, target.n_q - src.n_q, value_init, rng, init_std);
    nb.k = scale_pattention(b.k, target.n_k - src.n_k, value_init, rng, init_std);
    nb.v = scale_pattention(b.v, target.n_v - src.n_v, value_init, rng, init_std);
    nb.o = scale_pattention(b.o, target.n_o - src.n_o, value_init, rng, init_std);
    nb.ffn = scale_pattention(b.ffn, target.n_ffn - src.n_ffn, value_init, rng, init_std);
    nb.ln1_gamma = b.ln1_gamma;
    nb.ln1_beta = b.ln1_beta;
    nb.ln2_gamma = b.ln2_gamma;
    nb.ln2_beta = b.ln2_beta;
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

// Worst absolute logit difference between two models over random probe
// sequences. Zero-init scaling should drive this to (machine) zero.
template <class T>
T verify_invariance(TokenformerLM<T>& before, TokenformerLM<T>& after, int probe_count, Rng& rng,
                    std::int64_t probe_len = 0) {
  if (!before.cfg.same_fixed_dims(after.cfg)) {
    throw ConfigError("verify_invariance: models differ in fixed dimensions");
  }
  if (probe_count == 0) {
    std::cerr << "verify_invariance: probe_count is 0, nothing checked\n";
    return T(0);
  }
  if (probe_len <= 0) probe_len = std::min<std::int64_t>(before.cfg.max_seq, 32);
  T worst = 0;
  for (int p = 0; p < probe_count; ++p) {
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(probe_len));
    for (auto& id : tokens) {
      id = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(before.cfg.n_vocab)));
    }
    const Tensor<T> a = lm_logits(before, tokens);
    const Tensor<T> b = lm_logits(after, tokens);
    worst = std::max(worst, max_abs_diff(a, b));
  }
  return worst;
}

}  // namespace tokf
