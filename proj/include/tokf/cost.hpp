#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tokf {

// One operation row of the per-layer-family accounting table.
struct CostRow {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

// Parameter counts and training-FLOP estimates for one architecture at one
// sequence length. Integer arithmetic throughout so the identities are exact.
// Conventions:
//  * params_non_embedding and flops_total are the "Total (Non-Embedding)" row:
//    they sum qkv_project + output_project + feedforward (+ token_token for
//    FLOPs) and exclude the embed/de_embed rows, so flops_total == 2*N*T + tt.
//  * de_embed FLOPs carry no T factor (reproduced verbatim from the source
//    accounting; see README).
//  * Sub-leading terms (nonlinearities, biases, layer norm) are omitted; this
//    is an estimate, not a profiler.
struct CostBreakdown {
  std::string arm;
  std::uint64_t n_layer = 0;
  std::uint64_t d = 0;  // d_model or d_token
  std::uint64_t n_q = 0, n_k = 0, n_v = 0, n_o = 0, n_ffn = 0;  // tokenformer only
  std::uint64_t n_vocab = 0;
  std::uint64_t seq_len = 0;

  CostRow embed, qkv_project, token_token, output_project, feedforward, de_embed;

  std::uint64_t params_non_embedding = 0;
  std::uint64_t flops_total = 0;
};

CostBreakdown transformer_costs(std::uint64_t n_layer, std::uint64_t d_model,
                                std::uint64_t n_vocab, std::uint64_t seq_len);

CostBreakdown tokenformer_costs(std::uint64_t n_layer, std::uint64_t d_token, std::uint64_t n_q,
                                std::uint64_t n_k, std::uint64_t n_v, std::uint64_t n_o,
                                std::uint64_t n_ffn, std::uint64_t n_vocab,
                                std::uint64_t seq_len);

// One architecture in a FLOPs-vs-sequence-length sweep.
struct CostArmSpec {
  bool tokenformer = true;
  std::string label;
  std::uint64_t n_layer = 0;
  std::uint64_t d = 0;
  std::uint64_t n_q = 0, n_k = 0, n_v = 0, n_o = 0, n_ffn = 0;  // tokenformer only
  std::uint64_t n_vocab = 50304;
};

struct SweepRow {
  std::string arm;
  std::string label;
  std::uint64_t n_layer = 0;
  std::uint64_t d = 0;
  std::string pairs;  // "attn/ffn" for tokenformer, "-" for transformer
  std::uint64_t seq_len = 0;
  std::uint64_t params = 0;
  std::uint64_t flops_total = 0;
  std::uint64_t flops_token_token = 0;
};

std::vector<SweepRow> flops_vs_length_sweep(const std::vector<CostArmSpec>& arms,
                                            const std::vector<std::uint64_t>& seq_lens);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace tokf
