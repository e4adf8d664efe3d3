#include "tokf/cost.hpp"

#include <sstream>

#include "tokf/errors.hpp"

namespace tokf {

namespace {
void require_positive(std::uint64_t v, const char* name) {
  if (v == 0) throw ConfigError(std::string("cost model: ") + name + " must be positive");
}
}  // namespace

CostBreakdown transformer_costs(std::uint64_t n_layer, std::uint64_t d_model,
                                std::uint64_t n_vocab, std::uint64_t seq_len) {
  require_positive(n_layer, "n_layer");
  require_positive(d_model, "d_model");
  require_positive(n_vocab, "n_vocab");
  require_positive(seq_len, "seq_len");

  CostBreakdown c;
  c.arm = "transformer";
  c.n_layer = n_layer;
  c.d = d_model;
  c.n_vocab = n_vocab;
  c.seq_len = seq_len;

  const std::uint64_t d2 = d_model * d_model;
  c.embed = {n_vocab * d_model, 0};
  c.qkv_project = {3 * n_layer * d2, 6 * n_layer * d2 * seq_len};
  c.token_token = {0, 4 * n_layer * d_model * seq_len * seq_len};
  c.output_project = {n_layer * d2, 2 * n_layer * d2 * seq_len};
  c.feedforward = {8 * n_layer * d2, 16 * n_layer * d2 * seq_len};
  c.de_embed = {0, 2 * n_vocab * d_model};

  c.params_non_embedding =
      c.qkv_project.params + c.output_project.params + c.feedforward.params;
  c.flops_total = c.qkv_project.flops + c.token_token.flops + c.output_project.flops +
                  c.feedforward.flops;
  return c;
}

CostBreakdown tokenformer_costs(std::uint64_t n_layer, std::uint64_t d_token, std::uint64_t n_q,
                                std::uint64_t n_k, std::uint64_t n_v, std::uint64_t n_o,
                                std::uint64_t n_ffn, std::uint64_t n_vocab,
                                std::uint64_t seq_len) {
  require_positive(n_layer, "n_layer");
  require_positive(d_token, "d_token");
  require_positive(n_q, "n_q");
  require_positive(n_k, "n_k");
  require_positive(n_v, "n_v");
  require_positive(n_o, "n_o");
  require_positive(n_ffn, "n_ffn");
  require_positive(n_vocab, "n_vocab");
  require_positive(seq_len, "seq_len");

  CostBreakdown c;
  c.arm = "tokenformer";
  c.n_layer = n_layer;
  c.d = d_token;
  c.n_q = n_q;
  c.n_k = n_k;
  c.n_v = n_v;
  c.n_o = n_o;
  c.n_ffn = n_ffn;
  c.n_vocab = n_vocab;
  c.seq_len = seq_len;

  const std::uint64_t ld = n_layer * d_token;
  c.embed = {n_vocab * d_token, 0};
  c.qkv_project = {ld * (n_q + n_k + n_v), 2 * ld * (n_q + n_k + n_v) * seq_len};
  c.token_token = {0, 4 * ld * seq_len * seq_len};
  c.output_project = {ld * n_o, 2 * ld * n_o * seq_len};
  c.feedforward = {2 * ld * n_ffn, 4 * ld * n_ffn * seq_len};
  c.de_embed = {0, 2 * n_vocab * d_token};

  c.params_non_embedding =
      c.qkv_project.params + c.output_project.params + c.feedforward.params;
  c.flops_total = c.qkv_project.flops + c.token_token.flops + c.output_project.flops +
                  c.feedforward.flops;
  return c;
}

std::vector<SweepRow> flops_vs_length_sweep(const std::vector<CostArmSpec>& arms,
                                            const std::vector<std::uint64_t>& seq_lens) {
  if (arms.empty() || seq_lens.empty()) throw ConfigError("cost sweep must be non-empty");
  std::vector<SweepRow> rows;
  rows.reserve(arms.size() * seq_lens.size());
  for (const CostArmSpec& a : arms) {
    for (std::uint64_t t : seq_lens) {
      CostBreakdown b = a.tokenformer
                            ? tokenformer_costs(a.n_layer, a.d, a.n_q, a.n_k, a.n_v, a.n_o,
                                                a.n_ffn, a.n_vocab, t)
                            : transformer_costs(a.n_layer, a.d, a.n_vocab, t);
      SweepRow r;
      r.arm = b.arm;
      r.label = a.label;
      r.n_layer = b.n_layer;
      r.d = b.d;
      r.pairs = a.tokenformer
                    ? std::to_string(a.n_q) + "/" + std::to_string(a.n_ffn)
                    : "-";
      r.seq_len = t;
      r.params = b.params_non_embedding;
      r.flops_total = b.flops_total;
      r.flops_token_token = b.token_token.flops;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "arm,n_layer,d,pairs,T,params,flops_total,flops_tt\n";
  for (const SweepRow& r : rows) {
    os << r.arm << ',' << r.n_layer << ',' << r.d << ',' << r.pairs << ',' << r.seq_len << ','
       << r.params << ',' << r.flops_total << ',' << r.flops_token_token << '\n';
  }
  return os.str();
}

}  // namespace tokf
