#include <doctest.h>

#include <cmath>

#include "tokf/model.hpp"
#include "tokf/rng.hpp"
#include "tokf/scaling.hpp"

using namespace tokf;

namespace {

ModelConfig desk_config() {
  return ModelConfig{};  // 2 layers, d 64, attn 64, ffn 256, 4 heads
}

ModelConfig desk_double() {
  ModelConfig cfg;
  cfg.n_q = cfg.n_k = cfg.n_v = cfg.n_o = 128;
  cfg.n_ffn = 512;
  return cfg;
}

}  // namespace

TEST_CASE("scale_pattention: m=0 no-op, zero keys, frozen tau, originals bit-identical") {
  Rng rng(1);
  auto p = make_param_tokens<double>(rng, 6, 4, 4, 0.5);
  Rng grow_rng(2);

  auto same = scale_pattention(p, 0, ValueInit::Gaussian, grow_rng);
  CHECK(same.n() == 6);
  CHECK(max_abs_diff(same.keys, p.keys) == 0.0);
  CHECK(max_abs_diff(same.values, p.values) == 0.0);
  CHECK(same.tau == p.tau);

  auto grown = scale_pattention(p, 4, ValueInit::Gaussian, grow_rng);
  CHECK(grown.n() == 10);
  CHECK(grown.tau == p.tau);  // frozen, NOT sqrt(10)
  CHECK(max_abs_diff(slice_rows(grown.keys, 0, 6), p.keys) == 0.0);
  CHECK(max_abs_diff(slice_rows(grown.values, 0, 6), p.values) == 0.0);
  for (std::int64_t i = 6; i < 10; ++i)
    for (std::int64_t j = 0; j < 4; ++j) CHECK(grown.keys(i, j) == 0.0);

  CHECK_THROWS_AS(scale_pattention(p, -1, ValueInit::Zeros, grow_rng), ConfigError);
}

TEST_CASE("scale_pattention preserves forward output for any value init") {
  Rng rng(3);
  auto p = make_param_tokens<double>(rng, 8, 5, 3, 0.7);
  auto x = randn<double>(rng, {6, 5});
  auto base = pattention_forward(x, p);
  for (ValueInit vi : {ValueInit::Gaussian, ValueInit::Zeros}) {
    Rng grow_rng(4);
    auto grown = scale_pattention(p, 5, vi, grow_rng, 3.0);
    CHECK(max_abs_diff(pattention_forward(x, grown), base) == 0.0);
  }
}

TEST_CASE("doubling pair count doubles that layer's parameter count") {
  Rng rng(5);
  auto p = make_param_tokens<double>(rng, 64, 16, 16, 0.02);
  Rng grow_rng(6);
  auto grown = scale_pattention(p, 64, ValueInit::Gaussian, grow_rng);
  const auto params_of = [](const ParamTokens<double>& q) {
    return q.keys.numel() + q.values.numel();
  };
  CHECK(params_of(grown) == 2 * params_of(p));
}

TEST_CASE("scale_model: identity target is a deep equality") {
  Rng rng(7);
  auto model = TokenformerLM<double>::init(desk_config(), rng);
  Rng grow_rng(8);
  auto same = scale_model(model, desk_config(), ValueInit::Gaussian, grow_rng);
  CHECK(max_abs_diff(same.tok_embedding, model.tok_embedding) == 0.0);
  CHECK(max_abs_diff(same.pos_embedding, model.pos_embedding) == 0.0);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    CHECK(max_abs_diff(same.blocks[l].q.keys, model.blocks[l].q.keys) == 0.0);
    CHECK(max_abs_diff(same.blocks[l].ffn.values, model.blocks[l].ffn.values) == 0.0);
    CHECK(same.blocks[l].q.tau == model.blocks[l].q.tau);
  }
}

TEST_CASE("scale_model: desk 64 -> 128 leaves logits unchanged, count matches target") {
  Rng rng(9);
  auto model = TokenformerLM<double>::init(desk_config(), rng);
  Rng grow_rng(10);
  auto big = scale_model(model, desk_double(), ValueInit::Gaussian, grow_rng);

  CHECK(static_cast<std::uint64_t>(big.num_parameters()) ==
        count_params(desk_double()).total +
            static_cast<std::uint64_t>(2 * 64 * (128 * 4)));  // extra attention key sets

  Rng probe(11);
  double worst = 0;
  for (int round = 0; round < 32; ++round) {
    std::vector<std::int32_t> tokens(24);
    for (auto& t : tokens) t = static_cast<std::int32_t>(probe.next_below(257));
    worst = std::max(worst, max_abs_diff(lm_logits(model, tokens), lm_logits(big, tokens)));
  }
  CHECK(worst <= 1e-12);

  // monotone parameter growth
  CHECK(big.num_parameters() > model.num_parameters());
}

TEST_CASE("scale_model rejects fixed-dimension changes and shrinking") {
  Rng rng(12);
  auto model = TokenformerLM<double>::init(desk_config(), rng);
  Rng grow_rng(13);

  ModelConfig wrong_width = desk_double();
  wrong_width.d_model = 128;
  CHECK_THROWS_AS(scale_model(model, wrong_width, ValueInit::Zeros, grow_rng), ConfigError);

  ModelConfig shrink = desk_config();
  shrink.n_ffn = 128;
  CHECK_THROWS_AS(scale_model(model, shrink, ValueInit::Zeros, grow_rng), ConfigError);
}

TEST_CASE("verify_invariance: zero after scaling, positive after perturbation, vacuous probe") {
  Rng rng(14);
  auto model = TokenformerLM<double>::init(desk_config(), rng);
  Rng grow_rng(15);
  auto big = scale_model(model, desk_double(), ValueInit::Gaussian, grow_rng);

  Rng probe(16);
  CHECK(verify_invariance(model, big, 20, probe) <= 1e-12);

  auto nudged = big;
  nudged.blocks[0].q.keys(0, 0) += 1e-3;
  Rng probe2(17);
  CHECK(verify_invariance(model, nudged, 20, probe2) > 0.0);

  Rng probe3(18);
  CHECK(verify_invariance(model, big, 0, probe3) == 0.0);
}

TEST_CASE("table 6 reuse ladder shares fixed axes and grows only pair counts") {
  const std::int64_t attn[] = {576, 2140, 4850, 8620};
  const std::int64_t ffn[] = {2304, 8560, 19400, 34480};
  for (int i = 0; i < 4; ++i) {
    CHECK(ffn[i] == 4 * attn[i]);
  }
  for (int i = 0; i + 1 < 4; ++i) {
    ModelConfig a, b;
    a.n_layer = b.n_layer = 12;
    a.d_model = b.d_model = 768;
    a.n_head = b.n_head = 12;
    a.max_seq = b.max_seq = 1024;
    a.n_q = a.n_k = a.n_v = a.n_o = attn[i];
    a.n_ffn = ffn[i];
    b.n_q = b.n_k = b.n_v = b.n_o = attn[i + 1];
    b.n_ffn = ffn[i + 1];
    CHECK(a.same_fixed_dims(b));
    CHECK(count_params(b).non_embedding > count_params(a).non_embedding);
  }
}
