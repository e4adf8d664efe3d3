#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "tokf/baseline.hpp"
#include "tokf/corpus.hpp"
#include "tokf/model.hpp"
#include "tokf/scaling.hpp"
#include "tokf/train.hpp"

using namespace tokf;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.n_layer = 1;
  cfg.d_model = 16;
  cfg.n_q = cfg.n_k = cfg.n_v = cfg.n_o = 16;
  cfg.n_ffn = 32;
  cfg.n_head = 2;
  cfg.max_seq = 32;
  return cfg;
}

TrainConfig micro_train(std::int64_t steps) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.warmup_steps = std::min<std::int64_t>(10, steps);
  cfg.batch_size = 2;
  cfg.seq_len = 16;
  cfg.eval_interval = std::max<std::int64_t>(steps / 2, 1);
  cfg.eval_bytes = 512;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("byte tokenization is an exact inverse pair") {
  CHECK(byte_tokenize("ab") == std::vector<std::int32_t>{97, 98});
  CHECK(byte_tokenize("").empty());
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  CHECK(byte_detokenize(byte_tokenize(bytes)) == bytes);
}

TEST_CASE("corpus split is disjoint and deterministic") {
  auto data = testutil::synthetic_corpus(10000, 1);
  Corpus corpus(data, 0.9);
  CHECK(corpus.train().size() == 9000);
  CHECK(corpus.validation().size() == 1000);
  CHECK(corpus.train().data() + corpus.train().size() == corpus.validation().data());
}

TEST_CASE("batch_sample: shift law, determinism, byte range, too-small corpus") {
  auto data = testutil::synthetic_corpus(4096, 2);
  Corpus corpus(data, 0.9);
  const auto train = corpus.train();

  Rng rng_a(7), rng_b(7);
  auto a = batch_sample(corpus, rng_a, 4, 32);
  auto b = batch_sample(corpus, rng_b, 4, 32);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);

  for (std::int64_t row = 0; row < a.batch; ++row) {
    for (std::int64_t t = 0; t + 1 < a.seq; ++t) {
      CHECK(a.targets[row * a.seq + t] == a.inputs[row * a.seq + t + 1]);
    }
  }
  for (std::int32_t id : a.inputs) {
    CHECK(id >= 0);
    CHECK(id < 256);
  }
  // target[last] is the byte following input[last] in the corpus
  bool found = false;
  for (std::size_t off = 0; off + 33 <= train.size(); ++off) {
    bool match = true;
    for (std::int64_t t = 0; t < 32 && match; ++t) {
      match = train[off + t] == a.inputs[static_cast<std::size_t>(t)];
    }
    if (match) {
      CHECK(a.targets[31] == train[off + 32]);
      found = true;
      break;
    }
  }
  CHECK(found);

  Corpus tiny(std::vector<std::uint8_t>(40, 'x'), 0.5);
  Rng rng_c(1);
  CHECK_THROWS_AS(batch_sample(tiny, rng_c, 1, 32), DataError);
}

TEST_CASE("lr schedule: warmup end, cosine midpoint, decay end, continuity") {
  TrainConfig cfg;
  cfg.base_lr = 6e-4;
  cfg.warmup_steps = 100;
  cfg.total_steps = 500;
  CHECK(lr_at_step(0, cfg) == 0.0);
  CHECK(lr_at_step(100, cfg) == doctest::Approx(6e-4).epsilon(1e-15));
  CHECK(lr_at_step(300, cfg) == doctest::Approx(3e-4).epsilon(1e-12));  // cosine midpoint
  CHECK(lr_at_step(500, cfg) == doctest::Approx(0.0).epsilon(1e-19));
  // continuity at the junction
  const double before = lr_at_step(99, cfg);
  const double at = lr_at_step(100, cfg);
  const double after = lr_at_step(101, cfg);
  CHECK(std::abs(at - before) < 2e-5);
  CHECK(std::abs(after - at) < 2e-5);
  CHECK_THROWS_AS(lr_at_step(501, cfg), ConfigError);
}

TEST_CASE("adamw single-step hand values") {
  // theta=1, g=1, lr=0.1, wd=0: m_hat = v_hat = 1, theta -> ~0.9
  Tensor<double> theta = Tensor<double>::full({1, 1}, 1.0);
  std::vector<NamedParam<double>> params{{"theta", &theta, true}};
  std::vector<Tensor<double>> grads{Tensor<double>::full({1, 1}, 1.0)};
  AdamWState<double> state;
  state.m.push_back(Tensor<double>({1, 1}));
  state.v.push_back(Tensor<double>({1, 1}));
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(params, grads, state, 0.1, cfg);
  CHECK(theta(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(state.t == 1);

  // zero gradient, zero decay: parameter unchanged
  Tensor<double> frozen = Tensor<double>::full({1, 1}, 0.7);
  std::vector<NamedParam<double>> params2{{"frozen", &frozen, true}};
  std::vector<Tensor<double>> zero_grad{Tensor<double>({1, 1})};
  AdamWState<double> state2;
  state2.m.push_back(Tensor<double>({1, 1}));
  state2.v.push_back(Tensor<double>({1, 1}));
  adamw_step(params2, zero_grad, state2, 0.1, cfg);
  CHECK(frozen(0, 0) == 0.7);

  // zero gradient with decay: theta shrinks by lr*wd*theta exactly
  Tensor<double> decayed = Tensor<double>::full({1, 1}, 2.0);
  std::vector<NamedParam<double>> params3{{"decayed", &decayed, true}};
  AdamWState<double> state3;
  state3.m.push_back(Tensor<double>({1, 1}));
  state3.v.push_back(Tensor<double>({1, 1}));
  TrainConfig cfg_wd;
  cfg_wd.weight_decay = 0.05;
  adamw_step(params3, zero_grad, state3, 0.1, cfg_wd);
  CHECK(decayed(0, 0) == doctest::Approx(2.0 - 0.1 * 0.05 * 2.0).epsilon(1e-15));
}

TEST_CASE("cross-entropy: uniform logits, saturation, naive oracle") {
  Tensor<double> uniform({3, 256});
  std::vector<std::int32_t> targets{0, 100, 255};
  CHECK(nll_of_logits(uniform, targets) == doctest::Approx(std::log(256.0)).epsilon(1e-12));

  Tensor<double> hot({1, 5});
  hot(0, 2) = 60.0;
  CHECK(nll_of_logits(hot, std::vector<std::int32_t>{2}) <= 1e-12);

  Rng rng(5);
  auto logits = randn<double>(rng, {3, 5});
  std::vector<std::int32_t> tg{4, 0, 2};
  // naive exponentiation oracle, no log-sum-exp trick
  double naive = 0;
  for (std::int64_t i = 0; i < 3; ++i) {
    double denom = 0;
    for (std::int64_t j = 0; j < 5; ++j) denom += std::exp(logits(i, j));
    naive += -std::log(std::exp(logits(i, tg[static_cast<std::size_t>(i)])) / denom);
  }
  naive /= 3;
  CHECK(std::abs(nll_of_logits(logits, tg) - naive) <= 1e-10);

  CHECK_THROWS_AS(nll_of_logits(hot, std::vector<std::int32_t>{9}), DataError);
}

TEST_CASE("eval_perplexity identities") {
  Rng rng(6);
  auto model = TokenformerLM<double>::init(micro_config(), rng);
  auto data = testutil::synthetic_corpus(2000, 3);
  Corpus corpus(data, 0.8);
  auto r = eval_perplexity<double>(model, corpus.validation(), 16);
  CHECK(r.perplexity == doctest::Approx(std::exp(r.nll)).epsilon(1e-12));
  CHECK(r.nll > 0.0);
  // an untrained byte model sits near the uniform bound
  CHECK(r.perplexity < 400.0);
  CHECK(r.perplexity > 100.0);
}

TEST_CASE("train_loop: identical seeds give bit-identical histories") {
  auto data = testutil::synthetic_corpus(20000, 4);
  Corpus corpus(data, 0.9);
  TrainConfig cfg = micro_train(8);

  Rng init1(11), init2(11);
  auto m1 = TokenformerLM<double>::init(micro_config(), init1);
  auto m2 = TokenformerLM<double>::init(micro_config(), init2);
  auto h1 = train_loop<double>(m1, corpus, cfg);
  auto h2 = train_loop<double>(m2, corpus, cfg);
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);

  // histories serialize identically
  CHECK(history_to_csv(h1) == history_to_csv(h2));
}

TEST_CASE("train_loop: lr=0 leaves eval losses at the initial value") {
  auto data = testutil::synthetic_corpus(20000, 5);
  Corpus corpus(data, 0.9);
  TrainConfig cfg = micro_train(4);
  cfg.base_lr = 0.0;
  cfg.eval_interval = 1;

  Rng init(12);
  auto model = TokenformerLM<double>::init(micro_config(), init);
  const double before = eval_perplexity<double>(
      model, corpus.validation().subspan(0, 512), cfg.seq_len).nll;
  auto history = train_loop<double>(model, corpus, cfg);
  for (const auto& row : history) {
    REQUIRE(row.has_eval);
    CHECK(row.eval_loss == before);
  }
}

TEST_CASE("train_loop reduces loss on the micro task") {
  auto data = testutil::synthetic_corpus(60000, 6);
  Corpus corpus(data, 0.9);
  TrainConfig cfg = micro_train(150);
  cfg.warmup_steps = 15;
  cfg.batch_size = 4;

  Rng init(13);
  auto model = TokenformerLM<double>::init(micro_config(), init);
  auto history = train_loop<double>(model, corpus, cfg);
  const auto avg = [&](std::size_t from, std::size_t count) {
    double s = 0;
    for (std::size_t i = from; i < from + count; ++i) s += history[i].train_loss;
    return s / static_cast<double>(count);
  };
  CHECK(avg(history.size() - 20, 20) < avg(0, 20));
}

TEST_CASE("train_loop works for the transformer arm") {
  auto data = testutil::synthetic_corpus(20000, 7);
  Corpus corpus(data, 0.9);
  TrainConfig cfg = micro_train(6);
  cfg.arm = Arm::Transformer;
  Rng init(14);
  auto model = TransformerLM<double>::init(micro_config(), init);
  auto history = train_loop<double>(model, corpus, cfg);
  CHECK(history.size() == 6);
  for (const auto& row : history) CHECK(std::isfinite(row.train_loss));
}

TEST_CASE("training-level scaling resumption: eval loss unchanged at step zero") {
  auto data = testutil::synthetic_corpus(30000, 8);
  Corpus corpus(data, 0.9);
  TrainConfig cfg = micro_train(12);

  Rng init(15);
  auto model = TokenformerLM<double>::init(micro_config(), init);
  train_loop<double>(model, corpus, cfg);

  const auto slice = corpus.validation().subspan(0, 512);
  const double before = eval_perplexity<double>(model, slice, cfg.seq_len).nll;

  ModelConfig target = micro_config();
  target.n_q = target.n_k = target.n_v = target.n_o = 32;
  target.n_ffn = 64;
  Rng grow(16);
  auto scaled = scale_model(model, target, ValueInit::Gaussian, grow);
  const double after = eval_perplexity<double>(scaled, slice, cfg.seq_len).nll;
  CHECK(std::abs(after - before) / std::abs(before) <= 1e-6);
}

TEST_CASE("history csv layout") {
  std::vector<HistoryRow> rows(2);
  rows[0] = {1, 2.5, 0.0, false, 1e-4};
  rows[1] = {2, 2.25, 2.75, true, 2e-4};
  const std::string csv = history_to_csv(rows);
  CHECK(csv == "step,train_loss,eval_loss,lr\n1,2.5,,1e-04\n2,2.25,2.75,2e-04\n");
}
