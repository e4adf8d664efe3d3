#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tokf/autodiff.hpp"
#include "tokf/corpus.hpp"
#include "tokf/errors.hpp"
#include "tokf/model.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

struct TrainConfig {
  double base_lr = 6e-4;
  std::int64_t warmup_steps = 100;
  std::int64_t total_steps = 500;
  std::int64_t batch_size = 8;
  std::int64_t seq_len = 64;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t eval_interval = 100;
  std::int64_t eval_bytes = 8192;  // validation budget per eval
  double train_fraction = 0.9;
  Arm arm = Arm::Tokenformer;

  void validate() const {
    if (!(base_lr >= 0)) throw ConfigError("train config: base_lr must be >= 0");
    if (total_steps <= 0) throw ConfigError("train config: total_steps must be positive");
    if (warmup_steps < 0 || warmup_steps > total_steps) {
      throw ConfigError("train config: warmup_steps must be in [0, total_steps]");
    }
    if (batch_size <= 0 || seq_len <= 0) {
      throw ConfigError("train config: batch_size and seq_len must be positive");
    }
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
      throw ConfigError("train config: betas must be in [0, 1)");
    }
    if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
    if (eval_interval <= 0) throw ConfigError("train config: eval_interval must be positive");
  }
};

// Linear warmup to base_lr, then cosine decay to zero at total_steps.
// Continuous at the junction: both branches give base_lr at step == warmup_steps.
inline double lr_at_step(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw ConfigError("lr_at_step: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.total_steps == cfg.warmup_steps) return step < cfg.total_steps ? cfg.base_lr : 0.0;
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool decay = false;  // weight decay applies to projection matrices only
};

template <class T, class Model>
std::vector<NamedParam<T>> parameter_list(Model& model) {
  std::vector<NamedParam<T>> out;
  model.visit_parameters([&out](const std::string& name, Tensor<T>& tensor, bool decay) {
    out.push_back(NamedParam<T>{name, &tensor, decay});
  });
  return out;
}

// Per-parameter first/second moments plus the shared step counter, aligned
// with the model's canonical parameter order.
template <class T>
struct AdamWState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;

  template <class Model>
  static AdamWState init(Model& model) {
    AdamWState s;
    model.visit_parameters([&s](const std::string&, Tensor<T>& tensor, bool) {
      s.m.push_back(Tensor<T>(tensor.shape()));
      s.v.push_back(Tensor<T>(tensor.shape()));
    });
    return s;
  }
};

// Bias-corrected AdamW with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p_old)
template <class T>
void adamw_step(const std::vector<NamedParam<T>>& params, const std::vector<Tensor<T>>& grads,
                AdamWState<T>& state, double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adamw_step: params/grads/state size mismatch");
  }
  state.t += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
  const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
  const T eps = static_cast<T>(cfg.adam_eps);
  const T step_lr = static_cast<T>(lr);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k].tensor;
    const Tensor<T>& g = grads[k];
    if (!p.same_shape(g)) {
      throw DimensionError("adamw_step: gradient shape " + g.shape_str() +
                           " does not match parameter " + params[k].name + " " + p.shape_str());
    }
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    const T wd = params[k].decay ? static_cast<T>(cfg.weight_decay) : T(0);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m(i) = b1 * m(i) + (T(1) - b1) * g(i);
      v(i) = b2 * v(i) + (T(1) - b2) * g(i) * g(i);
      const T m_hat = m(i) / bc1;
      const T v_hat = v(i) / bc2;
      p(i) -= step_lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * p(i));
    }
  }
}

// Mean token NLL of logits vs targets, log-sum-exp stabilized (no tape).
template <class T>
T nll_of_logits(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  if (static_cast<std::int64_t>(targets.size()) != logits.rows()) {
    throw DimensionError("nll_of_logits: target count mismatch");
  }
  T total = 0;
  for (std::int64_t i = 0; i < logits.rows(); ++i) {
    const std::int32_t y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw DataError("nll_of_logits: target " + std::to_string(y) + " out of range");
    }
    const T* row = logits.row_ptr(i);
    T maxv = row[0];
    for (std::int64_t j = 1; j < logits.cols(); ++j) maxv = std::max(maxv, row[j]);
    T sum = 0;
    for (std::int64_t j = 0; j < logits.cols(); ++j) sum += std::exp(row[j] - maxv);
    total += std::log(sum) + maxv - row[y];
  }
  return total / static_cast<T>(logits.rows());
}

struct EvalResult {
  double nll = 0.0;
  double perplexity = 1.0;
};

// Mean token NLL over non-overlapping windows of the slice; ppl = exp(nll).
template <class T, class Model>
EvalResult eval_perplexity(Model& model, std::span<const std::uint8_t> slice,
                           std::int64_t seq_len) {
  if (slice.size() < 2) throw DataError("eval slice must hold at least two bytes");
  if (seq_len <= 0) throw ConfigError("eval seq_len must be positive");
  double total_nll = 0.0;
  std::int64_t total_tokens = 0;
  const std::int64_t n = static_cast<std::int64_t>(slice.size());
  for (std::int64_t start = 0; start + 1 < n; start += seq_len) {
    const std::int64_t len = std::min(seq_len, n - 1 - start);
    std::vector<std::int32_t> inputs(static_cast<std::size_t>(len));
    std::vector<std::int32_t> targets(static_cast<std::size_t>(len));
    for (std::int64_t t = 0; t < len; ++t) {
      inputs[static_cast<std::size_t>(t)] = slice[static_cast<std::size_t>(start + t)];
      targets[static_cast<std::size_t>(t)] = slice[static_cast<std::size_t>(start + t + 1)];
    }
    const Tensor<T> logits = lm_logits(model, inputs);
    total_nll += static_cast<double>(nll_of_logits(logits, targets)) * static_cast<double>(len);
    total_tokens += len;
  }
  EvalResult r;
  r.nll = total_nll / static_cast<double>(total_tokens);
  r.perplexity = std::exp(r.nll);
  return r;
}

struct HistoryRow {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  bool has_eval = false;
  double lr = 0.0;

  bool operator==(const HistoryRow&) const = default;
};

// Shortest decimal that round-trips the double, so identical runs emit
// identical bytes.
inline std::string csv_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// step,train_loss,eval_loss,lr with eval_loss blank between evals.
inline std::string history_to_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "step,train_loss,eval_loss,lr\n";
  for (const HistoryRow& row : history) {
    os << row.step << ',' << csv_double(row.train_loss) << ',';
    if (row.has_eval) os << csv_double(row.eval_loss);
    os << ',' << csv_double(row.lr) << '\n';
  }
  return os.str();
}

// One training run: sample -> forward -> loss -> backward -> clip -> adamw ->
// schedule, fully reproducible from cfg.seed. checkpoint_hook (optional) fires
// at every eval_interval boundary and after the final step.
template <class T, class Model>
using CheckpointHook = std::function<void(std::int64_t step, Model& model, AdamWState<T>& opt)>;

template <class T, class Model>
std::vector<HistoryRow> train_loop(
    Model& model, const Corpus& corpus, const TrainConfig& cfg,
    const std::type_identity_t<CheckpointHook<T, Model>>& checkpoint_hook = nullptr) {
  cfg.validate();
  Rng data_rng(cfg.seed);
  std::vector<NamedParam<T>> params = parameter_list<T>(model);
  AdamWState<T> opt = AdamWState<T>::init(model);
  std::vector<HistoryRow> history;
  history.reserve(static_cast<std::size_t>(cfg.total_steps));
  double last_grad_norm = 0.0;

  const auto eval_now = [&]() {
    const auto val = corpus.validation();
    const std::size_t budget =
        std::min(val.size(), static_cast<std::size_t>(std::max<std::int64_t>(cfg.eval_bytes, 2)));
    return eval_perplexity<T>(model, val.subspan(0, budget), cfg.seq_len).nll;
  };

  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const double lr = lr_at_step(step, cfg);
    const TokenBatch batch = batch_sample(corpus, data_rng, cfg.batch_size, cfg.seq_len);

    ad::Tape<T> tape;
    TapedParams<T> tp = register_parameters(tape, model);
    ad::Var loss{};
    for (std::int64_t b = 0; b < batch.batch; ++b) {
      const auto in_row = batch.input_row(b);
      const auto tgt_row = batch.target_row(b);
      ad::Var logits = lm_forward(tape, tp, model,
                                     std::vector<std::int32_t>(in_row.begin(), in_row.end()));
      ad::Var seq_loss = ad::cross_entropy(
          tape, logits, std::vector<std::int32_t>(tgt_row.begin(), tgt_row.end()));
      loss = b == 0 ? seq_loss : ad::add(tape, loss, seq_loss);
    }
    loss = ad::scale(tape, loss, T(1) / static_cast<T>(batch.batch));
    const double loss_val = static_cast<double>(tape.value(loss)(0));
    if (!std::isfinite(loss_val)) {
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": loss is non-finite (lr=" + std::to_string(lr) +
                         ", last grad norm=" + std::to_string(last_grad_norm) + ")");
    }
    tape.backward(loss);

    std::vector<Tensor<T>> grads;
    grads.reserve(params.size());
    double norm_sq = 0.0;
    for (const auto& [name, var] : tp.vars) {
      const Tensor<T>& g = tape.grad(var);
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        norm_sq += static_cast<double>(g(i)) * static_cast<double>(g(i));
      }
      grads.push_back(g);
    }
    last_grad_norm = std::sqrt(norm_sq);
    if (!std::isfinite(last_grad_norm)) {
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": gradient norm is non-finite (lr=" + std::to_string(lr) + ")");
    }
    if (cfg.grad_clip > 0 && last_grad_norm > cfg.grad_clip) {
      const T factor = static_cast<T>(cfg.grad_clip / last_grad_norm);
      for (Tensor<T>& g : grads) {
        for (std::int64_t i = 0; i < g.numel(); ++i) g(i) *= factor;
      }
    }
    adamw_step(params, grads, opt, lr, cfg);

    HistoryRow row;
    row.step = step;
    row.train_loss = loss_val;
    row.lr = lr;
    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
      row.eval_loss = eval_now();
      row.has_eval = true;
      if (checkpoint_hook) checkpoint_hook(step, model, opt);
    }
    history.push_back(row);
  }
  return history;
}

}  // namespace tokf
