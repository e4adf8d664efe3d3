#pragma once

#include <string>

#include <json.hpp>

#include "tokf/errors.hpp"
#include "tokf/model.hpp"
#include "tokf/train.hpp"

namespace tokf {

inline nlohmann::json to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"n_layer", cfg.n_layer}, {"d_model", cfg.d_model},   {"n_q", cfg.n_q},
      {"n_k", cfg.n_k},         {"n_v", cfg.n_v},           {"n_o", cfg.n_o},
      {"n_ffn", cfg.n_ffn},     {"n_head", cfg.n_head},     {"n_vocab", cfg.n_vocab},
      {"max_seq", cfg.max_seq}, {"ln_affine", cfg.ln_affine},
      {"variant", activation_name(cfg.variant)},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.n_layer = j.at("n_layer").get<std::int64_t>();
    cfg.d_model = j.at("d_model").get<std::int64_t>();
    cfg.n_q = j.at("n_q").get<std::int64_t>();
    cfg.n_k = j.at("n_k").get<std::int64_t>();
    cfg.n_v = j.at("n_v").get<std::int64_t>();
    cfg.n_o = j.at("n_o").get<std::int64_t>();
    cfg.n_ffn = j.at("n_ffn").get<std::int64_t>();
    cfg.n_head = j.at("n_head").get<std::int64_t>();
    cfg.n_vocab = j.at("n_vocab").get<std::int64_t>();
    cfg.max_seq = j.at("max_seq").get<std::int64_t>();
    cfg.ln_affine = j.value("ln_affine", false);
    cfg.variant = parse_activation(j.value("variant", std::string("gelu_l2")));
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
  return nlohmann::json{
      {"base_lr", cfg.base_lr},
      {"warmup_steps", cfg.warmup_steps},
      {"total_steps", cfg.total_steps},
      {"batch_size", cfg.batch_size},
      {"seq_len", cfg.seq_len},
      {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},
      {"weight_decay", cfg.weight_decay},
      {"grad_clip", cfg.grad_clip},
      {"adam_eps", cfg.adam_eps},
      {"seed", cfg.seed},
      {"eval_interval", cfg.eval_interval},
      {"eval_bytes", cfg.eval_bytes},
      {"train_fraction", cfg.train_fraction},
      {"arm", arm_name(cfg.arm)},
  };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig cfg;
    cfg.base_lr = j.at("base_lr").get<double>();
    cfg.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
    cfg.total_steps = j.at("total_steps").get<std::int64_t>();
    cfg.batch_size = j.at("batch_size").get<std::int64_t>();
    cfg.seq_len = j.at("seq_len").get<std::int64_t>();
    cfg.beta1 = j.value("beta1", 0.9);
    cfg.beta2 = j.value("beta2", 0.95);
    cfg.weight_decay = j.value("weight_decay", 0.1);
    cfg.grad_clip = j.value("grad_clip", 1.0);
    cfg.adam_eps = j.value("adam_eps", 1e-8);
    cfg.seed = j.value("seed", std::uint64_t(0));
    cfg.eval_interval = j.value("eval_interval", std::int64_t(100));
    cfg.eval_bytes = j.value("eval_bytes", std::int64_t(8192));
    cfg.train_fraction = j.value("train_fraction", 0.9);
    cfg.arm = parse_arm(j.value("arm", std::string("tokenformer")));
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad train config JSON: ") + e.what());
  }
}

}  // namespace tokf
