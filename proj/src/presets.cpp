#include "tokf/presets.hpp"

#include <fstream>

#include <json.hpp>

#include "tokf/config_io.hpp"
#include "tokf/errors.hpp"

namespace tokf {

namespace {

ModelConfig make_model(std::int64_t n_layer, std::int64_t d, std::int64_t attn_pairs,
                       std::int64_t ffn_pairs, std::int64_t n_head, std::int64_t max_seq) {
  ModelConfig cfg;
  cfg.n_layer = n_layer;
  cfg.d_model = d;
  cfg.n_q = cfg.n_k = cfg.n_v = cfg.n_o = attn_pairs;
  cfg.n_ffn = ffn_pairs;
  cfg.n_head = n_head;
  cfg.n_vocab = 257;  // byte vocabulary everywhere
  cfg.max_seq = max_seq;
  return cfg;
}

}  // namespace

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      // Desk models: trainable on one CPU core in minutes.
      {"desk-64", make_model(2, 64, 64, 256, 4, 128)},
      {"desk-128", make_model(2, 64, 128, 512, 4, 128)},
      // Language-modeling variants.
      {"tokenformer-150m", make_model(12, 768, 768, 3072, 12, 1024)},
      {"tokenformer-450m", make_model(24, 1024, 1024, 4096, 16, 1024)},
      {"tokenformer-900m", make_model(32, 1280, 1280, 5120, 16, 1024)},
      {"tokenformer-1.5b", make_model(40, 1536, 1536, 6144, 16, 1024)},
      // Parameter-reusing ladder: layers and width fixed, only pair counts grow.
      {"tokenformer-124m", make_model(12, 768, 576, 2304, 12, 1024)},
      {"tokenformer-354m", make_model(12, 768, 2140, 8560, 12, 1024)},
      {"tokenformer-757m", make_model(12, 768, 4850, 19400, 12, 1024)},
      {"tokenformer-1.4b", make_model(12, 768, 8620, 34480, 12, 1024)},
  };
  return presets;
}

ModelConfig resolve_model_config(const std::string& name_or_path) {
  for (const ModelPreset& p : model_presets()) {
    if (p.name == name_or_path) return p.config;
  }
  std::ifstream in(name_or_path);
  if (!in) {
    std::string names;
    for (const ModelPreset& p : model_presets()) names += " " + p.name;
    throw ConfigError("'" + name_or_path + "' is neither a preset nor a readable file; presets:" +
                      names);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse config file '" + name_or_path + "': " + e.what());
  }
  return model_config_from_json(j);
}

const std::vector<TrainPreset>& train_presets() {
  static const std::vector<TrainPreset> presets = [] {
    std::vector<TrainPreset> out;

    TrainPreset desk;
    desk.name = "desk";
    out.push_back(desk);  // library defaults: 500 steps, batch 8 x 64, warmup 100

    // Published protocol: batch 512 x 1024 tokens, 2000-step warmup.
    TrainPreset owt;
    owt.name = "paper-openwebtext";
    owt.config.batch_size = 512;
    owt.config.seq_len = 1024;
    owt.config.warmup_steps = 2000;
    owt.config.total_steps = 600000;
    owt.config.eval_interval = 1000;
    out.push_back(owt);

    // Published protocol: batch 1024 x 2048 tokens, warmup 1% of steps.
    TrainPreset pile;
    pile.name = "paper-pile";
    pile.config.batch_size = 1024;
    pile.config.seq_len = 2048;
    pile.config.total_steps = 143000;
    pile.config.warmup_steps = 1430;
    pile.config.eval_interval = 1000;
    out.push_back(pile);
    return out;
  }();
  return presets;
}

const TrainConfig* find_train_preset(const std::string& name) {
  for (const TrainPreset& p : train_presets()) {
    if (p.name == name) return &p.config;
  }
  return nullptr;
}

}  // namespace tokf
