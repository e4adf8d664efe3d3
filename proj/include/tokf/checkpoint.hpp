#pragma once

#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "tokf/baseline.hpp"
#include "tokf/config_io.hpp"
#include "tokf/container.hpp"
#include "tokf/model.hpp"
#include "tokf/train.hpp"

namespace tokf {

namespace detail {

template <class T>
RawTensor raw_of(const std::string& name, const Tensor<T>& t) {
  RawTensor raw;
  raw.name = name;
  raw.elem_width = static_cast<int>(sizeof(T));
  raw.shape = t.shape();
  raw.bytes.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
  std::memcpy(raw.bytes.data(), t.data(), raw.bytes.size());
  return raw;
}

template <class T>
void fill_from_raw(Tensor<T>& dst, const RawTensor& raw) {
  if (raw.elem_width != static_cast<int>(sizeof(T))) {
    throw FormatError("tensor '" + raw.name + "' stored with " +
                      std::to_string(raw.elem_width * 8) + "-bit elements, expected " +
                      std::to_string(sizeof(T) * 8) + "-bit");
  }
  if (raw.shape != dst.shape()) {
    Tensor<T> probe(raw.shape);
    throw FormatError("tensor '" + raw.name + "' has shape " + probe.shape_str() +
                      ", model expects " + dst.shape_str());
  }
  std::memcpy(dst.data(), raw.bytes.data(), raw.bytes.size());
}

template <class T, class Model>
std::vector<RawTensor> model_tensors(Model& model) {
  std::vector<RawTensor> tensors;
  model.visit_parameters([&tensors](const std::string& name, Tensor<T>& t, bool) {
    tensors.push_back(raw_of(name, t));
  });
  return tensors;
}

// Zero-weight model of the right shapes; the loader fills tensors and taus.
template <class T>
TokenformerLM<T> tokenformer_skeleton(const ModelConfig& cfg) {
  cfg.validate();
  TokenformerLM<T> m;
  m.cfg = cfg;
  m.tok_embedding = Tensor<T>({cfg.n_vocab, cfg.d_model});
  m.pos_embedding = Tensor<T>({cfg.max_seq, cfg.d_model});
  for (std::int64_t l = 0; l < cfg.n_layer; ++l) {
    TokenformerBlock<T> b;
    auto blank = [&cfg](std::int64_t n) {
      return ParamTokens<T>(Tensor<T>({n, cfg.d_model}), Tensor<T>({n, cfg.d_model}),
                            std::sqrt(static_cast<T>(n)), cfg.variant);
    };
    b.q = blank(cfg.n_q);
    b.k = blank(cfg.n_k);
    b.v = blank(cfg.n_v);
    b.o = blank(cfg.n_o);
    b.ffn = blank(cfg.n_ffn);
    if (cfg.ln_affine) {
      b.ln1_gamma = Tensor<T>({1, cfg.d_model});
      b.ln1_beta = Tensor<T>({1, cfg.d_model});
      b.ln2_gamma = Tensor<T>({1, cfg.d_model});
      b.ln2_beta = Tensor<T>({1, cfg.d_model});
    }
    m.blocks.push_back(std::move(b));
  }
  return m;
}

template <class T>
TransformerLM<T> transformer_skeleton(const ModelConfig& cfg) {
  cfg.validate();
  TransformerLM<T> m;
  m.cfg = cfg;
  const std::int64_t d = cfg.d_model;
  m.tok_embedding = Tensor<T>({cfg.n_vocab, d});
  m.pos_embedding = Tensor<T>({cfg.max_seq, d});
  for (std::int64_t l = 0; l < cfg.n_layer; ++l) {
    LinearBlockWeights<T> b;
    b.w_q = Tensor<T>({d, d});
    b.w_k = Tensor<T>({d, d});
    b.w_v = Tensor<T>({d, d});
    b.w_o = Tensor<T>({d, d});
    b.w1 = Tensor<T>({d, 4 * d});
    b.w2 = Tensor<T>({4 * d, d});
    if (cfg.ln_affine) {
      b.ln1_gamma = Tensor<T>({1, d});
      b.ln1_beta = Tensor<T>({1, d});
      b.ln2_gamma = Tensor<T>({1, d});
      b.ln2_beta = Tensor<T>({1, d});
    }
    m.blocks.push_back(std::move(b));
  }
  return m;
}

template <class T, class Model>
void fill_model_from_table(Model& model, const std::vector<RawTensor>& tensors) {
  std::size_t cursor = 0;
  model.visit_parameters([&](const std::string& name, Tensor<T>& t, bool) {
    if (cursor >= tensors.size()) {
      throw FormatError("checkpoint tensor table ended before '" + name + "'");
    }
    const RawTensor& raw = tensors[cursor++];
    if (raw.name != name) {
      throw FormatError("checkpoint tensor order mismatch: found '" + raw.name + "', expected '" +
                        name + "'");
    }
    fill_from_raw(t, raw);
  });
  if (cursor != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size() - cursor) +
                      " unexpected extra tensors");
  }
}

template <class T>
std::vector<std::uint8_t> encode_optimizer(const AdamWState<T>& opt,
                                           const std::vector<NamedParam<T>>& params) {
  std::vector<RawTensor> tensors;
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back(raw_of(params[i].name + ".m", opt.m[i]));
    tensors.push_back(raw_of(params[i].name + ".v", opt.v[i]));
  }
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(opt.t));
  const std::vector<std::uint8_t> table = encode_tensor_table(tensors);
  w.raw(table.data(), table.size());
  return w.take();
}

template <class T, class Model>
AdamWState<T> decode_optimizer(const RawSection& section, Model& model) {
  ByteReader r(section.payload.data(), section.payload.size(), "optimizer section");
  AdamWState<T> opt = AdamWState<T>::init(model);
  opt.t = static_cast<std::int64_t>(r.u64());
  const std::vector<RawTensor> tensors = decode_tensor_table(r);
  std::vector<NamedParam<T>> params = parameter_list<T>(model);
  if (tensors.size() != params.size() * 2) {
    throw FormatError("optimizer section holds " + std::to_string(tensors.size()) +
                      " tensors, expected " + std::to_string(params.size() * 2));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[2 * i].name != params[i].name + ".m" ||
        tensors[2 * i + 1].name != params[i].name + ".v") {
      throw FormatError("optimizer tensor order mismatch at '" + params[i].name + "'");
    }
    fill_from_raw(opt.m[i], tensors[2 * i]);
    fill_from_raw(opt.v[i], tensors[2 * i + 1]);
  }
  return opt;
}

}  // namespace detail

struct CheckpointInfo {
  Arm arm = Arm::Tokenformer;
  int elem_width_bits = 32;
  ModelConfig model_cfg;
  std::optional<TrainConfig> train_cfg;
  bool has_optimizer = false;
};

inline CheckpointInfo info_of_raw(const RawCheckpoint& raw) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config blob is not valid JSON: ") + e.what());
  }
  CheckpointInfo info;
  try {
    info.arm = parse_arm(j.at("arm").get<std::string>());
    info.elem_width_bits = j.at("elem_width").get<int>();
    info.model_cfg = model_config_from_json(j.at("model"));
    if (j.contains("train")) info.train_cfg = train_config_from_json(j.at("train"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config blob missing fields: ") + e.what());
  }
  info.has_optimizer = raw.find(kOptimizerSectionTag) != nullptr;
  return info;
}

inline CheckpointInfo peek_checkpoint(const std::string& path) {
  return info_of_raw(read_checkpoint_file(path));
}

template <class T>
void save_checkpoint(TokenformerLM<T>& model, const std::string& path,
                     const TrainConfig* train_cfg = nullptr,
                     const AdamWState<T>* opt = nullptr) {
  nlohmann::json j;
  j["arm"] = arm_name(Arm::Tokenformer);
  j["elem_width"] = static_cast<int>(sizeof(T)) * 8;
  j["model"] = to_json(model.cfg);
  if (train_cfg != nullptr) j["train"] = to_json(*train_cfg);
  nlohmann::json taus = nlohmann::json::array();
  for (const TokenformerBlock<T>& b : model.blocks) {
    taus.push_back({static_cast<double>(b.q.tau), static_cast<double>(b.k.tau),
                    static_cast<double>(b.v.tau), static_cast<double>(b.o.tau),
                    static_cast<double>(b.ffn.tau)});
  }
  j["taus"] = std::move(taus);

  RawCheckpoint raw;
  raw.config_json = j.dump();
  raw.sections.push_back(
      RawSection{kTensorSectionTag, encode_tensor_table(detail::model_tensors<T>(model))});
  if (opt != nullptr) {
    raw.sections.push_back(
        RawSection{kOptimizerSectionTag, detail::encode_optimizer(*opt, parameter_list<T>(model))});
  }
  write_checkpoint_file(path, raw);
}

template <class T>
void save_checkpoint(TransformerLM<T>& model, const std::string& path,
                     const TrainConfig* train_cfg = nullptr,
                     const AdamWState<T>* opt = nullptr) {
  nlohmann::json j;
  j["arm"] = arm_name(Arm::Transformer);
  j["elem_width"] = static_cast<int>(sizeof(T)) * 8;
  j["model"] = to_json(model.cfg);
  if (train_cfg != nullptr) j["train"] = to_json(*train_cfg);

  RawCheckpoint raw;
  raw.config_json = j.dump();
  raw.sections.push_back(
      RawSection{kTensorSectionTag, encode_tensor_table(detail::model_tensors<T>(model))});
  if (opt != nullptr) {
    raw.sections.push_back(
        RawSection{kOptimizerSectionTag, detail::encode_optimizer(*opt, parameter_list<T>(model))});
  }
  write_checkpoint_file(path, raw);
}

// Rebuilds the model; tau comes from the config blob verbatim (it is frozen at
// creation time and survives scaling, so it is NOT recomputed from pair counts).
template <class T>
TokenformerLM<T> load_tokenformer_checkpoint(const std::string& path,
                                             AdamWState<T>* opt_out = nullptr,
                                             TrainConfig* train_cfg_out = nullptr) {
  const RawCheckpoint raw = read_checkpoint_file(path);
  const CheckpointInfo info = info_of_raw(raw);
  if (info.arm != Arm::Tokenformer) {
    throw FormatError("checkpoint '" + path + "' holds a " + arm_name(info.arm) +
                      " model, expected tokenformer");
  }
  if (info.elem_width_bits != static_cast<int>(sizeof(T)) * 8) {
    throw FormatError("checkpoint '" + path + "' stores " + std::to_string(info.elem_width_bits) +
                      "-bit weights; load it with the matching element type");
  }
  TokenformerLM<T> model = detail::tokenformer_skeleton<T>(info.model_cfg);

  const nlohmann::json j = nlohmann::json::parse(raw.config_json);
  if (!j.contains("taus")) throw FormatError("tokenformer checkpoint missing taus");
  const auto& taus = j.at("taus");
  if (taus.size() != model.blocks.size()) {
    throw FormatError("checkpoint taus cover " + std::to_string(taus.size()) + " layers, model has " +
                      std::to_string(model.blocks.size()));
  }
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const auto& row = taus.at(l);
    if (row.size() != 5) throw FormatError("checkpoint taus row must list q,k,v,o,ffn");
    model.blocks[l].q.tau = static_cast<T>(row.at(0).get<double>());
    model.blocks[l].k.tau = static_cast<T>(row.at(1).get<double>());
    model.blocks[l].v.tau = static_cast<T>(row.at(2).get<double>());
    model.blocks[l].o.tau = static_cast<T>(row.at(3).get<double>());
    model.blocks[l].ffn.tau = static_cast<T>(row.at(4).get<double>());
  }

  const RawSection* tensors = raw.find(kTensorSectionTag);
  if (tensors == nullptr) throw FormatError("checkpoint '" + path + "' has no tensor section");
  ByteReader r(tensors->payload.data(), tensors->payload.size(), "tensor section");
  detail::fill_model_from_table<T>(model, decode_tensor_table(r));

  if (opt_out != nullptr) {
    const RawSection* opt = raw.find(kOptimizerSectionTag);
    if (opt != nullptr) *opt_out = detail::decode_optimizer<T>(*opt, model);
  }
  if (train_cfg_out != nullptr && info.train_cfg) *train_cfg_out = *info.train_cfg;
  return model;
}

template <class T>
TransformerLM<T> load_transformer_checkpoint(const std::string& path,
                                             AdamWState<T>* opt_out = nullptr,
                                             TrainConfig* train_cfg_out = nullptr) {
  const RawCheckpoint raw = read_checkpoint_file(path);
  const CheckpointInfo info = info_of_raw(raw);
  if (info.arm != Arm::Transformer) {
    throw FormatError("checkpoint '" + path + "' holds a " + arm_name(info.arm) +
                      " model, expected transformer");
  }
  if (info.elem_width_bits != static_cast<int>(sizeof(T)) * 8) {
    throw FormatError("checkpoint '" + path + "' stores " + std::to_string(info.elem_width_bits) +
                      "-bit weights; load it with the matching element type");
  }
  TransformerLM<T> model = detail::transformer_skeleton<T>(info.model_cfg);
  const RawSection* tensors = raw.find(kTensorSectionTag);
  if (tensors == nullptr) throw FormatError("checkpoint '" + path + "' has no tensor section");
  ByteReader r(tensors->payload.data(), tensors->payload.size(), "tensor section");
  detail::fill_model_from_table<T>(model, decode_tensor_table(r));
  if (opt_out != nullptr) {
    const RawSection* opt = raw.find(kOptimizerSectionTag);
    if (opt != nullptr) *opt_out = detail::decode_optimizer<T>(*opt, model);
  }
  if (train_cfg_out != nullptr && info.train_cfg) *train_cfg_out = *info.train_cfg;
  return model;
}

}  // namespace tokf
