#pragma once

#include <string>
#include <vector>

#include "tokf/model.hpp"
#include "tokf/train.hpp"

namespace tokf {

struct ModelPreset {
  std::string name;
  ModelConfig config;
};

// Built-in model configurations: the published Tokenformer variants (for the
// analytic cost paths) and byte-vocab desk models small enough to train on a
// CPU in minutes. The same values ship as JSON files under presets/.
const std::vector<ModelPreset>& model_presets();

// Resolve a preset name or a path to a ModelConfig JSON file.
ModelConfig resolve_model_config(const std::string& name_or_path);

struct TrainPreset {
  std::string name;
  TrainConfig config;
};

// desk (default), plus the two published large-run protocols kept as presets.
const std::vector<TrainPreset>& train_presets();
const TrainConfig* find_train_preset(const std::string& name);

}  // namespace tokf
