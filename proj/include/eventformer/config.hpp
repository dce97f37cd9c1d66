#pragma once
#include <string>
#include <utility>
#include <vector>

#include "eventformer/synthgen.hpp"
#include "eventformer/train.hpp"
#include "eventformer/types.hpp"

namespace evf {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything a run needs, grouped by concern. Serialized as one
// self-describing object; unknown keys are rejected with their path.
struct AppConfig {
  RunConfig run;
  GeneratorConfig generator;
  OptimConfig optim;
  TrainConfig train;
};

std::string config_to_json(const AppConfig& cfg);
AppConfig config_from_json(const std::string& text);
AppConfig load_config(const std::string& path);

// Dotted-path override, e.g. ("run.d_m", "128") or
// ("run.matching_mode", "class_agnostic"). The value is parsed as JSON when
// possible and treated as a string otherwise.
void apply_override(AppConfig& cfg, const std::string& key, const std::string& value);

// All patches land on the serialized form before the single re-parse, so a
// sequence may cross an invalid intermediate state as long as the result is
// valid (e.g. shrinking generator.T below the default generator.max_len).
AppConfig with_overrides(const AppConfig& cfg,
                         const std::vector<std::pair<std::string, std::string>>& sets);

// Checkpoint-embedded config: the full AppConfig echo plus the feature width
// the model was built for.
std::string checkpoint_config_json(const AppConfig& cfg, int feature_dim);
struct CheckpointConfig {
  AppConfig app;
  int feature_dim = 0;
};
CheckpointConfig checkpoint_config_from_json(const std::string& text);

}  // namespace evf
