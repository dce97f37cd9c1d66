#include "eventformer/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace evf {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string mode_name(MatchingMode m) {
  return m == MatchingMode::kClassAgnostic ? "class_agnostic" : "class_specific";
}

MatchingMode mode_from_name(const std::string& s) {
  if (s == "class_specific") return MatchingMode::kClassSpecific;
  if (s == "class_agnostic") return MatchingMode::kClassAgnostic;
  throw std::invalid_argument("config: unknown matching_mode '" + s + "'");
}

ordered_json run_fields(const RunConfig& r) {
  ordered_json j;
  j["C"] = r.C;
  j["N0"] = r.N0;
  j["d_m"] = r.d_m;
  j["L"] = r.L;
  j["heads"] = r.heads;
  j["d_p"] = r.d_p;
  j["positional"] = r.positional;
  j["dropout"] = r.dropout;
  j["lambda_bound"] = r.lambda_bound;
  j["lambda_valid"] = r.lambda_valid;
  j["lambda_tiou"] = r.lambda_tiou;
  j["lambda_l1"] = r.lambda_l1;
  j["lambda_class"] = r.lambda_class;
  j["tau_infer"] = r.tau_infer;
  j["matching_mode"] = mode_name(r.matching_mode);
  j["seed"] = r.seed;
  j["tiou_printed_denominator"] = r.tiou_printed_denominator;
  j["no_event_weight"] = r.no_event_weight;
  j["class_agnostic_recall"] = r.class_agnostic_recall;
  j["ar_per_class"] = r.ar_per_class;
  return j;
}

RunConfig run_from_fields(const ordered_json& j) {
  RunConfig r;
  for (const auto& [key, val] : j.items()) {
    if (key == "C") r.C = val.get<int>();
    else if (key == "N0") r.N0 = val.get<int>();
    else if (key == "d_m") r.d_m = val.get<int>();
    else if (key == "L") r.L = val.get<int>();
    else if (key == "heads") r.heads = val.get<int>();
    else if (key == "d_p") r.d_p = val.get<int>();
    else if (key == "positional") r.positional = val.get<std::string>();
    else if (key == "dropout") r.dropout = val.get<double>();
    else if (key == "lambda_bound") r.lambda_bound = val.get<double>();
    else if (key == "lambda_valid") r.lambda_valid = val.get<double>();
    else if (key == "lambda_tiou") r.lambda_tiou = val.get<double>();
    else if (key == "lambda_l1") r.lambda_l1 = val.get<double>();
    else if (key == "lambda_class") r.lambda_class = val.get<double>();
    else if (key == "tau_infer") r.tau_infer = val.get<double>();
    else if (key == "matching_mode") r.matching_mode = mode_from_name(val.get<std::string>());
    else if (key == "seed") r.seed = val.get<uint64_t>();
    else if (key == "tiou_printed_denominator") r.tiou_printed_denominator = val.get<bool>();
    else if (key == "no_event_weight") r.no_event_weight = val.get<double>();
    else if (key == "class_agnostic_recall") r.class_agnostic_recall = val.get<bool>();
    else if (key == "ar_per_class") r.ar_per_class = val.get<bool>();
    else throw std::invalid_argument("config: unknown key 'run." + key + "'");
  }
  return r;
}

ordered_json optim_fields(const OptimConfig& o) {
  ordered_json j;
  j["lr_main"] = o.lr_main;
  j["lr_feat"] = o.lr_feat;
  j["weight_decay"] = o.weight_decay;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
  j["clip_norm"] = o.clip_norm;
  return j;
}

OptimConfig optim_from_fields(const ordered_json& j) {
  OptimConfig o;
  for (const auto& [key, val] : j.items()) {
    if (key == "lr_main") o.lr_main = val.get<double>();
    else if (key == "lr_feat") o.lr_feat = val.get<double>();
    else if (key == "weight_decay") o.weight_decay = val.get<double>();
    else if (key == "beta1") o.beta1 = val.get<double>();
    else if (key == "beta2") o.beta2 = val.get<double>();
    else if (key == "eps") o.eps = val.get<double>();
    else if (key == "clip_norm") o.clip_norm = val.get<double>();
    else throw std::invalid_argument("config: unknown key 'optim." + key + "'");
  }
  return o;
}

ordered_json train_fields(const TrainConfig& t) {
  ordered_json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["checkpoint_every"] = t.checkpoint_every;
  j["seed"] = t.seed;
  return j;
}

TrainConfig train_from_fields(const ordered_json& j) {
  TrainConfig t;
  for (const auto& [key, val] : j.items()) {
    if (key == "epochs") t.epochs = val.get<int>();
    else if (key == "batch_size") t.batch_size = val.get<int>();
    else if (key == "checkpoint_every") t.checkpoint_every = val.get<int>();
    else if (key == "seed") t.seed = val.get<uint64_t>();
    else throw std::invalid_argument("config: unknown key 'train." + key + "'");
  }
  return t;
}

ordered_json app_fields(const AppConfig& cfg) {
  ordered_json j;
  j["run"] = run_fields(cfg.run);
  j["generator"] = ordered_json::parse(generator_to_json(cfg.generator));
  j["optim"] = optim_fields(cfg.optim);
  j["train"] = train_fields(cfg.train);
  return j;
}

AppConfig app_from_fields(const ordered_json& j) {
  AppConfig cfg;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "run") cfg.run = run_from_fields(val);
      else if (key == "generator") cfg.generator = generator_from_json(val.dump());
      else if (key == "optim") cfg.optim = optim_from_fields(val);
      else if (key == "train") cfg.train = train_from_fields(val);
      else throw std::invalid_argument("config: unknown section '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config: bad value in section '" + key + "': " + e.what());
    }
  }
  return cfg;
}

}  // namespace

std::string config_to_json(const AppConfig& cfg) { return app_fields(cfg).dump(2) + "\n"; }

AppConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  return app_from_fields(j);
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

AppConfig with_overrides(const AppConfig& cfg,
                         const std::vector<std::pair<std::string, std::string>>& sets) {
  auto j = ordered_json::parse(config_to_json(cfg));
  for (const auto& [key, value] : sets) {
    if (key.empty()) throw std::invalid_argument("config: empty override key");
    std::string ptr = "/" + key;
    for (auto& ch : ptr)
      if (ch == '.') ch = '/';
    ordered_json parsed;
    try {
      parsed = ordered_json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      parsed = value;  // bare strings need no quoting
    }
    j[ordered_json::json_pointer(ptr)] = parsed;
  }
  return app_from_fields(j);
}

void apply_override(AppConfig& cfg, const std::string& key, const std::string& value) {
  cfg = with_overrides(cfg, {{key, value}});
}

std::string checkpoint_config_json(const AppConfig& cfg, int feature_dim) {
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["feature_dim"] = feature_dim;
  j["config"] = app_fields(cfg);
  return j.dump();
}

CheckpointConfig checkpoint_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint config: ") + e.what());
  }
  if (!j.contains("feature_dim") || !j.contains("config"))
    throw std::runtime_error("checkpoint config: missing feature_dim or config");
  CheckpointConfig cc;
  cc.feature_dim = j.at("feature_dim").get<int>();
  cc.app = app_from_fields(j.at("config"));
  return cc;
}

}  // namespace evf
