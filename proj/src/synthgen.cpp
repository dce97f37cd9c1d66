#include "eventformer/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "eventformer/dataset.hpp"
#include "eventformer/rng.hpp"
#include "json.hpp"

namespace evf {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr uint64_t kStreamMixing = 0x57;    // one draw order per dataset seed
constexpr uint64_t kStreamSequence = 0x5E;  // keyed (dataset_seed, index)
constexpr int kPlacementAttempts = 100;

ordered_json generator_fields(const GeneratorConfig& cfg) {
  ordered_json pairs = ordered_json::array();
  for (const auto& p : cfg.cooccur_pairs) pairs.push_back({p.class_a, p.class_b, p.prob});
  return ordered_json{{"C", cfg.C},
                      {"T", cfg.T},
                      {"F", cfg.F},
                      {"events_per_class_rate", cfg.events_per_class_rate},
                      {"min_len", cfg.min_len},
                      {"max_len", cfg.max_len},
                      {"cooccur_pairs", pairs},
                      {"cooccur_jitter", cfg.cooccur_jitter},
                      {"ramp_len", cfg.ramp_len},
                      {"noise_sigma", cfg.noise_sigma},
                      {"n_train", cfg.n_train},
                      {"n_val", cfg.n_val},
                      {"n_test", cfg.n_test}};
}

GeneratorConfig generator_from_fields(const ordered_json& j) {
  GeneratorConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "C") cfg.C = value.get<int>();
    else if (key == "T") cfg.T = value.get<int64_t>();
    else if (key == "F") cfg.F = value.get<int64_t>();
    else if (key == "events_per_class_rate") cfg.events_per_class_rate = value.get<double>();
    else if (key == "min_len") cfg.min_len = value.get<int64_t>();
    else if (key == "max_len") cfg.max_len = value.get<int64_t>();
    else if (key == "cooccur_pairs") {
      cfg.cooccur_pairs.clear();
      for (const auto& p : value) {
        if (!p.is_array() || p.size() != 3)
          throw std::invalid_argument("cooccur_pairs entries must be [class_a, class_b, prob]");
        cfg.cooccur_pairs.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<double>()});
      }
    } else if (key == "cooccur_jitter") cfg.cooccur_jitter = value.get<int64_t>();
    else if (key == "ramp_len") cfg.ramp_len = value.get<int64_t>();
    else if (key == "noise_sigma") cfg.noise_sigma = value.get<double>();
    else if (key == "n_train") cfg.n_train = value.get<int64_t>();
    else if (key == "n_val") cfg.n_val = value.get<int64_t>();
    else if (key == "n_test") cfg.n_test = value.get<int64_t>();
    else throw std::invalid_argument("unknown generator field: " + key);
  }
  cfg.validate();
  return cfg;
}

// Base events keep a one-frame gap so separate events never read as one block.
bool fits_with_gap(const std::vector<std::pair<int64_t, int64_t>>& placed, int64_t s, int64_t e) {
  for (const auto& [ps, pe] : placed)
    if (s <= pe && ps <= e) return false;
  return true;
}

void merge_spawned(std::vector<EventSpan>& events, double s, double e, int class_b) {
  double lo = s, hi = e;
  std::vector<EventSpan> kept;
  kept.reserve(events.size());
  for (const auto& ev : events) {
    if (ev.class_id == class_b && ev.start < hi && lo < ev.end) {
      lo = std::min(lo, ev.start);
      hi = std::max(hi, ev.end);
    } else {
      kept.push_back(ev);
    }
  }
  kept.push_back({lo, hi, class_b});
  events = std::move(kept);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (C < 1) throw std::invalid_argument("C must be >= 1");
  if (T < 1 || F < 1) throw std::invalid_argument("T and F must be >= 1");
  if (min_len < 1 || min_len > max_len || max_len > T)
    throw std::invalid_argument("need 1 <= min_len <= max_len <= T");
  if (events_per_class_rate < 0) throw std::invalid_argument("events_per_class_rate must be >= 0");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (ramp_len < 0) throw std::invalid_argument("ramp_len must be >= 0");
  if (cooccur_jitter < 0) throw std::invalid_argument("cooccur_jitter must be >= 0");
  if (n_train < 0 || n_val < 0 || n_test < 0) throw std::invalid_argument("split sizes must be >= 0");
  for (const auto& p : cooccur_pairs) {
    if (p.class_a < 1 || p.class_a > C || p.class_b < 1 || p.class_b > C)
      throw std::invalid_argument("cooccur pair classes must lie in [1, C]");
    if (p.class_a == p.class_b) throw std::invalid_argument("cooccur pair classes must differ");
    if (p.prob < 0 || p.prob > 1) throw std::invalid_argument("cooccur probability must lie in [0, 1]");
  }
}

Tensor mixing_matrix(const GeneratorConfig& cfg, uint64_t dataset_seed) {
  CounterRng rng(CounterRng::mix(dataset_seed, kStreamMixing));
  Tensor w = Tensor::zeros({cfg.F, static_cast<int64_t>(cfg.C)});
  for (auto& x : w.v) x = rng.normal();
  return w;
}

Tensor class_activity(const std::vector<EventSpan>& events, int C, int64_t T, int64_t ramp_len) {
  Tensor a = Tensor::zeros({T, static_cast<int64_t>(C)});
  for (const auto& ev : events) {
    const int64_t s = static_cast<int64_t>(ev.start);
    const int64_t e = static_cast<int64_t>(ev.end);
    for (int64_t t = std::max<int64_t>(0, s); t < std::min(T, e); ++t) {
      double v = 1.0;
      if (ramp_len > 0) {
        const double up = static_cast<double>(t - s + 1) / static_cast<double>(ramp_len);
        const double down = static_cast<double>(e - t) / static_cast<double>(ramp_len);
        v = std::min({1.0, up, down});
      }
      a.at(t, ev.class_id - 1) = std::max(a.at(t, ev.class_id - 1), v);
    }
  }
  return a;
}

SequenceSample generate_sequence(const GeneratorConfig& cfg, uint64_t dataset_seed, int64_t index) {
  cfg.validate();
  CounterRng rng(CounterRng::mix(dataset_seed, kStreamSequence, static_cast<uint64_t>(index)));

  // Classes generate in order; spawned events already present when a later
  // class packs its own events are avoided like any other same-class event,
  // so co-occurring copies survive instead of being merged away.
  std::vector<EventSpan> events;
  for (int c = 1; c <= cfg.C; ++c) {
    std::vector<std::pair<int64_t, int64_t>> placed;
    for (const auto& ev : events)
      if (ev.class_id == c)
        placed.emplace_back(static_cast<int64_t>(ev.start), static_cast<int64_t>(ev.end));
    const int64_t want = rng.poisson(cfg.events_per_class_rate);
    for (int64_t k = 0; k < want; ++k) {
      const int64_t len = rng.uniform_int(cfg.min_len, cfg.max_len);
      for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        const int64_t s = rng.uniform_int(0, cfg.T - len);
        if (fits_with_gap(placed, s, s + len)) {
          placed.emplace_back(s, s + len);
          events.push_back({static_cast<double>(s), static_cast<double>(s + len), c});
          break;
        }
      }
    }

    for (const auto& pair : cfg.cooccur_pairs) {
      if (pair.class_a != c) continue;
      std::vector<EventSpan> sources;
      for (const auto& ev : events)
        if (ev.class_id == c) sources.push_back(ev);
      std::sort(sources.begin(), sources.end(), [](const EventSpan& a, const EventSpan& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
      });
      for (const auto& src : sources) {
        if (rng.uniform() >= pair.prob) continue;
        const int64_t js = rng.uniform_int(-cfg.cooccur_jitter, cfg.cooccur_jitter);
        const int64_t je = rng.uniform_int(-cfg.cooccur_jitter, cfg.cooccur_jitter);
        double s =
            std::clamp(src.start + static_cast<double>(js), 0.0, static_cast<double>(cfg.T - 1));
        double e = std::clamp(src.end + static_cast<double>(je), s + 1.0, static_cast<double>(cfg.T));
        merge_spawned(events, s, e, pair.class_b);
      }
    }
  }

  std::sort(events.begin(), events.end(), [](const EventSpan& a, const EventSpan& b) {
    return std::tie(a.start, a.end, a.class_id) < std::tie(b.start, b.end, b.class_id);
  });

  SequenceSample sample;
  char id[32];
  std::snprintf(id, sizeof(id), "seq-%06lld", static_cast<long long>(index));
  sample.id = id;
  sample.T = cfg.T;
  sample.events = events;

  const Tensor w = mixing_matrix(cfg, dataset_seed);
  const Tensor a = class_activity(events, cfg.C, cfg.T, cfg.ramp_len);
  sample.features = Tensor::zeros({cfg.T, cfg.F});
  gemm(false, true, a, w, sample.features);
  if (cfg.noise_sigma > 0)
    for (auto& x : sample.features.v) x += cfg.noise_sigma * rng.normal();

  validate_sample(sample, cfg.C);
  return sample;
}

DatasetPaths generate_dataset(const GeneratorConfig& cfg, uint64_t seed, const std::string& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);

  DatasetPaths paths{dir + "/train.jsonl", dir + "/val.jsonl", dir + "/test.jsonl",
                     dir + "/manifest.json"};
  const std::vector<std::pair<std::string, int64_t>> splits = {
      {paths.train, cfg.n_train}, {paths.val, cfg.n_val}, {paths.test, cfg.n_test}};

  int64_t index = 0;
  for (const auto& [path, count] : splits) {
    std::vector<SequenceSample> samples;
    samples.reserve(count);
    for (int64_t k = 0; k < count; ++k) samples.push_back(generate_sequence(cfg, seed, index++));
    write_dataset(path, samples);
  }

  ordered_json manifest{{"format", "evf-dataset"},
                        {"version", 1},
                        {"seed", seed},
                        {"generator", generator_fields(cfg)},
                        {"files",
                         ordered_json{{"train", "train.jsonl"},
                                      {"val", "val.jsonl"},
                                      {"test", "test.jsonl"}}}};
  std::ofstream out(paths.manifest);
  if (!out) throw std::runtime_error("cannot open " + paths.manifest + " for writing");
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + paths.manifest);
  return paths;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (j.value("format", "") != "evf-dataset") throw std::runtime_error(path + ": not a dataset manifest");
  Manifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.generator = generator_from_fields(j.at("generator"));
  return m;
}

std::string generator_to_json(const GeneratorConfig& cfg) { return generator_fields(cfg).dump(2); }

GeneratorConfig generator_from_json(const std::string& text) {
  return generator_from_fields(ordered_json::parse(text));
}

}  // namespace evf
