#pragma once
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "eventformer/tensor.hpp"
#include "eventformer/types.hpp"

namespace evf {

// Co-occurrence rule: each class-a event spawns a class-b event with the given
// probability; boundaries copy the source jittered by ±cooccur_jitter frames.
struct CooccurPair {
  int class_a = 0;
  int class_b = 0;
  double prob = 0;
};

struct GeneratorConfig {
  int C = 4;
  int64_t T = 64;
  int64_t F = 16;
  double events_per_class_rate = 1.2;
  int64_t min_len = 4;
  int64_t max_len = 24;
  std::vector<CooccurPair> cooccur_pairs;
  int64_t cooccur_jitter = 2;
  int64_t ramp_len = 2;
  double noise_sigma = 0.3;
  int64_t n_train = 2000;
  int64_t n_val = 200;
  int64_t n_test = 200;

  void validate() const;  // throws invalid_argument
};

// F×C, drawn once per dataset seed; shared by every sequence of the dataset.
Tensor mixing_matrix(const GeneratorConfig& cfg, uint64_t dataset_seed);

// T×C per-frame activity: 1 on an event's plateau, linear ramps of ramp_len
// frames just inside each boundary, 0 strictly outside any event.
Tensor class_activity(const std::vector<EventSpan>& events, int C, int64_t T, int64_t ramp_len);

// Deterministic per (cfg, dataset_seed, index) regardless of generation order.
SequenceSample generate_sequence(const GeneratorConfig& cfg, uint64_t dataset_seed, int64_t index);

struct DatasetPaths {
  std::string train;
  std::string val;
  std::string test;
  std::string manifest;
};

DatasetPaths generate_dataset(const GeneratorConfig& cfg, uint64_t seed, const std::string& dir);

struct Manifest {
  GeneratorConfig generator;
  uint64_t seed = 0;
};

Manifest read_manifest(const std::string& path);

// JSON round-trip used by the manifest and by run configuration files.
std::string generator_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_from_json(const std::string& text);

}  // namespace evf
