#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "eventformer/tensor.hpp"

namespace evf {

// A temporal segment with a class label; boundaries are continuous positions
// in [0, T] with frame i spanning [i, i+1).
struct EventSpan {
  double start = 0;
  double end = 0;
  int class_id = 0;  // in [1, C]
};

// One slot of a fixed-size class set. Padding slots carry valid=0 and (0,0)
// boundaries; their boundaries must never be read.
struct PaddedEntry {
  double start = 0;
  double end = 0;
  int valid = 0;
};

// Fixed-size (N0) per-class event set: the matching unit.
struct PaddedClassSet {
  int class_id = 0;
  std::vector<PaddedEntry> entries;
  int valid_count() const {
    int n = 0;
    for (const auto& e : entries) n += e.valid;
    return n;
  }
};

// One model input: per-frame features plus ground-truth events.
struct SequenceSample {
  std::string id;
  int64_t T = 0;
  Tensor features;  // T×F
  std::vector<EventSpan> events;
};

// A scored detection flowing into metrics and plots.
struct DetectionRecord {
  double start = 0;
  double end = 0;
  int class_id = 0;
  double score = 0;
};

enum class MatchingMode { kClassSpecific, kClassAgnostic };

struct RunConfig {
  int C = 4;
  int N0 = 100;
  int d_m = 64;   // reference scale: 256
  int L = 2;      // reference scale: 6
  int heads = 4;
  int d_p = 16;   // positional embedding width when concatenated
  std::string positional = "concat";  // or "additive"
  double dropout = 0.0;
  double lambda_bound = 5;
  double lambda_valid = 1;
  double lambda_tiou = 2;
  double lambda_l1 = 5;
  double lambda_class = 1;
  double tau_infer = 0.5;
  MatchingMode matching_mode = MatchingMode::kClassSpecific;
  uint64_t seed = 7;
  bool tiou_printed_denominator = false;
  double no_event_weight = 1.0;
  bool class_agnostic_recall = false;
  bool ar_per_class = false;

  int query_count() const { return C * N0; }
  // 2-way validity head, or (C+1)-way class head in class-agnostic mode.
  int class_out() const { return matching_mode == MatchingMode::kClassAgnostic ? C + 1 : 2; }
  void validate() const;  // throws std::invalid_argument on bad fields
};

// Throws if invariants are violated: boundary ordering/range, class range,
// and within-class overlap (binary per-frame occurrence labels cannot
// represent overlapping same-class events).
void validate_sample(const SequenceSample& sample, int C);

// Partition events by class and pad each set with invalid entries up to N0.
// Valid entries keep the input order. Throws on per-class overflow.
std::vector<PaddedClassSet> split_and_pad(const std::vector<EventSpan>& events, int C, int N0);

// Inverse of split_and_pad: concatenates valid entries over classes in
// (class, slot) order.
std::vector<EventSpan> merge_valid(const std::vector<PaddedClassSet>& sets);

struct SlidingResult {
  std::vector<SequenceSample> windows;
  std::vector<std::string> warnings;
};

// Cut a long sequence into windows of length T at stride T/2; events are
// clipped to each window and re-expressed in window-local frames. Zero-length
// fragments and a trailing partial window are dropped.
SlidingResult sliding_windows(const Tensor& long_features, const std::vector<EventSpan>& long_events,
                              int64_t T, const std::string& base_id = "seq");

}  // namespace evf
