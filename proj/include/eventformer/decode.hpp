#pragma once
#include <cstdint>
#include <vector>

#include "eventformer/params.hpp"
#include "eventformer/setmatch.hpp"
#include "eventformer/tensor.hpp"
#include "eventformer/types.hpp"

namespace evf {

struct OptimState;
class Model;

// Threshold filtering over predicted sets. Class-specific heads carry the
// label structurally (query block ownership); class-agnostic heads label by
// the best non-empty class and keep when that probability clears the bar.
std::vector<DetectionRecord> filter_events(const SetPredictions& pred, double tau_infer,
                                           MatchingMode mode);

// Query rows surviving the same filter, aligned 1:1 with filter_events.
std::vector<int64_t> kept_query_indices(const SetPredictions& pred, double tau_infer,
                                        MatchingMode mode);

// EventFormer inference for one sequence: predict, then threshold at the
// model's tau_infer. No NMS — sets are already non-redundant.
std::vector<DetectionRecord> detect_sequence(const Model& model, const SequenceSample& sample);

// Gaussian-decay Soft-NMS over one class: repeatedly select the best record,
// rescale the rest by exp(−tIoU²/sigma); selection order, at most `keep`.
std::vector<DetectionRecord> soft_nms(std::vector<DetectionRecord> records, double sigma,
                                      int64_t keep);

struct Segment {
  int64_t start = 0;
  int64_t end = 0;  // exclusive frame index
};

// Temporal actionness grouping: seeds are maximal runs of prob ≥ gamma; each
// seed absorbs adjacent frames (higher-probability side first) while the
// fraction of above-gamma frames stays ≥ tau_union; overlaps merge.
std::vector<Segment> tag_group(const std::vector<double>& frame_probs, double gamma,
                               double tau_union);

// Frame2Event baseline: per class, pool TAG segments over the 10×10
// (gamma, tau_union) ∈ {0.50,…,0.95}² grid, score by mean class probability,
// dedupe, Soft-NMS to keep_per_class.
std::vector<DetectionRecord> frame2event(const Tensor& frame_probs, int64_t keep_per_class,
                                         double nms_sigma = 0.5);

struct ScoreMaps {
  Tensor frame_probs;  // T×C
  Tensor p_start;      // T×C, max(0, p(t) − p(t−1)), p(−1) = 0
  Tensor p_end;        // T×C, max(0, p(t) − p(t+1)), p(T) = 0
};

ScoreMaps build_score_maps(const Tensor& frame_probs);

// Unit2Event baseline: every frame pair s < e scores
// P_s(s)·P_e(e)·mean-prob(s..e); zero scores drop; the record spans [s, e+1).
std::vector<DetectionRecord> unit2event_decode(const ScoreMaps& maps, int64_t keep_per_class,
                                               double nms_sigma = 0.5);

// Per-frame probability head shared by both baselines: two-layer MLP with a
// sigmoid per class, trained on binary frame labels from the ground truth.
class FrameHead {
 public:
  FrameHead(int64_t F, int64_t d, int C, uint64_t seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int C() const { return C_; }

  Tensor frame_probs(const Tensor& features) const;  // T×C in (0,1)

  static Tensor frame_labels(const SequenceSample& sample, int C);

  // One pass over the samples in order, one optimizer step per sample;
  // returns the mean per-frame binary cross-entropy.
  double train_epoch(const std::vector<SequenceSample>& samples, OptimState& state);

 private:
  int64_t F_;
  int64_t d_;
  int C_;
  ParamStore params_;
};

}  // namespace evf
