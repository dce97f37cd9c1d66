#pragma once
#include <string>
#include <vector>

#include "eventformer/types.hpp"

namespace evf {

struct EvalOptions {
  std::vector<double> map_alphas = {0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> ar_alphas = {0.50, 0.55, 0.60, 0.65, 0.70,
                                   0.75, 0.80, 0.85, 0.90, 0.95};
  int an_max = 100;
  // Let a detection match ground truth of any class when computing recall.
  bool class_agnostic_recall = false;
  // Apply the AN budget per class instead of per sequence.
  bool ar_per_class = false;
};

// All values are percentages. NaN marks an undefined entry (no ground truth
// to recall); JSON serialization renders it as null.
struct EvalReport {
  std::vector<double> map_alphas;
  // per_class_ap[a][c-1]: AP of class c at map_alphas[a].
  std::vector<std::vector<double>> per_class_ap;
  std::vector<double> map;  // indexed like map_alphas
  std::vector<double> ar_alphas;
  std::vector<double> ar_at_an;  // ar_at_an[n-1] = AR@n, n in [1, an_max]
  double auc = 0;
};

// Orders detections for greedy matching: score descending, then earlier
// start, then input order.
void sort_detections(std::vector<DetectionRecord>& dets);

// Greedy TP(1)/FP(0) flags for a single class's detections against its
// ground truths. A detection claims its best-tIoU unmatched ground truth iff
// that tIoU reaches alpha; each ground truth is claimed at most once.
std::vector<int> match_detections(const std::vector<EventSpan>& gts,
                                  const std::vector<DetectionRecord>& dets,
                                  double alpha);

// Area under the all-point-interpolated precision/recall curve, as a
// fraction. flags are TP/FP in score order.
double average_precision(const std::vector<int>& flags, int64_t gt_count);

// Full evaluation over parallel per-sequence ground-truth and detection
// lists. AP pools detections across sequences per class; AR@AN truncates to
// the top AN detections per sequence before class-aware matching.
EvalReport evaluate_detections(const std::vector<std::vector<EventSpan>>& gts,
                               const std::vector<std::vector<DetectionRecord>>& dets,
                               int C, const EvalOptions& opt = {});

// Aligned text table: mAP at each alpha, AR@10/50/100, AUC.
std::string report_table(const EvalReport& report, const std::string& label = "model");

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace evf
