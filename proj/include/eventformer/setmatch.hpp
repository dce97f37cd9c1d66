#pragma once
#include <vector>

#include "eventformer/graph.hpp"
#include "eventformer/tensor.hpp"
#include "eventformer/types.hpp"

namespace evf {

// Temporal IoU of two segments. An alternative printed form of the
// denominator ("+T∩") is available behind printed_denominator; the standard
// union is the default.
double tiou(double s1, double e1, double s2, double e2, bool printed_denominator = false);

// λ_tIoU·(1−tIoU) + λ_L1·(|Δs|+|Δe|)/T. Zero iff the segments coincide.
double boundary_loss(double gt_s, double gt_e, double pr_s, double pr_e, double lambda_tiou,
                     double lambda_l1, double T, bool printed_denominator = false);

// Numeric snapshot of one sequence's predictions, flat over the C·N0 queries
// (query (c−1)·N0+i is class c's slot i). probs is Q×2, or Q×(C+1) in
// class-agnostic mode.
struct SetPredictions {
  Tensor probs;
  std::vector<double> start, end;
  int C = 0, N0 = 0;
};

// gt slot ↔ global query index, grouped by the ground truth's class.
struct MatchPair {
  int gt_slot;
  int query;
};
struct MatchResult {
  std::vector<std::vector<MatchPair>> per_class;
  int total() const {
    int n = 0;
    for (const auto& c : per_class) n += static_cast<int>(c.size());
    return n;
  }
};

// Pair-wise cost over one class: rows are that class's valid ground-truth
// entries in slot order, columns its N0 predictions;
// entry = λ_bound·boundary_loss − λ_valid·p̂[valid].
Tensor matching_cost_matrix(const PaddedClassSet& gt, const SetPredictions& pred,
                            const RunConfig& cfg, double T);

// Minimum-cost assignment of every row to a distinct column (rows ≤ cols).
// Ties resolve to the smallest column index in row order.
std::vector<int> hungarian(const Tensor& cost);

// Per-class Hungarian in class_specific mode; one global matrix over all
// valid ground truth and all C·N0 queries in class_agnostic mode, where the
// validity reward reads the ground-truth class's probability.
MatchResult match_all_classes(const std::vector<PaddedClassSet>& gt, const SetPredictions& pred,
                              const RunConfig& cfg, double T);

struct LossTerms {
  double total = 0;
  double boundary_tiou = 0;
  double boundary_l1 = 0;
  double classification = 0;
  int matched = 0;
};

// The set prediction loss as a graph: boundary terms over matched pairs only,
// cross-entropy over every query (matched → its target class / validity,
// unmatched → no-event, weighted by no_event_weight). probs must already be
// softmax output; s_abs/e_abs are Q×1 absolute boundaries. Training and the
// numeric wrapper share this single construction.
Value build_set_loss(Graph& g, Value probs, Value s_abs, Value e_abs,
                     const std::vector<PaddedClassSet>& gt, const MatchResult& matches,
                     const RunConfig& cfg, double T, LossTerms* terms = nullptr);

// Numeric evaluation of build_set_loss on a throwaway graph.
LossTerms set_prediction_loss(const std::vector<PaddedClassSet>& gt, const SetPredictions& pred,
                              const MatchResult& matches, const RunConfig& cfg, double T);

}  // namespace evf
