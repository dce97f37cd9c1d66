#pragma once
#include <string>
#include <utility>
#include <vector>

#include "eventformer/tensor.hpp"
#include "eventformer/types.hpp"

namespace evf {

// Deterministic SVG artifacts: fixed layout, %.3f coordinates, no timestamps.

// One horizontal lane per class: ground-truth spans as hollow bars above,
// detections as filled bars below with opacity proportional to score.
std::string plot_timeline(const std::vector<EventSpan>& gts,
                          const std::vector<DetectionRecord>& dets, int C, double T,
                          const std::string& title);

// Heatmap of per-query attention rows over frames (each row must sum to 1);
// ground-truth boundaries overlaid as vertical rules.
std::string plot_attention(const Tensor& attn, const std::vector<EventSpan>& gts,
                           const std::vector<std::string>& row_labels, const std::string& title);

// AR-vs-AN curves, one polyline per labeled series (values in percent).
std::string plot_ar_curve(
    const std::vector<std::pair<std::string, std::vector<double>>>& curves,
    const std::string& title);

}  // namespace evf
