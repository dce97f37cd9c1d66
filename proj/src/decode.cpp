#include "eventformer/decode.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include "eventformer/graph.hpp"
#include "eventformer/rng.hpp"
#include "eventformer/train.hpp"

namespace evf {
namespace {

constexpr double kGridLo = 0.50;
constexpr double kGridStep = 0.05;
constexpr int kGridN = 10;

double mean_prob(const Tensor& probs, int64_t s, int64_t e, int64_t c) {
  double sum = 0;
  for (int64_t t = s; t < e; ++t) sum += probs.at(t, c);
  return sum / static_cast<double>(e - s);
}

}  // namespace

namespace {

// Label and confidence of one predicted slot under the decoding mode.
std::pair<int, double> slot_label(const SetPredictions& pred, int64_t i, MatchingMode mode) {
  if (mode == MatchingMode::kClassSpecific)
    return {static_cast<int>(i / pred.N0) + 1, pred.probs.at(i, 1)};
  int class_id = 1;
  for (int c = 2; c <= pred.C; ++c)
    if (pred.probs.at(i, c) > pred.probs.at(i, class_id)) class_id = c;
  return {class_id, pred.probs.at(i, class_id)};
}

}  // namespace

std::vector<int64_t> kept_query_indices(const SetPredictions& pred, double tau_infer,
                                        MatchingMode mode) {
  std::vector<int64_t> out;
  const int64_t q = static_cast<int64_t>(pred.C) * pred.N0;
  for (int64_t i = 0; i < q; ++i)
    if (slot_label(pred, i, mode).second >= tau_infer) out.push_back(i);
  return out;
}

std::vector<DetectionRecord> filter_events(const SetPredictions& pred, double tau_infer,
                                           MatchingMode mode) {
  std::vector<DetectionRecord> out;
  for (int64_t i : kept_query_indices(pred, tau_infer, mode)) {
    const auto [class_id, score] = slot_label(pred, i, mode);
    out.push_back({pred.start[i], pred.end[i], class_id, score});
  }
  return out;
}

std::vector<DetectionRecord> detect_sequence(const Model& model, const SequenceSample& sample) {
  return filter_events(model.predict(sample), model.config().tau_infer,
                       model.config().matching_mode);
}

std::vector<DetectionRecord> soft_nms(std::vector<DetectionRecord> records, double sigma,
                                      int64_t keep) {
  if (sigma <= 0) throw std::invalid_argument("soft_nms sigma must be positive");
  std::vector<DetectionRecord> out;
  while (!records.empty() && static_cast<int64_t>(out.size()) < keep) {
    size_t best = 0;
    for (size_t i = 1; i < records.size(); ++i)
      if (records[i].score > records[best].score) best = i;
    const DetectionRecord sel = records[best];
    records.erase(records.begin() + static_cast<ptrdiff_t>(best));
    for (auto& r : records) {
      const double o = tiou(sel.start, sel.end, r.start, r.end);
      r.score *= std::exp(-(o * o) / sigma);
    }
    out.push_back(sel);
  }
  return out;
}

std::vector<Segment> tag_group(const std::vector<double>& frame_probs, double gamma,
                               double tau_union) {
  const int64_t T = static_cast<int64_t>(frame_probs.size());
  auto above = [&](int64_t t) { return frame_probs[t] >= gamma; };

  std::vector<Segment> expanded;
  int64_t t = 0;
  while (t < T) {
    if (!above(t)) {
      ++t;
      continue;
    }
    int64_t s = t;
    while (t < T && above(t)) ++t;
    Segment seg{s, t};

    auto fraction_ok = [&](int64_t a, int64_t b) {
      int64_t n = 0;
      for (int64_t i = a; i < b; ++i)
        if (above(i)) ++n;
      return static_cast<double>(n) / static_cast<double>(b - a) >= tau_union;
    };
    bool grew = true;
    while (grew) {
      grew = false;
      const bool has_left = seg.start > 0;
      const bool has_right = seg.end < T;
      // Higher-probability neighbor first; ties fall to the left.
      std::vector<int> order;
      if (has_left && has_right)
        order = frame_probs[seg.start - 1] >= frame_probs[seg.end] ? std::vector<int>{0, 1}
                                                                   : std::vector<int>{1, 0};
      else if (has_left)
        order = {0};
      else if (has_right)
        order = {1};
      for (int side : order) {
        if (side == 0 && fraction_ok(seg.start - 1, seg.end)) {
          --seg.start;
          grew = true;
          break;
        }
        if (side == 1 && fraction_ok(seg.start, seg.end + 1)) {
          ++seg.end;
          grew = true;
          break;
        }
      }
    }
    expanded.push_back(seg);
  }

  std::sort(expanded.begin(), expanded.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  std::vector<Segment> merged;
  for (const auto& seg : expanded) {
    if (!merged.empty() && seg.start < merged.back().end)
      merged.back().end = std::max(merged.back().end, seg.end);
    else
      merged.push_back(seg);
  }
  return merged;
}

std::vector<DetectionRecord> frame2event(const Tensor& frame_probs, int64_t keep_per_class,
                                         double nms_sigma) {
  const int64_t T = frame_probs.rows();
  const int64_t C = frame_probs.cols();
  std::vector<DetectionRecord> all;
  std::vector<double> col(T);
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t t = 0; t < T; ++t) col[t] = frame_probs.at(t, c);
    std::set<std::pair<int64_t, int64_t>> segments;
    for (int gi = 0; gi < kGridN; ++gi)
      for (int ti = 0; ti < kGridN; ++ti) {
        const double gamma = kGridLo + kGridStep * gi;
        const double tau = kGridLo + kGridStep * ti;
        for (const auto& seg : tag_group(col, gamma, tau)) segments.insert({seg.start, seg.end});
      }
    std::vector<DetectionRecord> cand;
    for (const auto& [s, e] : segments)
      cand.push_back({static_cast<double>(s), static_cast<double>(e), static_cast<int>(c) + 1,
                      mean_prob(frame_probs, s, e, c)});
    auto kept = soft_nms(std::move(cand), nms_sigma, keep_per_class);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  return all;
}

ScoreMaps build_score_maps(const Tensor& frame_probs) {
  const int64_t T = frame_probs.rows();
  const int64_t C = frame_probs.cols();
  ScoreMaps maps;
  maps.frame_probs = frame_probs;
  maps.p_start = Tensor::zeros({T, C});
  maps.p_end = Tensor::zeros({T, C});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < T; ++t) {
      const double prev = t > 0 ? frame_probs.at(t - 1, c) : 0.0;
      const double next = t + 1 < T ? frame_probs.at(t + 1, c) : 0.0;
      maps.p_start.at(t, c) = std::max(0.0, frame_probs.at(t, c) - prev);
      maps.p_end.at(t, c) = std::max(0.0, frame_probs.at(t, c) - next);
    }
  return maps;
}

std::vector<DetectionRecord> unit2event_decode(const ScoreMaps& maps, int64_t keep_per_class,
                                               double nms_sigma) {
  const int64_t T = maps.frame_probs.rows();
  const int64_t C = maps.frame_probs.cols();
  std::vector<DetectionRecord> all;
  for (int64_t c = 0; c < C; ++c) {
    std::vector<DetectionRecord> cand;
    for (int64_t s = 0; s < T; ++s) {
      if (maps.p_start.at(s, c) == 0) continue;
      for (int64_t e = s + 1; e < T; ++e) {
        if (maps.p_end.at(e, c) == 0) continue;
        const double score =
            maps.p_start.at(s, c) * maps.p_end.at(e, c) * mean_prob(maps.frame_probs, s, e + 1, c);
        if (score <= 0) continue;
        cand.push_back({static_cast<double>(s), static_cast<double>(e + 1),
                        static_cast<int>(c) + 1, score});
      }
    }
    auto kept = soft_nms(std::move(cand), nms_sigma, keep_per_class);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  return all;
}

FrameHead::FrameHead(int64_t F, int64_t d, int C, uint64_t seed) : F_(F), d_(d), C_(C) {
  if (F < 1 || d < 1 || C < 1) throw std::invalid_argument("FrameHead dims must be positive");
  auto init_linear = [&](const std::string& name, int64_t fan_in, int64_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    CounterRng rw(CounterRng::mix(seed, 0xF8A3, params_.size()));
    for (auto& x : w.v) x = rw.uniform(-bound, bound);
    params_.add(name + ".w", w);
    Tensor b = Tensor::zeros({1, fan_out});
    CounterRng rb(CounterRng::mix(seed, 0xF8A3, params_.size()));
    for (auto& x : b.v) x = rb.uniform(-bound, bound);
    params_.add(name + ".b", b);
  };
  init_linear("l1", F_, d_);
  init_linear("l2", d_, C_);
}

Tensor FrameHead::frame_probs(const Tensor& features) const {
  if (features.cols() != F_) throw std::invalid_argument("feature width mismatch");
  Graph g;
  const Value x = g.input(features);
  const Value h = g.relu(g.linear(x, g.param(&params_.get("l1.w")), g.param(&params_.get("l1.b"))));
  const Value p = g.sigmoid(g.linear(h, g.param(&params_.get("l2.w")), g.param(&params_.get("l2.b"))));
  return g.value(p);
}

Tensor FrameHead::frame_labels(const SequenceSample& sample, int C) {
  Tensor y = Tensor::zeros({sample.T, static_cast<int64_t>(C)});
  for (const auto& ev : sample.events)
    for (int64_t t = 0; t < sample.T; ++t)
      if (ev.start <= static_cast<double>(t) && static_cast<double>(t) < ev.end)
        y.at(t, ev.class_id - 1) = 1.0;
  return y;
}

double FrameHead::train_epoch(const std::vector<SequenceSample>& samples, OptimState& state) {
  double loss_sum = 0;
  int64_t frames = 0;
  for (const auto& s : samples) {
    Graph g;
    std::vector<Value> pv;
    for (const auto& [name, t] : params_.items()) pv.push_back(g.param(&t));
    const Value x = g.input(s.features);
    const Value h = g.relu(g.linear(x, pv[0], pv[1]));
    const Value p = g.sigmoid(g.linear(h, pv[2], pv[3]));
    const Value pc = g.min_scalar(g.max_scalar(p, 1e-7), 1.0 - 1e-7);
    const Tensor y = frame_labels(s, C_);
    Tensor ny = y;
    for (auto& v : ny.v) v = 1.0 - v;
    const Value pos = g.mul(g.input(y), g.log(pc));
    const Value neg = g.mul(g.input(ny), g.log(g.add_scalar(g.scale(pc, -1.0), 1.0)));
    const Value loss = g.scale(g.sum(g.add(pos, neg)), -1.0);
    loss_sum += g.value(loss).v[0];
    frames += s.T * C_;
    g.backward(loss);
    std::vector<Tensor> grads;
    for (const Value v : pv) grads.push_back(g.grad(v));
    clip_global_norm(grads, state.opt.clip_norm);
    adamw_update(params_, state, grads);
  }
  return loss_sum / static_cast<double>(frames);
}

}  // namespace evf
