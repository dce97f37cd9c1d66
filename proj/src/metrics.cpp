#include "eventformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "eventformer/setmatch.hpp"
#include "json.hpp"

namespace evf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool score_sorted(const std::vector<DetectionRecord>& dets) {
  for (size_t i = 1; i < dets.size(); ++i)
    if (dets[i].score > dets[i - 1].score) return false;
  return true;
}

// Greedy matching in the given (score) order. class_aware restricts a
// detection to ground truth of its own class.
std::vector<int> greedy_flags(const std::vector<EventSpan>& gts,
                              const std::vector<DetectionRecord>& dets, double alpha,
                              bool class_aware) {
  std::vector<int> flags(dets.size(), 0);
  std::vector<char> used(gts.size(), 0);
  for (size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_t = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      if (class_aware && gts[g].class_id != dets[d].class_id) continue;
      const double t = tiou(dets[d].start, dets[d].end, gts[g].start, gts[g].end);
      if (t > best_t) {
        best_t = t;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_t >= alpha) {
      used[best] = 1;
      flags[d] = 1;
    }
  }
  return flags;
}

struct PooledDet {
  double score;
  double start;
  int flag;
};

void check_classes(const std::vector<std::vector<EventSpan>>& gts,
                   const std::vector<std::vector<DetectionRecord>>& dets, int C) {
  for (const auto& seq : gts)
    for (const auto& e : seq)
      if (e.class_id < 1 || e.class_id > C)
        throw std::out_of_range("evaluate_detections: ground-truth class out of range");
  for (const auto& seq : dets)
    for (const auto& d : seq)
      if (d.class_id < 1 || d.class_id > C)
        throw std::out_of_range("evaluate_detections: detection class out of range");
}

double mean_ignoring_none(const std::vector<double>& v) {
  double sum = 0;
  int n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  return n ? sum / n : kNaN;
}

}  // namespace

void sort_detections(std::vector<DetectionRecord>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.start < b.start;
  });
}

std::vector<int> match_detections(const std::vector<EventSpan>& gts,
                                  const std::vector<DetectionRecord>& dets, double alpha) {
  if (!score_sorted(dets))
    throw std::invalid_argument("match_detections: detections must be sorted by descending score");
  return greedy_flags(gts, dets, alpha, /*class_aware=*/false);
}

double average_precision(const std::vector<int>& flags, int64_t gt_count) {
  if (gt_count <= 0) throw std::invalid_argument("average_precision: no ground-truth positives");
  const size_t n = flags.size();
  if (n == 0) return 0.0;
  std::vector<double> recall(n), precision(n);
  double tp = 0, fp = 0;
  for (size_t i = 0; i < n; ++i) {
    (flags[i] ? tp : fp) += 1;
    recall[i] = tp / static_cast<double>(gt_count);
    precision[i] = tp / (tp + fp);
  }
  // Raise each precision to the best achievable at any recall >= its own,
  // then integrate over the recall steps.
  for (size_t i = n - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0, prev = 0;
  for (size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

EvalReport evaluate_detections(const std::vector<std::vector<EventSpan>>& gts,
                               const std::vector<std::vector<DetectionRecord>>& dets, int C,
                               const EvalOptions& opt) {
  if (gts.size() != dets.size())
    throw std::invalid_argument("evaluate_detections: sequence count mismatch");
  if (C < 1) throw std::invalid_argument("evaluate_detections: C must be positive");
  if (opt.an_max < 1) throw std::invalid_argument("evaluate_detections: an_max must be positive");
  if (opt.class_agnostic_recall && opt.ar_per_class)
    throw std::invalid_argument(
        "evaluate_detections: class_agnostic_recall cannot be combined with ar_per_class");
  check_classes(gts, dets, C);

  const size_t S = gts.size();
  EvalReport rep;
  rep.map_alphas = opt.map_alphas;
  rep.ar_alphas = opt.ar_alphas;

  // Per-sequence, per-class splits with deterministic ordering.
  std::vector<std::vector<std::vector<EventSpan>>> gt_by_class(S);
  std::vector<std::vector<std::vector<DetectionRecord>>> det_by_class(S);
  std::vector<int64_t> class_gt_count(C, 0);
  for (size_t s = 0; s < S; ++s) {
    gt_by_class[s].resize(C);
    det_by_class[s].resize(C);
    for (const auto& e : gts[s]) {
      gt_by_class[s][e.class_id - 1].push_back(e);
      ++class_gt_count[e.class_id - 1];
    }
    for (const auto& d : dets[s]) det_by_class[s][d.class_id - 1].push_back(d);
    for (auto& v : det_by_class[s]) sort_detections(v);
  }

  // AP: match within each sequence, pool the flagged scores per class.
  rep.per_class_ap.assign(opt.map_alphas.size(), std::vector<double>(C, kNaN));
  rep.map.assign(opt.map_alphas.size(), kNaN);
  for (size_t ai = 0; ai < opt.map_alphas.size(); ++ai) {
    const double alpha = opt.map_alphas[ai];
    for (int c = 0; c < C; ++c) {
      if (class_gt_count[c] == 0) continue;
      std::vector<PooledDet> pool;
      for (size_t s = 0; s < S; ++s) {
        const auto flags = greedy_flags(gt_by_class[s][c], det_by_class[s][c], alpha, false);
        for (size_t d = 0; d < flags.size(); ++d)
          pool.push_back({det_by_class[s][c][d].score, det_by_class[s][c][d].start, flags[d]});
      }
      std::stable_sort(pool.begin(), pool.end(), [](const PooledDet& a, const PooledDet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.start < b.start;
      });
      std::vector<int> flags(pool.size());
      for (size_t i = 0; i < pool.size(); ++i) flags[i] = pool[i].flag;
      rep.per_class_ap[ai][c] = 100.0 * average_precision(flags, class_gt_count[c]);
    }
    rep.map[ai] = mean_ignoring_none(rep.per_class_ap[ai]);
  }

  // AR@AN: per-sequence top-AN truncation. Greedy matching is sequential in
  // score order, so one pass yields the matched count at every prefix.
  const int AN = opt.an_max;
  std::vector<double> ar(AN, 0.0);
  int64_t seq_used = 0;
  for (size_t s = 0; s < S; ++s) {
    const auto G = static_cast<double>(gts[s].size());
    if (gts[s].empty()) continue;  // recall undefined without ground truth
    ++seq_used;
    if (!opt.ar_per_class) {
      auto sorted = dets[s];
      sort_detections(sorted);
      const auto K = static_cast<int64_t>(sorted.size());
      for (double alpha : opt.ar_alphas) {
        const auto flags = greedy_flags(gts[s], sorted, alpha, !opt.class_agnostic_recall);
        std::vector<int64_t> cum(K + 1, 0);
        for (int64_t k = 0; k < K; ++k) cum[k + 1] = cum[k] + flags[k];
        for (int n = 1; n <= AN; ++n) ar[n - 1] += cum[std::min<int64_t>(n, K)] / G;
      }
    } else {
      for (double alpha : opt.ar_alphas) {
        std::vector<std::vector<int64_t>> cum(C);
        for (int c = 0; c < C; ++c) {
          const auto& dc = det_by_class[s][c];
          const auto flags = greedy_flags(gt_by_class[s][c], dc, alpha, false);
          cum[c].assign(dc.size() + 1, 0);
          for (size_t k = 0; k < dc.size(); ++k) cum[c][k + 1] = cum[c][k] + flags[k];
        }
        for (int n = 1; n <= AN; ++n) {
          int64_t matched = 0;
          for (int c = 0; c < C; ++c)
            matched += cum[c][std::min<size_t>(n, cum[c].size() - 1)];
          ar[n - 1] += matched / G;
        }
      }
    }
  }
  rep.ar_at_an.assign(AN, kNaN);
  if (seq_used > 0)
    for (int n = 0; n < AN; ++n)
      rep.ar_at_an[n] = 100.0 * ar[n] / (seq_used * opt.ar_alphas.size());
  rep.auc = mean_ignoring_none(rep.ar_at_an);
  if (seq_used == 0) rep.auc = kNaN;
  return rep;
}

std::string report_table(const EvalReport& report, const std::string& label) {
  std::vector<std::string> headers;
  std::vector<double> values;
  char buf[64];
  for (size_t a = 0; a < report.map_alphas.size(); ++a) {
    std::snprintf(buf, sizeof(buf), "mAP@%.1f", report.map_alphas[a]);
    headers.emplace_back(buf);
    values.push_back(report.map[a]);
  }
  for (int an : {10, 50, 100}) {
    if (an > static_cast<int>(report.ar_at_an.size())) continue;
    std::snprintf(buf, sizeof(buf), "AR@%d", an);
    headers.emplace_back(buf);
    values.push_back(report.ar_at_an[an - 1]);
  }
  headers.emplace_back("AUC");
  values.push_back(report.auc);

  std::ostringstream out;
  const size_t name_w = std::max<size_t>(label.size(), 6);
  out << std::string(name_w, ' ');
  for (const auto& h : headers) {
    std::snprintf(buf, sizeof(buf), "  %8s", h.c_str());
    out << buf;
  }
  out << "\n" << label << std::string(name_w - label.size(), ' ');
  for (double v : values) {
    if (std::isnan(v))
      std::snprintf(buf, sizeof(buf), "  %8s", "--");
    else
      std::snprintf(buf, sizeof(buf), "  %8.2f", v);
    out << buf;
  }
  out << "\n";
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "evf-eval";
  j["version"] = 1;
  j["map_alphas"] = report.map_alphas;
  j["per_class_ap"] = report.per_class_ap;
  j["map"] = report.map;
  j["ar_alphas"] = report.ar_alphas;
  j["ar_at_an"] = report.ar_at_an;
  j["auc"] = report.auc;
  return j.dump(2) + "\n";
}

namespace {

// nlohmann renders NaN as null; read it back as NaN.
double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

std::vector<double> number_list(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number_or_nan(x));
  return out;
}

}  // namespace

EvalReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "evf-eval")
    throw std::runtime_error("report_from_json: not an evf-eval document");
  EvalReport rep;
  rep.map_alphas = j.at("map_alphas").get<std::vector<double>>();
  for (const auto& row : j.at("per_class_ap")) rep.per_class_ap.push_back(number_list(row));
  rep.map = number_list(j.at("map"));
  rep.ar_alphas = j.at("ar_alphas").get<std::vector<double>>();
  rep.ar_at_an = number_list(j.at("ar_at_an"));
  rep.auc = number_or_nan(j.at("auc"));
  return rep;
}

}  // namespace evf
