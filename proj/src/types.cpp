#include "eventformer/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace evf {

void RunConfig::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0)) throw std::invalid_argument(std::string(name) + " must be > 0");
  };
  if (C < 1) throw std::invalid_argument("C must be >= 1");
  if (N0 < 1) throw std::invalid_argument("N0 must be >= 1");
  if (d_m < 1) throw std::invalid_argument("d_m must be >= 1");
  if (L < 0) throw std::invalid_argument("L must be >= 0");
  if (heads < 1 || d_m % heads != 0) throw std::invalid_argument("heads must divide d_m");
  if (positional == "concat") {
    if (d_p < 1 || d_p >= d_m) throw std::invalid_argument("concat positional needs 0 < d_p < d_m");
  } else if (positional != "additive") {
    throw std::invalid_argument("positional must be 'concat' or 'additive'");
  }
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("dropout must be in [0,1)");
  positive(lambda_bound, "lambda_bound");
  positive(lambda_valid, "lambda_valid");
  positive(lambda_tiou, "lambda_tiou");
  positive(lambda_l1, "lambda_l1");
  positive(lambda_class, "lambda_class");
  if (!(tau_infer > 0 && tau_infer < 1)) throw std::invalid_argument("tau_infer must be in (0,1)");
  if (no_event_weight < 0) throw std::invalid_argument("no_event_weight must be >= 0");
}

void validate_sample(const SequenceSample& sample, int C) {
  if (sample.features.rank() != 2 || sample.features.rows() != sample.T)
    throw std::invalid_argument("sample " + sample.id + ": features must be T x F");
  for (const auto& ev : sample.events) {
    if (ev.class_id < 1 || ev.class_id > C)
      throw std::invalid_argument("sample " + sample.id + ": class_id out of [1,C]");
    if (!(ev.start >= 0 && ev.start < ev.end && ev.end <= static_cast<double>(sample.T)))
      throw std::invalid_argument("sample " + sample.id + ": event boundaries must satisfy 0 <= s < e <= T");
  }
  // Binary per-frame occurrence labels cannot encode same-class overlap.
  for (size_t i = 0; i < sample.events.size(); ++i)
    for (size_t j = i + 1; j < sample.events.size(); ++j) {
      const auto& a = sample.events[i];
      const auto& b = sample.events[j];
      if (a.class_id != b.class_id) continue;
      if (std::min(a.end, b.end) > std::max(a.start, b.start))
        throw std::invalid_argument("sample " + sample.id + ": overlapping events within class " +
                                    std::to_string(a.class_id));
    }
}

std::vector<PaddedClassSet> split_and_pad(const std::vector<EventSpan>& events, int C, int N0) {
  std::vector<PaddedClassSet> sets(C);
  for (int c = 0; c < C; ++c) {
    sets[c].class_id = c + 1;
    sets[c].entries.reserve(N0);
  }
  for (const auto& ev : events) {
    if (ev.class_id < 1 || ev.class_id > C)
      throw std::invalid_argument("split_and_pad: class_id " + std::to_string(ev.class_id) + " out of [1," +
                                  std::to_string(C) + "]");
    auto& set = sets[ev.class_id - 1];
    if (static_cast<int>(set.entries.size()) >= N0)
      throw std::runtime_error("split_and_pad: class " + std::to_string(ev.class_id) + " has more than N0=" +
                               std::to_string(N0) + " events");
    set.entries.push_back({ev.start, ev.end, 1});
  }
  for (auto& set : sets) set.entries.resize(N0);  // pad with (0,0,v=0)
  return sets;
}

std::vector<EventSpan> merge_valid(const std::vector<PaddedClassSet>& sets) {
  std::vector<EventSpan> events;
  for (const auto& set : sets)
    for (const auto& e : set.entries)
      if (e.valid) events.push_back({e.start, e.end, set.class_id});
  return events;
}

SlidingResult sliding_windows(const Tensor& long_features, const std::vector<EventSpan>& long_events,
                              int64_t T, const std::string& base_id) {
  if (long_features.rank() != 2) throw std::invalid_argument("sliding_windows: features must be 2-d");
  if (T < 2 || T % 2 != 0) throw std::invalid_argument("sliding_windows: T must be even and >= 2");
  SlidingResult out;
  const int64_t t_long = long_features.rows();
  const int64_t f_dim = long_features.cols();
  if (t_long < T) {
    out.warnings.push_back(base_id + ": sequence length " + std::to_string(t_long) +
                           " < window length " + std::to_string(T) + "; no windows emitted");
    return out;
  }
  const int64_t stride = T / 2;
  for (int64_t off = 0; off + T <= t_long; off += stride) {
    SequenceSample win;
    win.id = base_id + "_w" + std::to_string(off / stride);
    win.T = T;
    win.features = Tensor::zeros({T, f_dim});
    std::copy(long_features.v.begin() + off * f_dim, long_features.v.begin() + (off + T) * f_dim,
              win.features.v.begin());
    for (const auto& ev : long_events) {
      const double s = std::max(ev.start, static_cast<double>(off)) - off;
      const double e = std::min(ev.end, static_cast<double>(off + T)) - off;
      if (e > s) win.events.push_back({s, e, ev.class_id});
    }
    out.windows.push_back(std::move(win));
  }
  return out;
}

}  // namespace evf
