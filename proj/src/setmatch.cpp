#include "eventformer/setmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace evf {

namespace {
constexpr double kProbFloor = 1e-7;

void check_segment(double s, double e, const char* who) {
  if (!(s < e))
    throw std::invalid_argument(std::string(who) + ": degenerate segment [" + std::to_string(s) +
                                "," + std::to_string(e) + ")");
}

void check_predictions(const SetPredictions& pred, const RunConfig& cfg) {
  const int64_t q = static_cast<int64_t>(cfg.query_count());
  if (pred.probs.rank() != 2 || pred.probs.rows() != q || pred.probs.cols() != cfg.class_out())
    throw std::invalid_argument("predictions: probs shape " + pred.probs.shape_str() +
                                ", expected (" + std::to_string(q) + "x" +
                                std::to_string(cfg.class_out()) + ")");
  if (static_cast<int64_t>(pred.start.size()) != q || static_cast<int64_t>(pred.end.size()) != q)
    throw std::invalid_argument("predictions: boundary arrays must have C*N0 entries");
}
}  // namespace

double tiou(double s1, double e1, double s2, double e2, bool printed_denominator) {
  check_segment(s1, e1, "tiou");
  check_segment(s2, e2, "tiou");
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double lens = (e1 - s1) + (e2 - s2);
  return inter / (printed_denominator ? lens + inter : lens - inter);
}

double boundary_loss(double gt_s, double gt_e, double pr_s, double pr_e, double lambda_tiou,
                     double lambda_l1, double T, bool printed_denominator) {
  const double t = tiou(gt_s, gt_e, pr_s, pr_e, printed_denominator);
  return lambda_tiou * (1.0 - t) +
         lambda_l1 * (std::abs(gt_s - pr_s) + std::abs(gt_e - pr_e)) / T;
}

Tensor matching_cost_matrix(const PaddedClassSet& gt, const SetPredictions& pred,
                            const RunConfig& cfg, double T) {
  check_predictions(pred, cfg);
  if (cfg.matching_mode != MatchingMode::kClassSpecific)
    throw std::invalid_argument("matching_cost_matrix: per-class form is class_specific only");
  const int n_c = gt.valid_count();
  if (n_c > cfg.N0)
    throw std::runtime_error("matching_cost_matrix: class " + std::to_string(gt.class_id) +
                             " has " + std::to_string(n_c) + " events, capacity N0=" +
                             std::to_string(cfg.N0));
  Tensor cost = Tensor::zeros({n_c, cfg.N0});
  if (n_c == 0) return cost;
  const int base = (gt.class_id - 1) * cfg.N0;
  int row = 0;
  for (const auto& entry : gt.entries) {
    if (!entry.valid) continue;
    for (int j = 0; j < cfg.N0; ++j) {
      const int q = base + j;
      cost.at(row, j) =
          cfg.lambda_bound * boundary_loss(entry.start, entry.end, pred.start[q], pred.end[q],
                                           cfg.lambda_tiou, cfg.lambda_l1, T,
                                           cfg.tiou_printed_denominator) -
          cfg.lambda_valid * pred.probs.at(q, 1);
    }
    ++row;
  }
  return cost;
}

std::vector<int> hungarian(const Tensor& cost) {
  if (cost.rank() != 2) throw std::invalid_argument("hungarian: cost must be rank-2");
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n == 0) return {};
  if (n > m)
    throw std::invalid_argument("hungarian: " + std::to_string(n) + " rows exceed " +
                                std::to_string(m) + " columns");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (!std::isfinite(cost.at(i, j)))
        throw std::invalid_argument("hungarian: non-finite cost at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");

  // Shortest augmenting paths over reduced costs (Jonker-Volgenant style),
  // 1-indexed with a virtual column 0. Scanning columns ascending with strict
  // improvement makes ties land on the smallest column index.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

MatchResult match_all_classes(const std::vector<PaddedClassSet>& gt, const SetPredictions& pred,
                              const RunConfig& cfg, double T) {
  check_predictions(pred, cfg);
  if (static_cast<int>(gt.size()) != cfg.C)
    throw std::invalid_argument("match_all_classes: expected " + std::to_string(cfg.C) +
                                " ground-truth sets, got " + std::to_string(gt.size()));
  MatchResult res;
  res.per_class.resize(cfg.C);

  if (cfg.matching_mode == MatchingMode::kClassSpecific) {
    for (int c = 0; c < cfg.C; ++c) {
      if (gt[c].valid_count() == 0) continue;
      const auto assign = hungarian(matching_cost_matrix(gt[c], pred, cfg, T));
      int row = 0;
      for (int slot = 0; slot < cfg.N0; ++slot) {
        if (!gt[c].entries[slot].valid) continue;
        res.per_class[c].push_back({slot, c * cfg.N0 + assign[row]});
        ++row;
      }
    }
    return res;
  }

  // Class-agnostic: one matrix over every valid ground truth (rows, in
  // (class, slot) order) and every query (columns); the validity reward reads
  // the ground truth's own class probability.
  struct Row {
    int c, slot;
    double s, e;
  };
  std::vector<Row> rows;
  for (int c = 0; c < cfg.C; ++c)
    for (int slot = 0; slot < cfg.N0; ++slot)
      if (gt[c].entries[slot].valid)
        rows.push_back({c, slot, gt[c].entries[slot].start, gt[c].entries[slot].end});
  if (rows.empty()) return res;

  const int q_count = cfg.query_count();
  Tensor cost = Tensor::zeros({static_cast<int64_t>(rows.size()), q_count});
  for (size_t r = 0; r < rows.size(); ++r)
    for (int j = 0; j < q_count; ++j)
      cost.at(r, j) = cfg.lambda_bound * boundary_loss(rows[r].s, rows[r].e, pred.start[j],
                                                       pred.end[j], cfg.lambda_tiou, cfg.lambda_l1,
                                                       T, cfg.tiou_printed_denominator) -
                      cfg.lambda_valid * pred.probs.at(j, rows[r].c + 1);
  const auto assign = hungarian(cost);
  for (size_t r = 0; r < rows.size(); ++r)
    res.per_class[rows[r].c].push_back({rows[r].slot, assign[r]});
  return res;
}

Value build_set_loss(Graph& g, Value probs, Value s_abs, Value e_abs,
                     const std::vector<PaddedClassSet>& gt, const MatchResult& matches,
                     const RunConfig& cfg, double T, LossTerms* terms) {
  const int64_t q_count = cfg.query_count();
  const int64_t k = cfg.class_out();
  const bool agnostic = cfg.matching_mode == MatchingMode::kClassAgnostic;
  if (g.value(probs).rank() != 2 || g.value(probs).rows() != q_count || g.value(probs).cols() != k)
    throw std::invalid_argument("set loss: probs shape " + g.value(probs).shape_str() +
                                ", expected (" + std::to_string(q_count) + "x" + std::to_string(k) +
                                ")");
  if (g.value(s_abs).numel() != q_count || g.value(e_abs).numel() != q_count)
    throw std::invalid_argument("set loss: boundary nodes must hold C*N0 values");
  if (static_cast<int>(gt.size()) != cfg.C || static_cast<int>(matches.per_class.size()) != cfg.C)
    throw std::invalid_argument("set loss: ground truth / matches must cover all C classes");

  // Every query enters the cross-entropy: matched → its target, rest → no-event.
  std::vector<int> target(q_count, 0);
  std::vector<char> matched(q_count, 0);
  std::vector<int64_t> sel;
  std::vector<double> gs, ge;
  for (int c = 0; c < cfg.C; ++c)
    for (const auto& pr : matches.per_class[c]) {
      if (pr.query < 0 || pr.query >= q_count)
        throw std::invalid_argument("set loss: query index out of range");
      if (pr.gt_slot < 0 || pr.gt_slot >= cfg.N0 || !gt[c].entries[pr.gt_slot].valid)
        throw std::invalid_argument("set loss: match references an invalid ground-truth slot");
      if (matched[pr.query]) throw std::invalid_argument("set loss: query matched twice");
      matched[pr.query] = 1;
      target[pr.query] = agnostic ? c + 1 : 1;
      sel.push_back(pr.query);
      gs.push_back(gt[c].entries[pr.gt_slot].start);
      ge.push_back(gt[c].entries[pr.gt_slot].end);
    }
  Tensor mask = Tensor::zeros({q_count, k});
  for (int64_t i = 0; i < q_count; ++i)
    mask.at(i, target[i]) = matched[i] ? 1.0 : cfg.no_event_weight;

  const Value clamped = g.min_scalar(g.max_scalar(probs, kProbFloor), 1.0 - kProbFloor);
  const Value ce = g.scale(g.sum(g.mul(g.input(std::move(mask)), g.log(clamped))),
                           -cfg.lambda_class);

  LossTerms out;
  out.matched = static_cast<int>(sel.size());
  out.classification = g.value(ce).v[0];

  Value total = ce;
  if (!sel.empty()) {
    const int64_t m = static_cast<int64_t>(sel.size());
    const Value sp = g.select_rows(s_abs, sel);
    const Value ep = g.select_rows(e_abs, sel);
    const Value sg = g.input(Tensor({m, 1}, std::vector<real_t>(gs.begin(), gs.end())));
    const Value eg = g.input(Tensor({m, 1}, std::vector<real_t>(ge.begin(), ge.end())));

    const Value inter = g.relu(g.sub(g.minimum(ep, eg), g.maximum(sp, sg)));
    const Value lens = g.add(g.sub(ep, sp), g.sub(eg, sg));
    const Value uni = cfg.tiou_printed_denominator ? g.add(lens, inter) : g.sub(lens, inter);
    const Value tiou_v = g.divide(inter, uni);
    const Value t_sum =
        g.scale(g.sum(g.add_scalar(g.scale(tiou_v, -1.0), 1.0)), cfg.lambda_tiou);
    const Value l1_sum = g.scale(g.sum(g.add(g.abs(g.sub(sg, sp)), g.abs(g.sub(eg, ep)))),
                                 cfg.lambda_l1 / T);
    out.boundary_tiou = g.value(t_sum).v[0];
    out.boundary_l1 = g.value(l1_sum).v[0];
    total = g.add(total, g.add(t_sum, l1_sum));
  }
  out.total = g.value(total).v[0];
  if (terms) *terms = out;
  return total;
}

LossTerms set_prediction_loss(const std::vector<PaddedClassSet>& gt, const SetPredictions& pred,
                              const MatchResult& matches, const RunConfig& cfg, double T) {
  check_predictions(pred, cfg);
  Graph g;
  const int64_t q = static_cast<int64_t>(pred.start.size());
  const Value probs = g.input(pred.probs);
  const Value s_abs = g.input(Tensor({q, 1}, std::vector<real_t>(pred.start.begin(), pred.start.end())));
  const Value e_abs = g.input(Tensor({q, 1}, std::vector<real_t>(pred.end.begin(), pred.end.end())));
  LossTerms terms;
  build_set_loss(g, probs, s_abs, e_abs, gt, matches, cfg, T, &terms);
  return terms;
}

}  // namespace evf
