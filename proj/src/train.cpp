#include "eventformer/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "eventformer/config.hpp"
#include "eventformer/decode.hpp"
#include "eventformer/graph.hpp"
#include "eventformer/metrics.hpp"
#include "eventformer/rng.hpp"
#include "eventformer/setmatch.hpp"
#include "json.hpp"

namespace evf {
namespace {

SetPredictions slice_predictions(const RunConfig& cfg, const Tensor& probs, const Tensor& s_abs,
                                 const Tensor& e_abs, int64_t sample) {
  const int64_t q = cfg.query_count();
  SetPredictions p;
  p.C = cfg.C;
  p.N0 = cfg.N0;
  p.probs = Tensor::zeros({q, probs.cols()});
  p.start.resize(q);
  p.end.resize(q);
  for (int64_t i = 0; i < q; ++i) {
    for (int64_t k = 0; k < probs.cols(); ++k) p.probs.at(i, k) = probs.at(sample * q + i, k);
    p.start[i] = s_abs.at(sample * q + i, 0);
    p.end[i] = e_abs.at(sample * q + i, 0);
  }
  return p;
}

}  // namespace

void OptimState::init(const ParamStore& params) {
  m.clear();
  v.clear();
  for (const auto& [name, t] : params.items()) {
    m.push_back(Tensor::zeros(t.shape));
    v.push_back(Tensor::zeros(t.shape));
  }
  step = 0;
}

std::vector<std::pair<std::string, Tensor>> OptimState::to_tensors(const ParamStore& params) const {
  if (m.size() != params.items().size())
    throw std::runtime_error("optimizer state does not match parameter table");
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("opt.step", Tensor::scalar(static_cast<double>(step)));
  for (size_t i = 0; i < m.size(); ++i) {
    out.emplace_back("opt.m." + params.items()[i].first, m[i]);
    out.emplace_back("opt.v." + params.items()[i].first, v[i]);
  }
  return out;
}

void OptimState::from_tensors(const ParamStore& params, const Checkpoint& ck) {
  init(params);
  const Tensor* st = ck.find("opt.step");
  if (st == nullptr) throw std::runtime_error("checkpoint has no optimizer state");
  step = static_cast<int64_t>(st->v[0]);
  for (size_t i = 0; i < params.items().size(); ++i) {
    const std::string& name = params.items()[i].first;
    const Tensor* tm = ck.find("opt.m." + name);
    const Tensor* tv = ck.find("opt.v." + name);
    if (tm == nullptr || tv == nullptr)
      throw std::runtime_error("checkpoint is missing optimizer moments for " + name);
    if (!tm->same_shape(m[i]) || !tv->same_shape(v[i]))
      throw std::runtime_error("optimizer moment shape mismatch for " + name);
    m[i] = *tm;
    v[i] = *tv;
  }
}

double parameter_lr(const OptimConfig& opt, const std::string& name) {
  return name.rfind("frame_mlp.", 0) == 0 ? opt.lr_feat : opt.lr_main;
}

bool decays(const std::string& name) {
  if (name == "queries") return false;
  const auto last = name.rfind('.');
  if (last == std::string::npos) return true;
  const auto prev = name.rfind('.', last - 1);
  const std::string parent = name.substr(prev == std::string::npos ? 0 : prev + 1,
                                         last - (prev == std::string::npos ? 0 : prev + 1));
  return parent.rfind("ln", 0) != 0;
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (double x : g.v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g.v) x *= scale;
  }
  return norm;
}

void adamw_update(ParamStore& params, OptimState& state, std::vector<Tensor>& grads) {
  auto& items = params.items();
  if (grads.size() != items.size() || state.m.size() != items.size())
    throw std::invalid_argument("gradient list does not match parameter table");
  const OptimConfig& opt = state.opt;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < items.size(); ++i) {
    auto& [name, w] = items[i];
    if (!grads[i].same_shape(w))
      throw std::invalid_argument("gradient shape mismatch for " + name);
    const double lr = parameter_lr(opt, name);
    const double wd = decays(name) ? opt.weight_decay : 0.0;
    for (size_t j = 0; j < w.v.size(); ++j) {
      const double g = grads[i].v[j];
      state.m[i].v[j] = opt.beta1 * state.m[i].v[j] + (1.0 - opt.beta1) * g;
      state.v[i].v[j] = opt.beta2 * state.v[i].v[j] + (1.0 - opt.beta2) * g * g;
      const double mh = state.m[i].v[j] / bc1;
      const double vh = state.v[i].v[j] / bc2;
      w.v[j] -= lr * (mh / (std::sqrt(vh) + opt.eps) + wd * w.v[j]);
    }
  }
}

StepStats train_step(Model& model, OptimState& state,
                     const std::vector<const SequenceSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a non-empty batch");
  const int64_t T = batch[0]->T;
  for (const auto* s : batch)
    if (s->T != T) throw std::invalid_argument("all samples in a batch must share T");

  const RunConfig& cfg = model.config();
  Graph g;
  const auto p = model.bind(g);
  const auto fwd = model.forward_batch(g, p, batch, /*train=*/true, state.step);

  const Tensor probs_val = g.value(fwd.probs);
  const Tensor s_val = g.value(fwd.s_abs);
  const Tensor e_val = g.value(fwd.e_abs);

  StepStats stats;
  const int64_t q = cfg.query_count();
  Value total{-1};
  for (size_t b = 0; b < batch.size(); ++b) {
    const auto gt = split_and_pad(batch[b]->events, cfg.C, cfg.N0);
    const auto pred = slice_predictions(cfg, probs_val, s_val, e_val, static_cast<int64_t>(b));
    const auto match = match_all_classes(gt, pred, cfg, static_cast<double>(T));

    const Value probs = batch.size() == 1 ? fwd.probs
                                          : g.slice_rows(fwd.probs, b * q, (b + 1) * q);
    const Value ss = batch.size() == 1 ? fwd.s_abs : g.slice_rows(fwd.s_abs, b * q, (b + 1) * q);
    const Value ee = batch.size() == 1 ? fwd.e_abs : g.slice_rows(fwd.e_abs, b * q, (b + 1) * q);
    LossTerms terms;
    const Value l =
        build_set_loss(g, probs, ss, ee, gt, match, cfg, static_cast<double>(T), &terms);
    stats.boundary_tiou += terms.boundary_tiou;
    stats.boundary_l1 += terms.boundary_l1;
    stats.classification += terms.classification;
    stats.matched += terms.matched;
    total = total.ok() ? g.add(total, l) : l;
  }
  stats.total = g.value(total).v[0];
  if (!std::isfinite(stats.total))
    throw std::runtime_error("non-finite loss " + std::to_string(stats.total) + " at step " +
                             std::to_string(state.step));

  g.backward(total);
  std::vector<Tensor> grads;
  grads.reserve(p.values.size());
  for (const Value pv : p.values) grads.push_back(g.grad(pv));
  stats.grad_norm = clip_global_norm(grads, state.opt.clip_norm);
  adamw_update(model.params(), state, grads);
  return stats;
}

double evaluate_loss(Model& model, const std::vector<const SequenceSample*>& batch) {
  const RunConfig& cfg = model.config();
  double total = 0;
  for (const auto* s : batch) {
    const auto gt = split_and_pad(s->events, cfg.C, cfg.N0);
    const auto pred = model.predict(*s);
    const auto match = match_all_classes(gt, pred, cfg, static_cast<double>(s->T));
    total += set_prediction_loss(gt, pred, match, cfg, static_cast<double>(s->T)).total;
  }
  return total;
}

namespace {

constexpr uint64_t kStreamShuffle = 0x5A;  // keyed (train seed, epoch)

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(CounterRng::mix(seed, kStreamShuffle, static_cast<uint64_t>(epoch)));
  for (size_t i = n; i > 1; --i) {
    const auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::string epoch_record_json(const EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["loss"] = rec.loss;
  j["boundary_tiou"] = rec.boundary_tiou;
  j["boundary_l1"] = rec.boundary_l1;
  j["classification"] = rec.classification;
  j["grad_norm"] = rec.grad_norm;
  j["val_map50"] = rec.val_map50;  // NaN serializes as null
  return j.dump();
}

double validation_map50(Model& model, const std::vector<SequenceSample>& val_set) {
  std::vector<std::vector<EventSpan>> gts;
  std::vector<std::vector<DetectionRecord>> dets;
  gts.reserve(val_set.size());
  dets.reserve(val_set.size());
  for (const auto& s : val_set) {
    gts.push_back(s.events);
    dets.push_back(detect_sequence(model, s));
  }
  EvalOptions eo;
  eo.map_alphas = {0.5};
  eo.an_max = 1;  // AR is not logged during training
  return evaluate_detections(gts, dets, model.config().C, eo).map[0];
}

std::string checkpoint_path(const std::string& out_dir, int epoch) {
  char name[48];
  std::snprintf(name, sizeof(name), "ckpt-epoch%03d.evfc", epoch);
  return out_dir + "/" + name;
}

}  // namespace

TrainResult train(const std::vector<SequenceSample>& train_set,
                  const std::vector<SequenceSample>& val_set, const AppConfig& app,
                  const std::string& out_dir, const std::string& resume_from) {
  const RunConfig& cfg = app.run;
  const TrainConfig& tc = app.train;
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (tc.epochs < 1 || tc.batch_size < 1 || tc.checkpoint_every < 1)
    throw std::invalid_argument("train: epochs, batch_size and checkpoint_every must be positive");
  const auto F = train_set[0].features.cols();
  for (const auto& s : train_set)
    if (s.features.cols() != F) throw std::invalid_argument("train: inconsistent feature width");

  std::filesystem::create_directories(out_dir);
  Model model(cfg, static_cast<int>(F));
  OptimState st;
  st.opt = app.optim;
  st.init(model.params());

  int start_epoch = 0;
  if (!resume_from.empty()) {
    const auto ck = load_checkpoint(resume_from);
    model.load_params(ck);
    st.from_tensors(model.params(), ck);
    const Tensor* ep = ck.find("train.epoch");
    if (!ep) throw std::runtime_error("train: checkpoint lacks train.epoch, cannot resume");
    start_epoch = static_cast<int>(ep->v.at(0));
  }

  const std::string echo = checkpoint_config_json(app, static_cast<int>(F));
  std::ofstream log(out_dir + "/metrics.jsonl",
                    start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write " + out_dir + "/metrics.jsonl");

  auto save = [&](const std::string& path, int epoch) {
    auto extras = st.to_tensors(model.params());
    Tensor ep = Tensor::zeros({1});
    ep.v[0] = static_cast<double>(epoch);
    extras.emplace_back("train.epoch", ep);
    save_checkpoint(path, model.to_checkpoint(echo, extras));
  };

  TrainResult result;
  for (int e = start_epoch; e < tc.epochs; ++e) {
    const auto order = epoch_order(train_set.size(), tc.seed, e);
    EpochRecord rec;
    rec.epoch = e + 1;
    int64_t steps = 0;
    size_t i = 0;
    while (i < order.size()) {
      std::vector<const SequenceSample*> batch{&train_set[order[i]]};
      ++i;
      while (i < order.size() && batch.size() < static_cast<size_t>(tc.batch_size) &&
             train_set[order[i]].T == batch[0]->T) {
        batch.push_back(&train_set[order[i]]);
        ++i;
      }
      const auto ss = train_step(model, st, batch);
      rec.loss += ss.total;
      rec.boundary_tiou += ss.boundary_tiou;
      rec.boundary_l1 += ss.boundary_l1;
      rec.classification += ss.classification;
      rec.grad_norm += ss.grad_norm;
      ++steps;
    }
    const auto n = static_cast<double>(train_set.size());
    rec.loss /= n;
    rec.boundary_tiou /= n;
    rec.boundary_l1 /= n;
    rec.classification /= n;
    rec.grad_norm /= static_cast<double>(steps);
    rec.val_map50 = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : validation_map50(model, val_set);
    result.history.push_back(rec);
    log << epoch_record_json(rec) << "\n";
    log.flush();
    if ((e + 1) % tc.checkpoint_every == 0 && e + 1 != tc.epochs)
      save(checkpoint_path(out_dir, e + 1), e + 1);
  }
  result.final_checkpoint = out_dir + "/model-final.evfc";
  save(result.final_checkpoint, tc.epochs);
  return result;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  const auto cc = checkpoint_config_from_json(ck.config_json);
  Model model(cc.app.run, cc.feature_dim);
  model.load_params(ck);
  return model;
}

}  // namespace evf
