#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "eventformer/config.hpp"
#include "eventformer/rng.hpp"
#include "eventformer/synthgen.hpp"
#include "eventformer/train.hpp"

using namespace evf;

namespace {

RunConfig tiny_config(uint64_t seed) {
  RunConfig cfg;
  cfg.C = 2;
  cfg.N0 = 3;
  cfg.d_m = 16;
  cfg.L = 1;
  cfg.heads = 2;
  cfg.d_p = 4;
  cfg.seed = seed;
  return cfg;
}

SequenceSample fixed_sample(const RunConfig& cfg, int64_t T, int64_t F, uint64_t key) {
  CounterRng rng(key);
  SequenceSample s;
  s.id = "t";
  s.T = T;
  s.features = Tensor::zeros({T, F});
  for (auto& x : s.features.v) x = rng.normal();
  s.events = {{2, 9, 1}, {12, 20, 1}, {5, 14, 2}};
  for (auto& ev : s.events) {
    ev.start = std::min(ev.start, static_cast<double>(T - 2));
    ev.end = std::min(ev.end, static_cast<double>(T));
  }
  return s;
}

ParamStore single_param(const std::string& name, std::vector<double> vals) {
  ParamStore p;
  Tensor t = Tensor::zeros({1, static_cast<int64_t>(vals.size())});
  t.v = vals;
  p.add(name, t);
  return p;
}

}  // namespace

TEST_CASE("learning-rate and decay policy follow parameter names") {
  OptimConfig opt;
  CHECK(parameter_lr(opt, "frame_mlp.l1.w") == opt.lr_feat);
  CHECK(parameter_lr(opt, "frame_mlp.l2.b") == opt.lr_feat);
  CHECK(parameter_lr(opt, "enc.0.attn.q.w") == opt.lr_main);
  CHECK(parameter_lr(opt, "queries") == opt.lr_main);

  CHECK(!decays("queries"));
  CHECK(!decays("enc.0.ln1.g"));
  CHECK(!decays("enc.0.ln1.b"));
  CHECK(!decays("dec.1.ln3.g"));
  CHECK(decays("enc.0.attn.q.w"));
  CHECK(decays("frame_mlp.l1.b"));
  CHECK(decays("head_class.w"));
}

TEST_CASE("zero gradients move parameters only by the decay term") {
  ParamStore params = single_param("head_class.w", {1.0, -2.0});
  OptimState st;
  st.init(params);
  std::vector<Tensor> grads = {Tensor::zeros({1, 2})};
  adamw_update(params, st, grads);
  const double f = 1.0 - st.opt.lr_main * st.opt.weight_decay;
  CHECK(params.items()[0].second.v[0] == doctest::Approx(1.0 * f).epsilon(1e-15));
  CHECK(params.items()[0].second.v[1] == doctest::Approx(-2.0 * f).epsilon(1e-15));
  CHECK(st.step == 1);

  // No decay for the query embeddings: zero gradient leaves them untouched.
  ParamStore q = single_param("queries", {0.5});
  OptimState st2;
  st2.init(q);
  std::vector<Tensor> g2 = {Tensor::zeros({1, 1})};
  adamw_update(q, st2, g2);
  CHECK(q.items()[0].second.v[0] == 0.5);
}

TEST_CASE("first step with g=0.1 and no decay moves w by one learning rate") {
  ParamStore params = single_param("head_class.w", {1.0});
  OptimState st;
  st.opt.weight_decay = 0;
  st.init(params);
  Tensor g = Tensor::zeros({1, 1});
  g.v[0] = 0.1;
  std::vector<Tensor> grads = {g};
  adamw_update(params, st, grads);
  // Bias correction is exact at step 1, so the update is lr·g/(|g|+eps).
  CHECK(params.items()[0].second.v[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-9));
}

TEST_CASE("beta1=beta2=0 reduces the update to signed gradient scaling") {
  ParamStore params = single_param("head_class.w", {2.0, -1.0, 0.25});
  OptimState st;
  st.opt.beta1 = 0;
  st.opt.beta2 = 0;
  st.opt.weight_decay = 0;
  st.opt.eps = 5.0;
  st.init(params);
  Tensor g = Tensor::zeros({1, 3});
  g.v = {0.3, -0.7, 0.05};
  std::vector<Tensor> grads = {g};
  const std::vector<double> before = params.items()[0].second.v;
  adamw_update(params, st, grads);
  for (int j = 0; j < 3; ++j) {
    const double expect = before[j] - st.opt.lr_main * g.v[j] / (std::abs(g.v[j]) + 5.0);
    CHECK(params.items()[0].second.v[j] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("global-norm clipping rescales exactly at the threshold") {
  std::vector<Tensor> grads = {Tensor::zeros({1, 2})};
  grads[0].v = {3.0, 4.0};
  const double norm = clip_global_norm(grads, 1.0);
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(grads[0].v[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(grads[0].v[1] == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<Tensor> small = {Tensor::zeros({1, 2})};
  small[0].v = {0.3, 0.4};
  CHECK(clip_global_norm(small, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(small[0].v[0] == 0.3);
  CHECK(small[0].v[1] == 0.4);
}

TEST_CASE("a training step updates parameters and reports coherent terms") {
  auto cfg = tiny_config(3);
  Model m(cfg, 5);
  const auto s1 = fixed_sample(cfg, 16, 5, 1);
  const auto s2 = fixed_sample(cfg, 16, 5, 2);
  OptimState st;
  st.init(m.params());

  const auto before = m.params().items()[0].second.v;
  const auto stats = train_step(m, st, {&s1, &s2});
  CHECK(std::isfinite(stats.total));
  CHECK(stats.total == doctest::Approx(stats.boundary_tiou + stats.boundary_l1 +
                                       stats.classification)
                           .epsilon(1e-12));
  CHECK(stats.matched == 6);  // three events per sample, all matched
  CHECK(stats.grad_norm > 0);
  CHECK(m.params().items()[0].second.v != before);
  CHECK(st.step == 1);

  SequenceSample other = s1;
  other.T = 20;
  other.features = Tensor::zeros({20, 5});
  CHECK_THROWS_AS(train_step(m, st, {&s1, &other}), std::invalid_argument);
}

TEST_CASE("one step decreases the batch loss for nearly all initializations") {
  int decreased = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    auto cfg = tiny_config(100 + seed);
    Model m(cfg, 5);
    const auto s = fixed_sample(cfg, 16, 5, 900 + seed);
    OptimState st;
    st.init(m.params());
    const double before = evaluate_loss(m, {&s});
    (void)train_step(m, st, {&s});
    const double after = evaluate_loss(m, {&s});
    if (after < before) ++decreased;
  }
  CHECK(decreased >= 38);
}

TEST_CASE("five hundred steps overfit a single fixed sequence") {
  auto cfg = tiny_config(7);
  Model m(cfg, 6);
  const auto s = fixed_sample(cfg, 32, 6, 44);
  OptimState st;
  st.opt.lr_main = 1e-3;
  st.opt.lr_feat = 1e-4;
  st.init(m.params());
  const double initial = evaluate_loss(m, {&s});
  double last = initial;
  for (int i = 0; i < 500; ++i) last = train_step(m, st, {&s}).total;
  CHECK(last < 0.05 * initial);
}

TEST_CASE("training is bit-deterministic across fresh runs") {
  auto run = [] {
    auto cfg = tiny_config(5);
    cfg.dropout = 0.1;
    Model m(cfg, 5);
    const auto s1 = fixed_sample(cfg, 16, 5, 10);
    const auto s2 = fixed_sample(cfg, 16, 5, 11);
    OptimState st;
    st.init(m.params());
    for (int i = 0; i < 5; ++i) (void)train_step(m, st, {&s1, &s2});
    return m.params().items();
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.v == b[i].second.v);
}

TEST_CASE("optimizer state round-trips through checkpoint extras") {
  auto cfg = tiny_config(9);
  Model m(cfg, 5);
  const auto s = fixed_sample(cfg, 16, 5, 3);
  OptimState st;
  st.init(m.params());
  for (int i = 0; i < 3; ++i) (void)train_step(m, st, {&s});

  const Checkpoint ck = m.to_checkpoint("{}", st.to_tensors(m.params()));

  // Continue the original for three more steps.
  std::vector<double> direct;
  for (int i = 0; i < 3; ++i) direct.push_back(train_step(m, st, {&s}).total);

  // Restore a fresh model and optimizer from the checkpoint and replay.
  Model m2(cfg, 5);
  m2.load_params(ck);
  OptimState st2;
  st2.from_tensors(m2.params(), ck);
  CHECK(st2.step == 3);
  std::vector<double> resumed;
  for (int i = 0; i < 3; ++i) resumed.push_back(train_step(m2, st2, {&s}).total);
  CHECK(direct == resumed);
  for (size_t i = 0; i < m.params().items().size(); ++i)
    CHECK(m.params().items()[i].second.v == m2.params().items()[i].second.v);

  Checkpoint no_opt = m.to_checkpoint("{}");
  OptimState st3;
  CHECK_THROWS_AS(st3.from_tensors(m2.params(), no_opt), std::runtime_error);
}

namespace {

AppConfig loop_config() {
  AppConfig app;
  app.run = tiny_config(3);
  app.generator.C = app.run.C;
  app.generator.T = 16;
  app.generator.F = 4;
  app.generator.min_len = 3;
  app.generator.max_len = 8;
  app.train.epochs = 4;
  app.train.batch_size = 4;
  app.train.checkpoint_every = 2;
  app.train.seed = 21;
  app.optim.lr_main = 1e-3;
  return app;
}

std::vector<SequenceSample> loop_data(const GeneratorConfig& gen, int64_t n, uint64_t seed) {
  std::vector<SequenceSample> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(generate_sequence(gen, seed, i));
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("training runs are deterministic artifact-for-artifact") {
  const AppConfig app = loop_config();
  const auto train_set = loop_data(app.generator, 8, 5);
  const auto val_set = loop_data(app.generator, 2, 6);

  const auto r1 = train(train_set, val_set, app, "train_loop_a");
  const auto r2 = train(train_set, val_set, app, "train_loop_b");
  REQUIRE(r1.history.size() == 4);
  CHECK(file_bytes(r1.final_checkpoint) == file_bytes(r2.final_checkpoint));
  CHECK(file_bytes("train_loop_a/metrics.jsonl") == file_bytes("train_loop_b/metrics.jsonl"));

  // Periodic checkpoint exists at epoch 2 but the last epoch only writes the
  // final artifact.
  CHECK(std::filesystem::exists("train_loop_a/ckpt-epoch002.evfc"));
  CHECK(!std::filesystem::exists("train_loop_a/ckpt-epoch004.evfc"));

  for (const auto& rec : r1.history) {
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.loss > 0);
    CHECK(std::isfinite(rec.grad_norm));
  }
  std::filesystem::remove_all("train_loop_a");
  std::filesystem::remove_all("train_loop_b");
}

TEST_CASE("resume continues bit-identically") {
  const AppConfig app = loop_config();
  const auto train_set = loop_data(app.generator, 8, 5);
  const auto val_set = loop_data(app.generator, 2, 6);

  const auto full = train(train_set, val_set, app, "train_full");
  const auto resumed =
      train(train_set, val_set, app, "train_resumed", "train_full/ckpt-epoch002.evfc");
  CHECK(file_bytes(full.final_checkpoint) == file_bytes(resumed.final_checkpoint));
  REQUIRE(resumed.history.size() == 2);
  CHECK(resumed.history[0].epoch == 3);
  CHECK(resumed.history[0].loss == full.history[2].loss);
  CHECK(resumed.history[1].loss == full.history[3].loss);

  CHECK_THROWS_AS(
      train(train_set, val_set, app, "train_bad", "train_full/does_not_exist.evfc"),
      std::runtime_error);
  std::filesystem::remove_all("train_full");
  std::filesystem::remove_all("train_resumed");
  std::filesystem::remove_all("train_bad");
}

TEST_CASE("checkpoints rebuild a working model") {
  const AppConfig app = loop_config();
  const auto train_set = loop_data(app.generator, 4, 9);
  const auto r = train(train_set, {}, app, "train_rebuild");
  CHECK(std::isnan(r.history[0].val_map50));  // no validation set

  Model fresh = model_from_checkpoint(load_checkpoint(r.final_checkpoint));
  CHECK(fresh.config().d_m == app.run.d_m);
  CHECK(fresh.feature_dim() == 4);
  const auto pred = fresh.predict(train_set[0]);
  CHECK(pred.probs.rows() == app.run.query_count());

  // The metrics log is one self-describing record per line.
  std::ifstream log("train_rebuild/metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    CHECK(line.find("\"epoch\"") != std::string::npos);
    CHECK(line.find("\"val_map50\"") != std::string::npos);
  }
  CHECK(lines == app.train.epochs);
  std::filesystem::remove_all("train_rebuild");
}
