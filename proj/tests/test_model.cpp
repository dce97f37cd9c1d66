#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "eventformer/model.hpp"
#include "eventformer/params.hpp"
#include "eventformer/rng.hpp"
#include "eventformer/setmatch.hpp"
#include "model_checks.hpp"

using namespace evf;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.C = 2;
  cfg.N0 = 3;
  cfg.d_m = 16;
  cfg.L = 1;
  cfg.heads = 2;
  cfg.d_p = 4;
  cfg.seed = 11;
  return cfg;
}

SequenceSample random_sample(const RunConfig& cfg, int64_t T, int64_t F, uint64_t key) {
  CounterRng rng(key);
  SequenceSample s;
  s.id = "t" + std::to_string(key);
  s.T = T;
  s.features = Tensor::zeros({T, F});
  for (auto& x : s.features.v) x = rng.normal();
  // A couple of non-overlapping events per class.
  for (int c = 1; c <= cfg.C; ++c) {
    s.events.push_back({static_cast<double>(c - 1), static_cast<double>(c + 1), c});
  }
  return s;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void zero_params_matching(Model& m, const std::string& prefix) {
  for (auto& [name, t] : m.params().items()) {
    if (name.rfind(prefix, 0) == 0)
      for (auto& x : t.v) x = 0;
  }
}

}  // namespace

TEST_CASE("positional table matches the sinusoid definition at t=0") {
  const Tensor P = positional_embeddings(8, 6);
  CHECK(P.rows() == 8);
  CHECK(P.cols() == 6);
  for (int k = 0; k < 3; ++k) {
    CHECK(P.at(0, 2 * k) == 0.0);
    CHECK(P.at(0, 2 * k + 1) == 1.0);
  }
  // Spot value: P[t, 2k] = sin(t / 10000^(2k/d_p)).
  CHECK(P.at(3, 0) == doctest::Approx(std::sin(3.0)).epsilon(1e-12));
  CHECK(P.at(5, 2) == doctest::Approx(std::sin(5.0 / std::pow(10000.0, 2.0 / 6.0))).epsilon(1e-12));
  CHECK(P.at(5, 3) == doctest::Approx(std::cos(5.0 / std::pow(10000.0, 2.0 / 6.0))).epsilon(1e-12));
}

TEST_CASE("positional rows are pairwise distinct over a long horizon") {
  const Tensor P = positional_embeddings(256, 8);
  for (int64_t a = 0; a < 256; ++a)
    for (int64_t b = a + 1; b < 256; ++b) {
      double diff = 0;
      for (int64_t k = 0; k < 8; ++k) diff = std::max(diff, std::abs(P.at(a, k) - P.at(b, k)));
      CHECK(diff > 1e-6);
    }
}

TEST_CASE("positional table rejects odd or non-positive widths") {
  CHECK_THROWS_AS(positional_embeddings(8, 3), std::invalid_argument);
  CHECK_THROWS_AS(positional_embeddings(8, 0), std::invalid_argument);
}

TEST_CASE("frame embedding is a per-frame map: permuting rows permutes outputs") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  const auto s = random_sample(cfg, 6, 5, 42);

  Graph g;
  auto p = m.bind(g);
  const Value emb = m.embed_frames(g, p, g.input(s.features));
  const Tensor out = g.value(emb);
  CHECK(out.rows() == 6);
  CHECK(out.cols() == cfg.d_m);

  Tensor perm = Tensor::zeros({6, 5});
  const std::vector<int64_t> order = {3, 1, 5, 0, 2, 4};
  for (int64_t r = 0; r < 6; ++r)
    for (int64_t c = 0; c < 5; ++c) perm.at(r, c) = s.features.at(order[r], c);

  Graph g2;
  auto p2 = m.bind(g2);
  const Tensor out2 = g2.value(m.embed_frames(g2, p2, g2.input(perm)));
  for (int64_t r = 0; r < 6; ++r)
    for (int64_t c = 0; c < cfg.d_m; ++c)
      CHECK(out2.at(r, c) == doctest::Approx(out.at(order[r], c)).epsilon(1e-14));
}

TEST_CASE("zero features with zeroed embedding biases map to zero") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  for (auto& [name, t] : m.params().items())
    if (name == "frame_mlp.l1.b" || name == "frame_mlp.l2.b")
      for (auto& x : t.v) x = 0;
  Graph g;
  auto p = m.bind(g);
  const Tensor out = g.value(m.embed_frames(g, p, g.input(Tensor::zeros({4, 5}))));
  for (double x : out.v) CHECK(x == 0.0);
}

TEST_CASE("encoder with zero layers is the identity") {
  auto cfg = tiny_config();
  cfg.L = 0;
  Model m(cfg, 5);
  const auto s = random_sample(cfg, 7, 5, 9);
  Graph g;
  auto p = m.bind(g);
  Tensor x = Tensor::zeros({7, cfg.d_m});
  CounterRng rng(3);
  for (auto& v : x.v) v = rng.normal();
  const Tensor out = g.value(m.encode_stack(g, p, g.input(x), 7, false, 0));
  for (size_t i = 0; i < x.v.size(); ++i) CHECK(out.v[i] == x.v[i]);
  (void)s;
}

TEST_CASE("gradient of a scalar probe through the encoder matches finite differences") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  Tensor x = Tensor::zeros({5, cfg.d_m});
  CounterRng rng(17);
  for (auto& v : x.v) v = 0.5 * rng.normal();
  const double err = grad_check(
      [&](Graph& g, Value xv) {
        auto p = m.bind(g);
        Value enc = m.encode_stack(g, p, xv, 5, false, 0);
        Tensor w = Tensor::zeros({5, cfg.d_m});
        CounterRng wr(23);
        for (auto& v : w.v) v = wr.normal();
        return g.sum(g.mul(enc, g.input(w)));
      },
      x);
  CHECK(err < 1e-5);
}

TEST_CASE("decoding against a single-frame memory puts all cross-attention on it") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  SequenceSample s = random_sample(cfg, 1, 5, 77);
  s.events = {{0, 1, 1}};
  std::vector<Tensor> attn;
  const auto pred = m.predict(s, &attn);
  CHECK(attn.size() == static_cast<size_t>(cfg.heads));
  for (const auto& head : attn) {
    CHECK(head.rows() == cfg.query_count());
    CHECK(head.cols() == 1);
    for (double w : head.v) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(pred.probs.rows() == cfg.query_count());
}

TEST_CASE("cross-attention rows are probability distributions over frames") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  const auto s = random_sample(cfg, 9, 5, 5);
  std::vector<Tensor> attn;
  (void)m.predict(s, &attn);
  for (const auto& head : attn) {
    CHECK(head.cols() == 9);
    for (int64_t r = 0; r < head.rows(); ++r) {
      double sum = 0;
      for (int64_t c = 0; c < 9; ++c) {
        CHECK(head.at(r, c) >= 0.0);
        sum += head.at(r, c);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("zeroed boundary heads place every span at the horizon midpoint") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  zero_params_matching(m, "head_start");
  zero_params_matching(m, "head_dur");
  const auto s = random_sample(cfg, 64, 5, 13);
  const auto pred = m.predict(s);
  for (int64_t q = 0; q < cfg.query_count(); ++q) {
    CHECK(pred.start[q] == doctest::Approx(32.0).epsilon(1e-12));
    // s + l = 64 exactly hits the min(T, .) clamp boundary.
    CHECK(pred.end[q] == doctest::Approx(64.0).epsilon(1e-12));
  }
}

TEST_CASE("span end saturates at T when start plus duration overshoots") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  zero_params_matching(m, "head_start");
  zero_params_matching(m, "head_dur");
  for (auto& [name, t] : m.params().items()) {
    if (name == "head_start.b") t.v[0] = logit(0.9375);  // s = 60 of 64
    if (name == "head_dur.b") t.v[0] = logit(0.25);      // l = 16
  }
  const auto s = random_sample(cfg, 64, 5, 14);
  const auto pred = m.predict(s);
  for (int64_t q = 0; q < cfg.query_count(); ++q) {
    CHECK(pred.start[q] == doctest::Approx(60.0).epsilon(1e-10));
    CHECK(pred.end[q] == doctest::Approx(64.0).epsilon(1e-10));
  }
}

TEST_CASE("predicted probabilities are rows of a simplex and spans sit inside the horizon") {
  auto cfg = tiny_config();
  cfg.matching_mode = MatchingMode::kClassAgnostic;
  Model m(cfg, 6);
  const auto s = random_sample(cfg, 12, 6, 100);
  const auto pred = m.predict(s);
  CHECK(pred.probs.cols() == cfg.C + 1);
  for (int64_t q = 0; q < cfg.query_count(); ++q) {
    double sum = 0;
    for (int64_t k = 0; k < pred.probs.cols(); ++k) {
      CHECK(pred.probs.at(q, k) >= 0.0);
      sum += pred.probs.at(q, k);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pred.start[q] >= 0.0);
    CHECK(pred.end[q] >= pred.start[q]);
    CHECK(pred.end[q] <= 12.0);
  }
}

TEST_CASE("inference is deterministic even when training dropout is configured") {
  auto cfg = tiny_config();
  cfg.dropout = 0.3;
  Model m(cfg, 5);
  const auto s = random_sample(cfg, 10, 5, 21);
  const auto a = m.predict(s);
  const auto b = m.predict(s);
  for (int64_t q = 0; q < cfg.query_count(); ++q) {
    CHECK(a.start[q] == b.start[q]);
    CHECK(a.end[q] == b.end[q]);
  }
  for (size_t i = 0; i < a.probs.v.size(); ++i) CHECK(a.probs.v[i] == b.probs.v[i]);
}

TEST_CASE("identically configured models are identical; a different seed is not") {
  auto cfg = tiny_config();
  Model a(cfg, 5), b(cfg, 5);
  auto& ia = a.params().items();
  auto& ib = b.params().items();
  REQUIRE(ia.size() == ib.size());
  for (size_t i = 0; i < ia.size(); ++i) {
    CHECK(ia[i].first == ib[i].first);
    CHECK(ia[i].second.v == ib[i].second.v);
  }
  cfg.seed = 12;
  Model c(cfg, 5);
  bool any_diff = false;
  for (size_t i = 0; i < ia.size(); ++i)
    if (ia[i].second.v != c.params().items()[i].second.v) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("batched forward equals per-sample forward") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  const auto s1 = random_sample(cfg, 8, 5, 31);
  const auto s2 = random_sample(cfg, 8, 5, 32);

  Graph g;
  auto p = m.bind(g);
  const auto fwd = m.forward_batch(g, p, {&s1, &s2}, false, 0);
  const Tensor probs = g.value(fwd.probs);
  const Tensor starts = g.value(fwd.s_abs);

  const auto p1 = m.predict(s1);
  const auto p2 = m.predict(s2);
  const int64_t q = cfg.query_count();
  for (int64_t i = 0; i < q; ++i) {
    CHECK(probs.at(i, 1) == doctest::Approx(p1.probs.at(i, 1)).epsilon(1e-12));
    CHECK(probs.at(q + i, 1) == doctest::Approx(p2.probs.at(i, 1)).epsilon(1e-12));
    CHECK(starts.at(i, 0) == doctest::Approx(p1.start[i]).epsilon(1e-12));
    CHECK(starts.at(q + i, 0) == doctest::Approx(p2.start[i]).epsilon(1e-12));
  }
}

TEST_CASE("full-model gradients match central differences on the tiny configuration") {
  auto cfg = tiny_config();
  Model m(cfg, 4);
  // Sample key chosen so no saturated path leaves a coordinate at the
  // finite-difference noise floor.
  const auto s = random_sample(cfg, 8, 4, 74);
  const auto report = model_checks::full_model_grad_check(m, {&s});
  CHECK(report.coords > 1000);
  INFO("worst parameter: ", report.worst_param);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("checkpoints round-trip parameters and predictions exactly") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  const auto s = random_sample(cfg, 10, 5, 61);
  const auto before = m.predict(s);

  const std::string path = "model_roundtrip.evfc";
  save_checkpoint(path, m.to_checkpoint("{\"note\":\"test\"}"));

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config_json == "{\"note\":\"test\"}");
  Model m2(cfg, 5);
  // Scramble, then restore from disk.
  for (auto& [name, t] : m2.params().items())
    for (auto& x : t.v) x += 1.0;
  m2.load_params(ck);
  const auto after = m2.predict(s);
  CHECK(after.probs.v == before.probs.v);
  CHECK(after.start == before.start);
  CHECK(after.end == before.end);

  // Re-saving the loaded state reproduces the file byte for byte.
  const std::string path2 = "model_roundtrip2.evfc";
  save_checkpoint(path2, m2.to_checkpoint("{\"note\":\"test\"}"));
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint loading rejects corruption and missing tensors") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  const std::string path = "model_corrupt.evfc";
  save_checkpoint(path, m.to_checkpoint("{}"));

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(40);
    char byte = 0x5a;
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());

  Checkpoint ck = m.to_checkpoint("{}");
  ck.tensors.erase(ck.tensors.begin());
  Model m2(cfg, 5);
  CHECK_THROWS_AS(m2.load_params(ck), std::runtime_error);

  Checkpoint ck2 = m.to_checkpoint("{}");
  ck2.tensors[0].second = Tensor::zeros({1, 1});
  CHECK_THROWS_AS(m2.load_params(ck2), std::runtime_error);
}

TEST_CASE("extra tensors ride along in checkpoints without disturbing parameters") {
  auto cfg = tiny_config();
  Model m(cfg, 5);
  std::vector<std::pair<std::string, Tensor>> extra;
  extra.emplace_back("opt.step", Tensor::scalar(3));
  const Checkpoint ck = m.to_checkpoint("{}", extra);
  const Tensor* t = ck.find("opt.step");
  REQUIRE(t != nullptr);
  CHECK(t->v[0] == 3.0);
  Model m2(cfg, 5);
  m2.load_params(ck);  // unknown extras are ignored by the model
}
