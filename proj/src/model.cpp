#include "eventformer/model.hpp"

#include <cmath>
#include <stdexcept>

#include "eventformer/rng.hpp"

namespace evf {

namespace {
constexpr uint64_t kInitStream = 0x13EF;
}

Tensor positional_embeddings(int64_t T, int d_p) {
  if (d_p < 2 || d_p % 2 != 0)
    throw std::invalid_argument("positional_embeddings: d_p must be even and >= 2");
  Tensor p = Tensor::zeros({T, d_p});
  for (int64_t t = 0; t < T; ++t)
    for (int k = 0; 2 * k < d_p; ++k) {
      const double denom = std::pow(10000.0, 2.0 * k / d_p);
      p.at(t, 2 * k) = std::sin(t / denom);
      p.at(t, 2 * k + 1) = std::cos(t / denom);
    }
  return p;
}

Value BoundParams::operator[](const std::string& name) const {
  return values[store->index_of(name)];
}

Model::Model(RunConfig cfg, int feature_dim) : cfg_(std::move(cfg)), feat_dim_(feature_dim) {
  cfg_.validate();
  if (feat_dim_ < 1) throw std::invalid_argument("model: feature_dim must be >= 1");
  const bool additive = cfg_.positional == "additive";
  if (additive && cfg_.d_m % 2 != 0)
    throw std::invalid_argument("model: additive positional embeddings need even d_m");

  // Registration order is the initialization and checkpoint order.
  auto add_linear = [&](const std::string& name, int64_t in, int64_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    CounterRng wr(CounterRng::mix(cfg_.seed, kInitStream, params_.size()));
    Tensor w = Tensor::zeros({in, out});
    for (auto& x : w.v) x = wr.uniform(-bound, bound);
    params_.add(name + ".w", std::move(w));
    CounterRng br(CounterRng::mix(cfg_.seed, kInitStream, params_.size()));
    Tensor b = Tensor::zeros({1, out});
    for (auto& x : b.v) x = br.uniform(-bound, bound);
    params_.add(name + ".b", std::move(b));
  };
  auto add_ln = [&](const std::string& name) {
    params_.add(name + ".g", Tensor::full({1, cfg_.d_m}, 1.0));
    params_.add(name + ".b", Tensor::zeros({1, cfg_.d_m}));
  };
  auto add_attention = [&](const std::string& name) {
    add_linear(name + ".q", cfg_.d_m, cfg_.d_m);
    add_linear(name + ".k", cfg_.d_m, cfg_.d_m);
    add_linear(name + ".v", cfg_.d_m, cfg_.d_m);
    add_linear(name + ".o", cfg_.d_m, cfg_.d_m);
  };

  add_linear("frame_mlp.l1", feat_dim_, cfg_.d_m);
  add_linear("frame_mlp.l2", cfg_.d_m, cfg_.d_m);
  if (!additive) add_linear("proj_in", cfg_.d_m + cfg_.d_p, cfg_.d_m);
  for (int l = 0; l < cfg_.L; ++l) {
    const std::string e = "enc." + std::to_string(l);
    add_ln(e + ".ln1");
    add_attention(e + ".attn");
    add_ln(e + ".ln2");
    add_linear(e + ".ffn.l1", cfg_.d_m, 4 * cfg_.d_m);
    add_linear(e + ".ffn.l2", 4 * cfg_.d_m, cfg_.d_m);
  }
  for (int l = 0; l < cfg_.L; ++l) {
    const std::string d = "dec." + std::to_string(l);
    add_ln(d + ".ln1");
    add_attention(d + ".self");
    add_ln(d + ".ln2");
    add_attention(d + ".cross");
    add_ln(d + ".ln3");
    add_linear(d + ".ffn.l1", cfg_.d_m, 4 * cfg_.d_m);
    add_linear(d + ".ffn.l2", 4 * cfg_.d_m, cfg_.d_m);
  }
  {
    CounterRng qr(CounterRng::mix(cfg_.seed, kInitStream, params_.size()));
    Tensor q = Tensor::zeros({static_cast<int64_t>(cfg_.query_count()), cfg_.d_m});
    for (auto& x : q.v) x = 0.02 * qr.normal();
    params_.add("queries", std::move(q));
  }
  add_linear("head_class", cfg_.d_m, cfg_.class_out());
  add_linear("head_start", cfg_.d_m, 1);
  add_linear("head_dur", cfg_.d_m, 1);
}

BoundParams Model::bind(Graph& g) const {
  BoundParams p;
  p.store = &params_;
  p.values.reserve(params_.size());
  for (const auto& [name, t] : params_.items()) p.values.push_back(g.param(&t));
  return p;
}

uint64_t Model::drop_key(const Graph& g, uint64_t step) const {
  return CounterRng::mix(cfg_.seed, step, g.size());
}

void Model::check_finite(const Graph& g, Value v, const std::string& where) const {
  if (!g.value(v).all_finite())
    throw std::runtime_error(where + " produced non-finite activations");
}

Value Model::embed_frames(Graph& g, const BoundParams& p, Value features) const {
  if (g.value(features).cols() != feat_dim_)
    throw std::invalid_argument("embed_frames: feature width " +
                                std::to_string(g.value(features).cols()) + ", expected " +
                                std::to_string(feat_dim_));
  const Value h = g.relu(g.linear(features, p["frame_mlp.l1.w"], p["frame_mlp.l1.b"]));
  return g.linear(h, p["frame_mlp.l2.w"], p["frame_mlp.l2.b"]);
}

Value Model::apply_positional(Graph& g, const BoundParams& p, Value emb, int64_t block_rows) const {
  const int64_t total = g.value(emb).rows();
  if (block_rows < 1 || total % block_rows != 0)
    throw std::invalid_argument("apply_positional: rows not a multiple of the block length");
  const int64_t blocks = total / block_rows;
  const bool additive = cfg_.positional == "additive";
  Tensor table = positional_embeddings(block_rows, additive ? cfg_.d_m : cfg_.d_p);
  Tensor tiled = Tensor::zeros({total, table.cols()});
  for (int64_t b = 0; b < blocks; ++b)
    std::copy(table.v.begin(), table.v.end(), tiled.v.begin() + b * table.numel());
  const Value pos = g.input(std::move(tiled));
  if (additive) return g.add(emb, pos);
  return g.linear(g.concat_cols({emb, pos}), p["proj_in.w"], p["proj_in.b"]);
}

Value Model::attention_block(Graph& g, const BoundParams& p, const std::string& prefix,
                             Value q_src, Value kv_src, int64_t q_rows, int64_t kv_rows,
                             bool train, uint64_t step,
                             std::vector<std::vector<Value>>* attn_out) const {
  const Value q = g.linear(q_src, p[prefix + ".q.w"], p[prefix + ".q.b"]);
  const Value k = g.linear(kv_src, p[prefix + ".k.w"], p[prefix + ".k.b"]);
  const Value v = g.linear(kv_src, p[prefix + ".v.w"], p[prefix + ".v.b"]);
  if (g.value(q).rows() % q_rows != 0)
    throw std::invalid_argument(prefix + ": rows not a multiple of the block length");
  const int64_t blocks = g.value(q).rows() / q_rows;
  if (g.value(k).rows() != blocks * kv_rows)
    throw std::invalid_argument(prefix + ": query/key block structures disagree");
  const Value wo = p[prefix + ".o.w"];
  const Value bo = p[prefix + ".o.b"];
  std::vector<Value> outs;
  outs.reserve(blocks);
  for (int64_t b = 0; b < blocks; ++b) {
    const Value qb = blocks == 1 ? q : g.slice_rows(q, b * q_rows, (b + 1) * q_rows);
    const Value kb = blocks == 1 ? k : g.slice_rows(k, b * kv_rows, (b + 1) * kv_rows);
    const Value vb = blocks == 1 ? v : g.slice_rows(v, b * kv_rows, (b + 1) * kv_rows);
    std::vector<Value> weights;
    const Value ob = g.multi_head_attention(qb, kb, vb, cfg_.heads, wo, bo,
                                            attn_out ? &weights : nullptr);
    if (attn_out) attn_out->push_back(std::move(weights));
    outs.push_back(ob);
  }
  const Value out = blocks == 1 ? outs[0] : g.concat_rows(outs);
  return g.dropout(out, cfg_.dropout, train, drop_key(g, step));
}

Value Model::ffn_block(Graph& g, const BoundParams& p, const std::string& prefix, Value x,
                       bool train, uint64_t step) const {
  const Value h = g.relu(g.linear(x, p[prefix + ".l1.w"], p[prefix + ".l1.b"]));
  const Value out = g.linear(h, p[prefix + ".l2.w"], p[prefix + ".l2.b"]);
  return g.dropout(out, cfg_.dropout, train, drop_key(g, step));
}

Value Model::encode_stack(Graph& g, const BoundParams& p, Value x, int64_t block_rows, bool train,
                          uint64_t step) const {
  auto ln = [&](const std::string& name, Value v) {
    return g.add_row(g.mul_row(g.layer_norm_rows(v), p[name + ".g"]), p[name + ".b"]);
  };
  for (int l = 0; l < cfg_.L; ++l) {
    const std::string e = "enc." + std::to_string(l);
    const Value n1 = ln(e + ".ln1", x);
    x = g.add(x, attention_block(g, p, e + ".attn", n1, n1, block_rows, block_rows, train, step,
                                 nullptr));
    x = g.add(x, ffn_block(g, p, e + ".ffn", ln(e + ".ln2", x), train, step));
    check_finite(g, x, "encoder layer " + std::to_string(l));
  }
  return x;
}

Value Model::decode_stack(Graph& g, const BoundParams& p, Value dec_in, Value memory,
                          int64_t query_rows, int64_t memory_rows, bool train, uint64_t step,
                          std::vector<std::vector<Value>>* final_cross_attn) const {
  auto ln = [&](const std::string& name, Value v) {
    return g.add_row(g.mul_row(g.layer_norm_rows(v), p[name + ".g"]), p[name + ".b"]);
  };
  Value x = dec_in;
  for (int l = 0; l < cfg_.L; ++l) {
    const std::string d = "dec." + std::to_string(l);
    const Value n1 = ln(d + ".ln1", x);
    x = g.add(x, attention_block(g, p, d + ".self", n1, n1, query_rows, query_rows, train, step,
                                 nullptr));
    const bool last = l == cfg_.L - 1;
    x = g.add(x, attention_block(g, p, d + ".cross", ln(d + ".ln2", x), memory, query_rows,
                                 memory_rows, train, step, last ? final_cross_attn : nullptr));
    x = g.add(x, ffn_block(g, p, d + ".ffn", ln(d + ".ln3", x), train, step));
    check_finite(g, x, "decoder layer " + std::to_string(l));
  }
  return x;
}

Model::ForwardResult Model::forward_batch(Graph& g, const BoundParams& p,
                                          const std::vector<const SequenceSample*>& batch,
                                          bool train, uint64_t step) const {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const int64_t T = batch[0]->T;
  for (const auto* s : batch) {
    if (s->T != T) throw std::invalid_argument("forward: batch mixes sequence lengths");
    if (s->features.cols() != feat_dim_)
      throw std::invalid_argument("forward: sample " + s->id + " feature width mismatch");
  }
  const int64_t B = static_cast<int64_t>(batch.size());
  Tensor stacked = Tensor::zeros({B * T, static_cast<int64_t>(feat_dim_)});
  for (int64_t b = 0; b < B; ++b)
    std::copy(batch[b]->features.v.begin(), batch[b]->features.v.end(),
              stacked.v.begin() + b * T * feat_dim_);

  const Value emb = embed_frames(g, p, g.input(std::move(stacked)));
  const Value x = apply_positional(g, p, emb, T);
  const Value memory = encode_stack(g, p, x, T, train, step);

  const Value queries = p["queries"];
  const Value dec_in =
      B == 1 ? queries : g.concat_rows(std::vector<Value>(static_cast<size_t>(B), queries));

  ForwardResult out;
  const Value dec = decode_stack(g, p, dec_in, memory, cfg_.query_count(), T, train, step,
                                 &out.cross_attn);
  out.probs = g.softmax_rows(g.linear(dec, p["head_class.w"], p["head_class.b"]));
  const Value s = g.scale(g.sigmoid(g.linear(dec, p["head_start.w"], p["head_start.b"])),
                          static_cast<double>(T));
  const Value len = g.scale(g.sigmoid(g.linear(dec, p["head_dur.w"], p["head_dur.b"])),
                            static_cast<double>(T));
  out.s_abs = s;
  out.e_abs = g.min_scalar(g.add(s, len), static_cast<double>(T));
  return out;
}

SetPredictions Model::predict(const SequenceSample& sample, std::vector<Tensor>* cross_attn) const {
  Graph g;
  const BoundParams p = bind(g);
  const auto fwd = forward_batch(g, p, {&sample}, /*train=*/false, /*step=*/0);
  SetPredictions pred;
  pred.C = cfg_.C;
  pred.N0 = cfg_.N0;
  pred.probs = g.value(fwd.probs);
  const int q = cfg_.query_count();
  pred.start.resize(q);
  pred.end.resize(q);
  for (int i = 0; i < q; ++i) {
    pred.start[i] = g.value(fwd.s_abs).v[i];
    pred.end[i] = g.value(fwd.e_abs).v[i];
  }
  if (cross_attn) {
    cross_attn->clear();
    if (!fwd.cross_attn.empty())
      for (const Value w : fwd.cross_attn[0]) cross_attn->push_back(g.value(w));
  }
  return pred;
}

Checkpoint Model::to_checkpoint(const std::string& config_json,
                                const std::vector<std::pair<std::string, Tensor>>& extra) const {
  Checkpoint ck;
  ck.config_json = config_json;
  ck.tensors = params_.items();
  for (const auto& kv : extra) ck.tensors.push_back(kv);
  return ck;
}

void Model::load_params(const Checkpoint& ck) {
  for (auto& [name, t] : params_.items()) {
    const Tensor* src = ck.find(name);
    if (!src) throw std::runtime_error("checkpoint is missing parameter " + name);
    if (!(src->shape == t.shape))
      throw std::runtime_error("checkpoint parameter " + name + " has shape " + src->shape_str() +
                               ", expected " + t.shape_str());
    t = *src;
  }
}

}  // namespace evf
