#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "eventformer/graph.hpp"
#include "eventformer/params.hpp"
#include "eventformer/setmatch.hpp"
#include "eventformer/types.hpp"

namespace evf {

// Fixed sinusoidal table: P[t,2k]=sin(t/10000^(2k/d_p)), P[t,2k+1]=cos(·).
Tensor positional_embeddings(int64_t T, int d_p);

// Parameter handles registered in one graph, addressable by name.
struct BoundParams {
  const ParamStore* store = nullptr;
  std::vector<Value> values;  // parallel to store->items()
  Value operator[](const std::string& name) const;
};

// The EventFormer network. Construction initializes every parameter from the
// config seed; all forward passes are pure given (params, inputs, step key).
class Model {
 public:
  Model(RunConfig cfg, int feature_dim);

  const RunConfig& config() const { return cfg_; }
  int feature_dim() const { return feat_dim_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  BoundParams bind(Graph& g) const;

  // Per-frame embedding (no temporal mixing), positional handling, encoder
  // and decoder stages. The *_stack forms run B row-blocks through shared
  // parameters so one graph covers a whole batch; attention is per block.
  Value embed_frames(Graph& g, const BoundParams& p, Value features) const;
  Value apply_positional(Graph& g, const BoundParams& p, Value emb, int64_t block_rows) const;
  Value encode_stack(Graph& g, const BoundParams& p, Value x, int64_t block_rows, bool train,
                     uint64_t step) const;
  Value decode_stack(Graph& g, const BoundParams& p, Value dec_in, Value memory,
                     int64_t query_rows, int64_t memory_rows, bool train, uint64_t step,
                     std::vector<std::vector<Value>>* final_cross_attn = nullptr) const;

  struct ForwardResult {
    Value probs;  // (B·C·N0)×K, softmaxed
    Value s_abs;  // (B·C·N0)×1
    Value e_abs;
    // Final decoder layer cross-attention, [sample][head], each (C·N0)×T.
    std::vector<std::vector<Value>> cross_attn;
  };

  // Full forward over a batch of equal-length sequences.
  ForwardResult forward_batch(Graph& g, const BoundParams& p,
                              const std::vector<const SequenceSample*>& batch, bool train,
                              uint64_t step) const;

  // Inference: numeric predictions for one sequence; optionally the final
  // cross-attention maps (one (C·N0)×T tensor per head).
  SetPredictions predict(const SequenceSample& sample,
                         std::vector<Tensor>* cross_attn = nullptr) const;

  // Checkpointing: parameters plus caller-supplied extra state (optimizer
  // moments, counters). Loading validates names and shapes.
  Checkpoint to_checkpoint(const std::string& config_json,
                           const std::vector<std::pair<std::string, Tensor>>& extra = {}) const;
  void load_params(const Checkpoint& ck);

 private:
  Value attention_block(Graph& g, const BoundParams& p, const std::string& prefix, Value q_src,
                        Value kv_src, int64_t q_rows, int64_t kv_rows, bool train, uint64_t step,
                        std::vector<std::vector<Value>>* attn_out) const;
  Value ffn_block(Graph& g, const BoundParams& p, const std::string& prefix, Value x, bool train,
                  uint64_t step) const;
  uint64_t drop_key(const Graph& g, uint64_t step) const;
  void check_finite(const Graph& g, Value v, const std::string& where) const;

  RunConfig cfg_;
  int feat_dim_;
  ParamStore params_;
};

}  // namespace evf
