#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "eventformer/model.hpp"
#include "eventformer/params.hpp"
#include "eventformer/types.hpp"

namespace evf {

struct OptimConfig {
  double lr_main = 1e-4;
  double lr_feat = 1e-5;  // frame_mlp.* parameters
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

struct OptimState {
  OptimConfig opt;
  std::vector<Tensor> m;  // parallel to ParamStore::items()
  std::vector<Tensor> v;
  int64_t step = 0;

  void init(const ParamStore& params);
  // Checkpoint extras ("opt.step", "opt.m.<name>", "opt.v.<name>").
  std::vector<std::pair<std::string, Tensor>> to_tensors(const ParamStore& params) const;
  void from_tensors(const ParamStore& params, const Checkpoint& ck);
};

// Decoupled weight decay is skipped for layer-norm gains/biases and the query
// embeddings; frame_mlp.* trains at lr_feat, everything else at lr_main.
double parameter_lr(const OptimConfig& opt, const std::string& name);
bool decays(const std::string& name);

// Returns the pre-clip global norm; grads are rescaled in place when needed.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// One AdamW update over all parameters (increments step).
void adamw_update(ParamStore& params, OptimState& state, std::vector<Tensor>& grads);

struct StepStats {
  double total = 0;
  double boundary_tiou = 0;
  double boundary_l1 = 0;
  double classification = 0;
  int64_t matched = 0;
  double grad_norm = 0;
};

// Forward → per-class matching on the same forward's outputs → set loss
// summed over the batch → backward → clipped AdamW update.
StepStats train_step(Model& model, OptimState& state,
                     const std::vector<const SequenceSample*>& batch);

// Batch loss at the current parameters (eval mode, fresh matching); the value
// train_step would see before updating.
double evaluate_loss(Model& model, const std::vector<const SequenceSample*>& batch);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  int checkpoint_every = 10;  // epochs between periodic checkpoints
  uint64_t seed = 7;          // epoch shuffling; model init uses RunConfig::seed
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0;  // per-sample means over the epoch
  double boundary_tiou = 0;
  double boundary_l1 = 0;
  double classification = 0;
  double grad_norm = 0;  // mean pre-clip norm per step
  double val_map50 = 0;  // NaN without a validation set
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::string final_checkpoint;
};

struct AppConfig;

// Full training loop: deterministic epoch shuffling keyed by (seed, epoch),
// equal-length batching, per-epoch validation mAP@0.5, metrics.jsonl telemetry
// (one record per line), periodic and final checkpoints carrying optimizer
// state so a resumed run continues bit-identically.
TrainResult train(const std::vector<SequenceSample>& train_set,
                  const std::vector<SequenceSample>& val_set, const AppConfig& app,
                  const std::string& out_dir, const std::string& resume_from = "");

// Rebuild a model from a checkpoint's embedded config echo.
Model model_from_checkpoint(const Checkpoint& ck);

}  // namespace evf
