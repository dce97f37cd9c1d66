#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eventformer/tensor.hpp"

namespace evf {

// Handle into a Graph's node table.
struct Value {
  int id = -1;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// them once in reverse. A graph is single-use: it is built, run backward once,
// then discarded (training rebuilds one per step).
class Graph {
 public:
  enum class Op {
    kInput,
    kParam,
    kMatmul,     // A(m×k)·B(k×n)
    kMatmulNT,   // A(m×k)·B(n×k)^T
    kAdd,
    kSub,
    kMul,
    kDiv,
    kMinimum,
    kMaximum,
    kAddRow,     // M×N + 1×N
    kMulRow,     // M×N ⊙ 1×N
    kConcatRows,
    kConcatCols,
    kSliceRows,
    kSliceCols,
    kSelectRows,
    kScale,
    kAddScalar,
    kRelu,
    kSigmoid,
    kLog,
    kAbs,
    kMinScalar,
    kMaxScalar,
    kSoftmaxRows,
    kLayerNormRows,
    kDropout,
    kSum,
  };

  // Leaves. input() copies (or moves) a constant; param() keeps a borrowed
  // pointer so the caller can map gradients back to its own storage.
  Value input(Tensor t);
  Value param(const Tensor* p);

  Value matmul(Value a, Value b);
  Value matmul_nt(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value divide(Value a, Value b);
  Value minimum(Value a, Value b);  // ties send gradient to the first input
  Value maximum(Value a, Value b);
  Value add_row(Value a, Value row);
  Value mul_row(Value a, Value row);
  Value concat_rows(const std::vector<Value>& parts);
  Value concat_cols(const std::vector<Value>& parts);
  Value slice_rows(Value a, int64_t from, int64_t to);
  Value slice_cols(Value a, int64_t from, int64_t to);
  Value select_rows(Value a, std::vector<int64_t> rows);
  Value scale(Value a, double s);
  Value add_scalar(Value a, double s);
  Value relu(Value a);
  Value sigmoid(Value a);
  Value log(Value a);
  Value abs(Value a);
  Value min_scalar(Value a, double s);
  Value max_scalar(Value a, double s);
  Value softmax_rows(Value a);
  Value layer_norm_rows(Value a);  // pre-affine, epsilon 1e-5
  // Inverted dropout; identity when train=false. Randomness is a pure
  // function of the caller-supplied key, independent of graph build order.
  Value dropout(Value a, double rate, bool train, uint64_t key);
  Value sum(Value a);  // 1×1

  // linear: x·W + b with W (in×out), b (1×out).
  Value linear(Value x, Value w, Value b);

  // Multi-head attention over already-projected q,k,v (n×d_m each):
  // per head softmax(q_h k_h^T / sqrt(d_h)) v_h, heads concatenated, then
  // projected by wo/bo. Per-head attention weight nodes are appended to
  // *head_weights when given (read-only export for plots).
  Value multi_head_attention(Value q, Value k, Value v, int heads, Value wo, Value bo,
                             std::vector<Value>* head_weights = nullptr);

  const Tensor& value(Value v) const;
  // Valid after backward(); zero tensor if the node was never reached.
  const Tensor& grad(Value v) const;

  // Reverse sweep from a scalar loss. Throws if loss is not 1×1 or if the
  // graph already ran backward (single-use contract).
  void backward(Value loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    std::vector<Value> in;
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    double s0 = 0;
    int64_t i0 = 0, i1 = 0;
    std::vector<int64_t> idx;
    Tensor aux;                    // op-specific (dropout mask, layer-norm inv-std)
    const Tensor* ext = nullptr;   // param storage, borrowed
  };

  Value push(Node n);
  Node& at(Value v);
  const Node& at(Value v) const;
  void ensure_grad(Node& n);
  [[noreturn]] void shape_error(const std::string& op, const Node& a, const Node& b) const;

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Max relative gradient error of a scalar-valued builder at x, analytic vs
// central differences: |a−n| / max(1e-8, |a|+|n|). Throws on non-finite
// values, naming the offending coordinate.
double grad_check(const std::function<Value(Graph&, Value)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace evf
