#include "eventformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eventformer/rng.hpp"

namespace evf {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

Value Graph::push(Node n) {
  if (n.op != Op::kInput && n.op != Op::kParam) {
    for (Value v : n.in) n.needs_grad |= at(v).needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::at(Value v) {
  if (!v.ok() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("graph: dangling value handle");
  return nodes_[v.id];
}

const Graph::Node& Graph::at(Value v) const { return const_cast<Graph*>(this)->at(v); }

void Graph::ensure_grad(Node& n) {
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
}

void Graph::shape_error(const std::string& op, const Node& a, const Node& b) const {
  throw std::invalid_argument(op + ": incompatible shapes " + a.val.shape_str() + " and " +
                              b.val.shape_str());
}

Value Graph::input(Tensor t) {
  Node n;
  n.op = Op::kInput;
  n.val = std::move(t);
  return push(std::move(n));
}

Value Graph::param(const Tensor* p) {
  if (!p) throw std::invalid_argument("graph: null parameter");
  Node n;
  n.op = Op::kParam;
  n.val = *p;
  n.ext = p;
  n.needs_grad = true;
  return push(std::move(n));
}

Value Graph::matmul(Value a, Value b) {
  Node n;
  n.op = Op::kMatmul;
  n.in = {a, b};
  gemm(false, false, at(a).val, at(b).val, n.val);
  return push(std::move(n));
}

Value Graph::matmul_nt(Value a, Value b) {
  Node n;
  n.op = Op::kMatmulNT;
  n.in = {a, b};
  gemm(false, true, at(a).val, at(b).val, n.val);
  return push(std::move(n));
}

Value Graph::add(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("add", at(a), at(b));
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] += tb.v[i];
  return push(std::move(n));
}

Value Graph::sub(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("sub", at(a), at(b));
  Node n;
  n.op = Op::kSub;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] -= tb.v[i];
  return push(std::move(n));
}

Value Graph::mul(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("mul", at(a), at(b));
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] *= tb.v[i];
  return push(std::move(n));
}

Value Graph::divide(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("divide", at(a), at(b));
  Node n;
  n.op = Op::kDiv;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] /= tb.v[i];
  return push(std::move(n));
}

Value Graph::minimum(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("minimum", at(a), at(b));
  Node n;
  n.op = Op::kMinimum;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = std::min(ta.v[i], tb.v[i]);
  return push(std::move(n));
}

Value Graph::maximum(Value a, Value b) {
  const auto& ta = at(a).val;
  const auto& tb = at(b).val;
  if (!ta.same_shape(tb)) shape_error("maximum", at(a), at(b));
  Node n;
  n.op = Op::kMaximum;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = std::max(ta.v[i], tb.v[i]);
  return push(std::move(n));
}

Value Graph::add_row(Value a, Value row) {
  const auto& ta = at(a).val;
  const auto& tr = at(row).val;
  if (ta.rank() != 2 || tr.rank() != 2 || tr.rows() != 1 || tr.cols() != ta.cols())
    shape_error("add_row", at(a), at(row));
  Node n;
  n.op = Op::kAddRow;
  n.in = {a, row};
  n.val = ta;
  for (int64_t i = 0; i < ta.rows(); ++i)
    for (int64_t j = 0; j < ta.cols(); ++j) n.val.at(i, j) += tr.v[j];
  return push(std::move(n));
}

Value Graph::mul_row(Value a, Value row) {
  const auto& ta = at(a).val;
  const auto& tr = at(row).val;
  if (ta.rank() != 2 || tr.rank() != 2 || tr.rows() != 1 || tr.cols() != ta.cols())
    shape_error("mul_row", at(a), at(row));
  Node n;
  n.op = Op::kMulRow;
  n.in = {a, row};
  n.val = ta;
  for (int64_t i = 0; i < ta.rows(); ++i)
    for (int64_t j = 0; j < ta.cols(); ++j) n.val.at(i, j) *= tr.v[j];
  return push(std::move(n));
}

Value Graph::concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int64_t cols = at(parts[0]).val.cols();
  int64_t rows = 0;
  for (Value p : parts) {
    if (at(p).val.rank() != 2 || at(p).val.cols() != cols)
      shape_error("concat_rows", at(parts[0]), at(p));
    rows += at(p).val.rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.in = parts;
  n.val = Tensor::zeros({rows, cols});
  int64_t r = 0;
  for (Value p : parts) {
    const auto& t = at(p).val;
    std::copy(t.v.begin(), t.v.end(), n.val.v.begin() + r * cols);
    r += t.rows();
  }
  return push(std::move(n));
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int64_t rows = at(parts[0]).val.rows();
  int64_t cols = 0;
  for (Value p : parts) {
    if (at(p).val.rank() != 2 || at(p).val.rows() != rows)
      shape_error("concat_cols", at(parts[0]), at(p));
    cols += at(p).val.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.in = parts;
  n.val = Tensor::zeros({rows, cols});
  int64_t c0 = 0;
  for (Value p : parts) {
    const auto& t = at(p).val;
    for (int64_t i = 0; i < rows; ++i)
      std::copy(t.v.begin() + i * t.cols(), t.v.begin() + (i + 1) * t.cols(),
                n.val.v.begin() + i * cols + c0);
    c0 += t.cols();
  }
  return push(std::move(n));
}

Value Graph::slice_rows(Value a, int64_t from, int64_t to) {
  const auto& ta = at(a).val;
  if (ta.rank() != 2 || from < 0 || from >= to || to > ta.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(from) + "," +
                                std::to_string(to) + ") out of " + ta.shape_str());
  Node n;
  n.op = Op::kSliceRows;
  n.in = {a};
  n.i0 = from;
  n.i1 = to;
  n.val = Tensor::zeros({to - from, ta.cols()});
  std::copy(ta.v.begin() + from * ta.cols(), ta.v.begin() + to * ta.cols(), n.val.v.begin());
  return push(std::move(n));
}

Value Graph::slice_cols(Value a, int64_t from, int64_t to) {
  const auto& ta = at(a).val;
  if (ta.rank() != 2 || from < 0 || from >= to || to > ta.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(from) + "," +
                                std::to_string(to) + ") out of " + ta.shape_str());
  Node n;
  n.op = Op::kSliceCols;
  n.in = {a};
  n.i0 = from;
  n.i1 = to;
  n.val = Tensor::zeros({ta.rows(), to - from});
  for (int64_t i = 0; i < ta.rows(); ++i)
    std::copy(ta.v.begin() + i * ta.cols() + from, ta.v.begin() + i * ta.cols() + to,
              n.val.v.begin() + i * (to - from));
  return push(std::move(n));
}

Value Graph::select_rows(Value a, std::vector<int64_t> rows) {
  const auto& ta = at(a).val;
  if (ta.rank() != 2) throw std::invalid_argument("select_rows: need rank-2, got " + ta.shape_str());
  for (int64_t r : rows)
    if (r < 0 || r >= ta.rows())
      throw std::invalid_argument("select_rows: index " + std::to_string(r) + " out of " +
                                  ta.shape_str());
  Node n;
  n.op = Op::kSelectRows;
  n.in = {a};
  n.val = Tensor::zeros({static_cast<int64_t>(rows.size()), ta.cols()});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(ta.v.begin() + rows[i] * ta.cols(), ta.v.begin() + (rows[i] + 1) * ta.cols(),
              n.val.v.begin() + i * ta.cols());
  n.idx = std::move(rows);
  return push(std::move(n));
}

Value Graph::scale(Value a, double s) {
  Node n;
  n.op = Op::kScale;
  n.in = {a};
  n.s0 = s;
  n.val = at(a).val;
  for (auto& x : n.val.v) x *= s;
  return push(std::move(n));
}

Value Graph::add_scalar(Value a, double s) {
  Node n;
  n.op = Op::kAddScalar;
  n.in = {a};
  n.s0 = s;
  n.val = at(a).val;
  for (auto& x : n.val.v) x += s;
  return push(std::move(n));
}

Value Graph::relu(Value a) {
  Node n;
  n.op = Op::kRelu;
  n.in = {a};
  n.val = at(a).val;
  for (auto& x : n.val.v) x = std::max(x, real_t(0));
  return push(std::move(n));
}

Value Graph::sigmoid(Value a) {
  Node n;
  n.op = Op::kSigmoid;
  n.in = {a};
  n.val = at(a).val;
  for (auto& x : n.val.v) x = real_t(1) / (real_t(1) + std::exp(-x));
  return push(std::move(n));
}

Value Graph::log(Value a) {
  Node n;
  n.op = Op::kLog;
  n.in = {a};
  n.val = at(a).val;
  for (auto& x : n.val.v) x = std::log(x);
  return push(std::move(n));
}

Value Graph::abs(Value a) {
  Node n;
  n.op = Op::kAbs;
  n.in = {a};
  n.val = at(a).val;
  for (auto& x : n.val.v) x = std::abs(x);
  return push(std::move(n));
}

Value Graph::min_scalar(Value a, double s) {
  Node n;
  n.op = Op::kMinScalar;
  n.in = {a};
  n.s0 = s;
  n.val = at(a).val;
  for (auto& x : n.val.v) x = std::min(x, real_t(s));
  return push(std::move(n));
}

Value Graph::max_scalar(Value a, double s) {
  Node n;
  n.op = Op::kMaxScalar;
  n.in = {a};
  n.s0 = s;
  n.val = at(a).val;
  for (auto& x : n.val.v) x = std::max(x, real_t(s));
  return push(std::move(n));
}

Value Graph::softmax_rows(Value a) {
  const auto& ta = at(a).val;
  if (ta.rank() != 2) throw std::invalid_argument("softmax_rows: need rank-2, got " + ta.shape_str());
  Node n;
  n.op = Op::kSoftmaxRows;
  n.in = {a};
  n.val = ta;
  for (int64_t i = 0; i < ta.rows(); ++i) {
    real_t* row = n.val.v.data() + i * ta.cols();
    real_t m = row[0];
    for (int64_t j = 1; j < ta.cols(); ++j) m = std::max(m, row[j]);
    real_t z = 0;
    for (int64_t j = 0; j < ta.cols(); ++j) z += (row[j] = std::exp(row[j] - m));
    for (int64_t j = 0; j < ta.cols(); ++j) row[j] /= z;
  }
  return push(std::move(n));
}

Value Graph::layer_norm_rows(Value a) {
  const auto& ta = at(a).val;
  if (ta.rank() != 2) throw std::invalid_argument("layer_norm_rows: need rank-2, got " + ta.shape_str());
  Node n;
  n.op = Op::kLayerNormRows;
  n.in = {a};
  n.val = ta;
  n.aux = Tensor::zeros({ta.rows(), 1});  // per-row 1/sqrt(var+eps)
  const int64_t d = ta.cols();
  for (int64_t i = 0; i < ta.rows(); ++i) {
    real_t* row = n.val.v.data() + i * d;
    real_t mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    real_t var = 0;
    for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    const real_t inv = real_t(1) / std::sqrt(var + kLayerNormEps);
    n.aux.v[i] = inv;
    for (int64_t j = 0; j < d; ++j) row[j] = (row[j] - mean) * inv;
  }
  return push(std::move(n));
}

Value Graph::dropout(Value a, double rate, bool train, uint64_t key) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout: rate must be in [0,1)");
  Node n;
  n.op = Op::kDropout;
  n.in = {a};
  n.val = at(a).val;
  if (train && rate > 0) {
    n.aux = Tensor::zeros(n.val.shape);
    const real_t keep = real_t(1) / real_t(1 - rate);
    for (size_t i = 0; i < n.val.v.size(); ++i) {
      const real_t m = CounterRng::uniform_at(key, i) < rate ? real_t(0) : keep;
      n.aux.v[i] = m;
      n.val.v[i] *= m;
    }
  }
  return push(std::move(n));
}

Value Graph::sum(Value a) {
  Node n;
  n.op = Op::kSum;
  n.in = {a};
  real_t s = 0;
  for (real_t x : at(a).val.v) s += x;
  n.val = Tensor::scalar(s);
  return push(std::move(n));
}

Value Graph::linear(Value x, Value w, Value b) { return add_row(matmul(x, w), b); }

Value Graph::multi_head_attention(Value q, Value k, Value v, int heads, Value wo, Value bo,
                                  std::vector<Value>* head_weights) {
  const int64_t d_m = at(q).val.cols();
  if (at(k).val.cols() != d_m || at(v).val.cols() != d_m) shape_error("multi_head_attention", at(q), at(k));
  if (at(k).val.rows() != at(v).val.rows()) shape_error("multi_head_attention", at(k), at(v));
  if (heads < 1 || d_m % heads != 0)
    throw std::invalid_argument("multi_head_attention: d_m=" + std::to_string(d_m) +
                                " not divisible by heads=" + std::to_string(heads));
  const int64_t d_h = d_m / heads;
  std::vector<Value> ctx;
  ctx.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Value qh = slice_cols(q, h * d_h, (h + 1) * d_h);
    const Value kh = slice_cols(k, h * d_h, (h + 1) * d_h);
    const Value vh = slice_cols(v, h * d_h, (h + 1) * d_h);
    const Value attn = softmax_rows(scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(d_h))));
    if (head_weights) head_weights->push_back(attn);
    ctx.push_back(matmul(attn, vh));
  }
  return linear(heads == 1 ? ctx[0] : concat_cols(ctx), wo, bo);
}

const Tensor& Graph::value(Value v) const { return at(v).val; }

const Tensor& Graph::grad(Value v) const {
  auto& n = const_cast<Graph*>(this)->at(v);
  const_cast<Graph*>(this)->ensure_grad(n);
  return n.grad;
}

void Graph::backward(Value loss) {
  if (ran_backward_) throw std::runtime_error("graph: backward already ran (graphs are single-use)");
  Node& ln = at(loss);
  if (ln.val.numel() != 1)
    throw std::invalid_argument("graph: backward requires a scalar loss, got " + ln.val.shape_str());
  ran_backward_ = true;
  ensure_grad(ln);
  ln.grad.v[0] = 1;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.v.empty()) continue;
    const Tensor& g = n.grad;
    auto gin = [&](int slot) -> Tensor* {
      Node& src = at(n.in[slot]);
      if (!src.needs_grad) return nullptr;
      ensure_grad(src);
      return &src.grad;
    };
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatmul: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0)) gemm(false, true, g, b, *da, true);
        if (Tensor* db = gin(1)) gemm(true, false, a, g, *db, true);
        break;
      }
      case Op::kMatmulNT: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0)) gemm(false, false, g, b, *da, true);
        if (Tensor* db = gin(1)) gemm(true, false, g, a, *db, true);
        break;
      }
      case Op::kAdd:
        for (int s : {0, 1})
          if (Tensor* d = gin(s))
            for (size_t i = 0; i < g.v.size(); ++i) d->v[i] += g.v[i];
        break;
      case Op::kSub: {
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i];
        if (Tensor* db = gin(1))
          for (size_t i = 0; i < g.v.size(); ++i) db->v[i] -= g.v[i];
        break;
      }
      case Op::kMul: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i] * b.v[i];
        if (Tensor* db = gin(1))
          for (size_t i = 0; i < g.v.size(); ++i) db->v[i] += g.v[i] * a.v[i];
        break;
      }
      case Op::kDiv: {
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i] / b.v[i];
        if (Tensor* db = gin(1))
          for (size_t i = 0; i < g.v.size(); ++i) db->v[i] -= g.v[i] * n.val.v[i] / b.v[i];
        break;
      }
      case Op::kMinimum: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] <= b.v[i]) da->v[i] += g.v[i];
        if (Tensor* db = gin(1))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] > b.v[i]) db->v[i] += g.v[i];
        break;
      }
      case Op::kMaximum: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& b = at(n.in[1]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] >= b.v[i]) da->v[i] += g.v[i];
        if (Tensor* db = gin(1))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] < b.v[i]) db->v[i] += g.v[i];
        break;
      }
      case Op::kAddRow: {
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i];
        if (Tensor* dr = gin(1))
          for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) dr->v[j] += g.at(i, j);
        break;
      }
      case Op::kMulRow: {
        const Tensor& a = at(n.in[0]).val;
        const Tensor& r = at(n.in[1]).val;
        if (Tensor* da = gin(0))
          for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) da->at(i, j) += g.at(i, j) * r.v[j];
        if (Tensor* dr = gin(1))
          for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) dr->v[j] += g.at(i, j) * a.at(i, j);
        break;
      }
      case Op::kConcatRows: {
        int64_t r = 0;
        for (size_t s = 0; s < n.in.size(); ++s) {
          const int64_t rows = at(n.in[s]).val.rows();
          if (Tensor* d = gin(static_cast<int>(s)))
            for (size_t i = 0; i < d->v.size(); ++i) d->v[i] += g.v[r * g.cols() + i];
          r += rows;
        }
        break;
      }
      case Op::kConcatCols: {
        int64_t c0 = 0;
        for (size_t s = 0; s < n.in.size(); ++s) {
          const int64_t cols = at(n.in[s]).val.cols();
          if (Tensor* d = gin(static_cast<int>(s)))
            for (int64_t i = 0; i < g.rows(); ++i)
              for (int64_t j = 0; j < cols; ++j) d->at(i, j) += g.at(i, c0 + j);
          c0 += cols;
        }
        break;
      }
      case Op::kSliceRows: {
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[n.i0 * g.cols() + i] += g.v[i];
        break;
      }
      case Op::kSliceCols: {
        if (Tensor* da = gin(0))
          for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) da->at(i, n.i0 + j) += g.at(i, j);
        break;
      }
      case Op::kSelectRows: {
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < n.idx.size(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) da->at(n.idx[i], j) += g.at(i, j);
        break;
      }
      case Op::kScale:
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += n.s0 * g.v[i];
        break;
      case Op::kAddScalar:
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i];
        break;
      case Op::kRelu: {
        const Tensor& a = at(n.in[0]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] > 0) da->v[i] += g.v[i];
        break;
      }
      case Op::kSigmoid:
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            da->v[i] += g.v[i] * n.val.v[i] * (real_t(1) - n.val.v[i]);
        break;
      case Op::kLog: {
        const Tensor& a = at(n.in[0]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i] / a.v[i];
        break;
      }
      case Op::kAbs: {
        const Tensor& a = at(n.in[0]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            da->v[i] += a.v[i] > 0 ? g.v[i] : (a.v[i] < 0 ? -g.v[i] : real_t(0));
        break;
      }
      case Op::kMinScalar: {
        const Tensor& a = at(n.in[0]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] <= n.s0) da->v[i] += g.v[i];
        break;
      }
      case Op::kMaxScalar: {
        const Tensor& a = at(n.in[0]).val;
        if (Tensor* da = gin(0))
          for (size_t i = 0; i < g.v.size(); ++i)
            if (a.v[i] >= n.s0) da->v[i] += g.v[i];
        break;
      }
      case Op::kSoftmaxRows: {
        if (Tensor* da = gin(0))
          for (int64_t i = 0; i < g.rows(); ++i) {
            real_t dot = 0;
            for (int64_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * n.val.at(i, j);
            for (int64_t j = 0; j < g.cols(); ++j)
              da->at(i, j) += n.val.at(i, j) * (g.at(i, j) - dot);
          }
        break;
      }
      case Op::kLayerNormRows: {
        if (Tensor* da = gin(0)) {
          const int64_t d = g.cols();
          for (int64_t i = 0; i < g.rows(); ++i) {
            real_t mg = 0, mgy = 0;
            for (int64_t j = 0; j < d; ++j) {
              mg += g.at(i, j);
              mgy += g.at(i, j) * n.val.at(i, j);
            }
            mg /= d;
            mgy /= d;
            const real_t inv = n.aux.v[i];
            for (int64_t j = 0; j < d; ++j)
              da->at(i, j) += inv * (g.at(i, j) - mg - n.val.at(i, j) * mgy);
          }
        }
        break;
      }
      case Op::kDropout:
        if (Tensor* da = gin(0)) {
          if (n.aux.v.empty())
            for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i];
          else
            for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i] * n.aux.v[i];
        }
        break;
      case Op::kSum:
        if (Tensor* da = gin(0))
          for (auto& x : da->v) x += g.v[0];
        break;
    }
  }
}

double grad_check(const std::function<Value(Graph&, Value)>& f, const Tensor& x, double eps) {
  Tensor analytic;
  {
    Graph g;
    const Value xv = g.param(&x);
    const Value loss = f(g, xv);
    if (g.value(loss).numel() != 1)
      throw std::invalid_argument("grad_check: f must produce a scalar");
    g.backward(loss);
    analytic = g.grad(xv);
  }
  auto eval = [&](const Tensor& p) {
    Graph g;
    return g.value(f(g, g.param(&p))).v[0];
  };
  Tensor probe = x;
  double worst = 0;
  for (size_t i = 0; i < x.v.size(); ++i) {
    probe.v[i] = x.v[i] + eps;
    const double fp = eval(probe);
    probe.v[i] = x.v[i] - eps;
    const double fm = eval(probe);
    probe.v[i] = x.v[i];
    const double numeric = (fp - fm) / (2 * eps);
    const double a = analytic.v[i];
    if (!std::isfinite(a) || !std::isfinite(numeric))
      throw std::runtime_error("grad_check: non-finite gradient at coordinate " + std::to_string(i));
    worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric)));
  }
  return worst;
}

}  // namespace evf
