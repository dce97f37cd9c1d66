#include "eventformer/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#ifdef EVF_USE_OPENBLAS
extern "C" {
void openblas_set_num_threads(int);
void dgemm_(const char*, const char*, const int*, const int*, const int*, const double*,
            const double*, const int*, const double*, const int*, const double*, double*,
            const int*);
void sgemm_(const char*, const char*, const int*, const int*, const int*, const float*,
            const float*, const int*, const float*, const int*, const float*, float*,
            const int*);
}
#endif

namespace evf {

namespace {
int64_t product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
  v.assign(static_cast<size_t>(product(shape)), real_t(0));
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<real_t> d) : shape(std::move(s)), v(std::move(d)) {
  if (product(shape) != static_cast<int64_t>(v.size()))
    throw std::invalid_argument("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<int64_t> shape, real_t value) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = value;
  return t;
}

bool Tensor::all_finite() const {
  for (real_t x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ")";
  return os.str();
}

void init_numeric_backend() {
#ifdef EVF_USE_OPENBLAS
  openblas_set_num_threads(1);
#endif
}

void gemm(bool trans_a, bool trans_b, const Tensor& a, const Tensor& b, Tensor& c,
          bool accumulate) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("gemm expects rank-2 tensors, got " + a.shape_str() + " and " +
                                b.shape_str());
  const int64_t m = trans_a ? a.cols() : a.rows();
  const int64_t k = trans_a ? a.rows() : a.cols();
  const int64_t kb = trans_b ? b.cols() : b.rows();
  const int64_t n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw std::invalid_argument("gemm inner dimension mismatch: " + a.shape_str() +
                                (trans_a ? "^T" : "") + " vs " + b.shape_str() +
                                (trans_b ? "^T" : ""));
  if (c.v.empty() && !accumulate)
    c = Tensor({m, n});
  else if (c.rank() != 2 || c.rows() != m || c.cols() != n)
    throw std::invalid_argument("gemm output shape " + c.shape_str() + " does not match (" +
                                std::to_string(m) + "x" + std::to_string(n) + ")");

#ifdef EVF_USE_OPENBLAS
  // Row-major C = op(A)op(B) maps to column-major C^T = op(B)^T op(A)^T.
  const int mi = static_cast<int>(n), ni = static_cast<int>(m), ki = static_cast<int>(k);
  const int lda = static_cast<int>(a.cols());
  const int ldb = static_cast<int>(b.cols());
  const int ldc = static_cast<int>(n);
  const char ta = trans_b ? 'T' : 'N';
  const char tb = trans_a ? 'T' : 'N';
  const real_t alpha = 1, beta = accumulate ? 1 : 0;
#ifdef EVF_REAL32
  sgemm_(&ta, &tb, &mi, &ni, &ki, &alpha, b.data(), &ldb, a.data(), &lda, &beta, c.data(), &ldc);
#else
  dgemm_(&ta, &tb, &mi, &ni, &ki, &alpha, b.data(), &ldb, a.data(), &lda, &beta, c.data(), &ldc);
#endif
#else
  if (!accumulate)
    for (auto& x : c.v) x = 0;
  const real_t* pa = a.data();
  const real_t* pb = b.data();
  real_t* pc = c.data();
  const int64_t acols = a.cols(), bcols = b.cols();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const real_t av = trans_a ? pa[p * acols + i] : pa[i * acols + p];
      if (av == real_t(0)) continue;
      const real_t* brow = trans_b ? nullptr : pb + p * bcols;
      if (!trans_b) {
        real_t* crow = pc + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        real_t* crow = pc + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * pb[j * bcols + p];
      }
    }
  }
#endif
}

}  // namespace evf
