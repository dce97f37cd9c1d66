#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace evf {

#ifdef EVF_REAL32
using real_t = float;
#else
using real_t = double;
#endif

// Dense row-major tensor. Rank is usually 1 or 2; checkpoints always store
// 64-bit reals regardless of the build's real_t.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<real_t> data);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, real_t value);
  static Tensor scalar(real_t value) { return Tensor({1}, {value}); }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 0); }
  int64_t cols() const { return rank() == 2 ? shape[1] : 0; }

  real_t* data() { return v.data(); }
  const real_t* data() const { return v.data(); }
  real_t& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  real_t at(int64_t i) const { return v[static_cast<size_t>(i)]; }
  real_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * shape[1] + c)]; }
  real_t at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;

  std::vector<int64_t> shape;
  std::vector<real_t> v;
};

// C (m×n) = op(A) · op(B), row-major, accumulate optional.
// Uses BLAS when the build links it; falls back to plain loops otherwise.
void gemm(bool trans_a, bool trans_b, const Tensor& a, const Tensor& b, Tensor& c,
          bool accumulate = false);

// Pins the BLAS backend to one thread so results are bit-stable run to run.
void init_numeric_backend();

}  // namespace evf
