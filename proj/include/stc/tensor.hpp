#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stc/errors.hpp"

namespace stc {

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

inline const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }

// Dense row-major tensor, rank 1..4. Values are immutable by convention once an
// operation has produced them; mutation entry points exist for construction,
// optimizer updates and gradient accumulation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> dims, Dtype dt = Dtype::F32);
  static Tensor full(std::vector<int> dims, double value, Dtype dt = Dtype::F32);
  static Tensor from(std::vector<int> dims, std::vector<float> data);
  static Tensor from(std::vector<int> dims, std::vector<double> data);
  static Tensor scalar(double value, Dtype dt);

  bool empty() const { return dims_.empty(); }
  int rank() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  int dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
  int64_t size() const;
  Dtype dtype() const { return dtype_; }

  template <typename T>
  std::span<T> data() {
    auto* v = std::get_if<std::vector<T>>(&store_);
    if (!v) throw ShapeError("tensor dtype mismatch in typed access");
    return std::span<T>(v->data(), v->size());
  }
  template <typename T>
  std::span<const T> data() const {
    const auto* v = std::get_if<std::vector<T>>(&store_);
    if (!v) throw ShapeError("tensor dtype mismatch in typed access");
    return std::span<const T>(v->data(), v->size());
  }

  // Generic element access; slow path for tests and IO.
  double at(int64_t i) const;
  void set(int64_t i, double v);

  // Row-major offsets for the common layouts (HxWxC and HxW).
  int64_t offset(int y, int x, int c) const {
    return (static_cast<int64_t>(y) * dims_[1] + x) * dims_[2] + c;
  }
  int64_t offset(int y, int x) const { return static_cast<int64_t>(y) * dims_[1] + x; }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  Tensor astype(Dtype dt) const;
  std::string shape_str() const;

 private:
  std::vector<int> dims_;
  Dtype dtype_ = Dtype::F32;
  std::variant<std::vector<float>, std::vector<double>> store_;
};

// Calls f with a value of the active scalar type (float{} or double{}).
template <typename F>
decltype(auto) dispatch(Dtype dt, F&& f) {
  if (dt == Dtype::F32) return f(float{});
  return f(double{});
}

int64_t shape_product(const std::vector<int>& dims);

// Throws NumericError if t contains NaN/Inf.
void check_finite(const Tensor& t, const char* what);

#ifndef NDEBUG
#define STC_DEBUG_FINITE(t, what) ::stc::check_finite((t), (what))
#else
#define STC_DEBUG_FINITE(t, what) ((void)0)
#endif

}  // namespace stc
