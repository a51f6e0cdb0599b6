#include "stc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stc {

int64_t shape_product(const std::vector<int>& dims) {
  int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor extent must be positive");
    n *= d;
  }
  return n;
}

static void check_rank(const std::vector<int>& dims) {
  if (dims.empty() || dims.size() > 4) throw ShapeError("tensor rank must be 1..4");
}

Tensor Tensor::zeros(std::vector<int> dims, Dtype dt) {
  check_rank(dims);
  Tensor t;
  int64_t n = shape_product(dims);
  t.dims_ = std::move(dims);
  t.dtype_ = dt;
  if (dt == Dtype::F32)
    t.store_ = std::vector<float>(static_cast<size_t>(n), 0.0f);
  else
    t.store_ = std::vector<double>(static_cast<size_t>(n), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> dims, double value, Dtype dt) {
  Tensor t = zeros(std::move(dims), dt);
  if (dt == Dtype::F32) {
    auto s = t.data<float>();
    std::fill(s.begin(), s.end(), static_cast<float>(value));
  } else {
    auto s = t.data<double>();
    std::fill(s.begin(), s.end(), value);
  }
  return t;
}

Tensor Tensor::from(std::vector<int> dims, std::vector<float> data) {
  check_rank(dims);
  if (shape_product(dims) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor data length does not match dims");
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::F32;
  t.store_ = std::move(data);
  return t;
}

Tensor Tensor::from(std::vector<int> dims, std::vector<double> data) {
  check_rank(dims);
  if (shape_product(dims) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor data length does not match dims");
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::F64;
  t.store_ = std::move(data);
  return t;
}

Tensor Tensor::scalar(double value, Dtype dt) { return full({1}, value, dt); }

int64_t Tensor::size() const {
  return std::visit([](const auto& v) { return static_cast<int64_t>(v.size()); }, store_);
}

double Tensor::at(int64_t i) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(static_cast<size_t>(i))); },
                    store_);
}

void Tensor::set(int64_t i, double val) {
  std::visit([&](auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    v.at(static_cast<size_t>(i)) = static_cast<T>(val);
  }, store_);
}

Tensor Tensor::astype(Dtype dt) const {
  if (dt == dtype_) return *this;
  Tensor out = Tensor::zeros(dims_, dt);
  int64_t n = size();
  for (int64_t i = 0; i < n; ++i) out.set(i, at(i));
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
  os << "]" << dtype_name(dtype_);
  return os.str();
}

void check_finite(const Tensor& t, const char* what) {
  bool ok = dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : t.data<T>())
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  });
  if (!ok) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace stc
