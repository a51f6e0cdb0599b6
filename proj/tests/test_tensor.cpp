#include <cmath>
#include <sstream>

#include "doctest.h"
#include "stc/adam.hpp"
#include "stc/errors.hpp"
#include "stc/rng.hpp"
#include "stc/tensor.hpp"
#include "stc/tensor_io.hpp"

using namespace stc;

TEST_CASE("tensor construction and indexing") {
  Tensor t = Tensor::zeros({2, 3, 4}, Dtype::F32);
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(2) == 4);
  CHECK(t.dtype() == Dtype::F32);
  t.set(t.offset(1, 2, 3), 5.5);
  CHECK(t.at(t.offset(1, 2, 3)) == doctest::Approx(5.5));
  CHECK(t.at(0) == 0.0);
  CHECK(t.shape_str() == "[2,3,4]");
}

TEST_CASE("tensor full and scalar") {
  Tensor f = Tensor::full({3}, 2.25, Dtype::F64);
  for (int i = 0; i < 3; ++i) CHECK(f.at(i) == 2.25);
  Tensor s = Tensor::scalar(7.0, Dtype::F32);
  CHECK(s.rank() == 1);
  CHECK(s.size() == 1);
  CHECK(s.at(0) == 7.0);
}

TEST_CASE("astype converts payload and preserves values") {
  Tensor t = Tensor::from({2, 2}, std::vector<double>{1.0, -2.5, 3.25, 0.0});
  Tensor f = t.astype(Dtype::F32);
  CHECK(f.dtype() == Dtype::F32);
  for (int i = 0; i < 4; ++i) CHECK(f.at(i) == t.at(i));  // exactly representable values
  Tensor back = f.astype(Dtype::F64);
  CHECK(back.dtype() == Dtype::F64);
  CHECK(back.at(1) == -2.5);
}

TEST_CASE("dispatch selects the tagged scalar type") {
  const Dtype kinds[] = {Dtype::F32, Dtype::F64};
  for (Dtype d : kinds) {
    const size_t width = dispatch(d, [](auto tag) { return sizeof(decltype(tag)); });
    CHECK(width == (d == Dtype::F32 ? 4 : 8));
  }
}

TEST_CASE("same_shape ignores dtype") {
  Tensor a = Tensor::zeros({2, 3}, Dtype::F32);
  Tensor b = Tensor::zeros({2, 3}, Dtype::F64);
  Tensor c = Tensor::zeros({3, 2}, Dtype::F32);
  CHECK(a.same_shape(b));
  CHECK(!a.same_shape(c));
}

TEST_CASE("stct round-trip is byte-identical") {
  Rng rng(11);
  Tensor t = Tensor::zeros({5, 7, 3}, Dtype::F32);
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rng.normal());
  std::ostringstream s1;
  write_stct(s1, t);
  std::istringstream in(s1.str());
  Tensor u = read_stct(in);
  CHECK(u.dtype() == t.dtype());
  CHECK(u.dims() == t.dims());
  for (int64_t i = 0; i < t.size(); ++i) CHECK(u.at(i) == t.at(i));
  std::ostringstream s2;
  write_stct(s2, u);
  CHECK(s1.str() == s2.str());
}

TEST_CASE("stct rejects truncated and corrupt input") {
  Tensor t = Tensor::zeros({4, 4}, Dtype::F64);
  std::ostringstream s;
  write_stct(s, t);
  std::string bytes = s.str();
  {
    std::istringstream in(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_stct(in), IoError);
  }
  {
    std::string bad = bytes;
    bad[0] = 'X';  // magic
    std::istringstream in(bad);
    CHECK_THROWS_AS(read_stct(in), IoError);
  }
}

TEST_CASE("rng streams are deterministic and tag-separated") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 16; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2, 4));
  CHECK(mix_seed(7, 9) == mix_seed(7, 9));
}

TEST_CASE("rng normal moments") {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng uniform_int covers its range") {
  Rng rng(3);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 1000; ++i) {
    const int v = rng.uniform_int(5);
    REQUIRE(v >= 0);
    REQUIRE(v < 5);
    ++seen[static_cast<size_t>(v)];
  }
  for (int cnt : seen) CHECK(cnt > 100);
}

TEST_CASE("rng unit vectors have unit norm") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto v = rng.unit_vector();
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("adam first step moves by about -lr per coordinate") {
  // With bias correction the first update is -lr * g / (|g| + eps') exactly,
  // so each coordinate moves by lr against the gradient sign.
  std::vector<Tensor> params = {Tensor::from({3}, std::vector<double>{1.0, 2.0, 3.0})};
  std::vector<Tensor> grads = {Tensor::from({3}, std::vector<double>{0.5, -2.0, 1e-3})};
  AdamState st = AdamState::init_like(params);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  adam_step(params, grads, st, cfg);
  CHECK(params[0].at(0) == doctest::Approx(1.0 - cfg.lr).epsilon(1e-4));
  CHECK(params[0].at(1) == doctest::Approx(2.0 + cfg.lr).epsilon(1e-4));
  CHECK(params[0].at(2) == doctest::Approx(3.0 - cfg.lr).epsilon(1e-2));
  CHECK(st.step == 1);
}

TEST_CASE("adam matches a reference implementation over several steps") {
  AdamConfig cfg;
  cfg.lr = 3e-3;
  std::vector<Tensor> params = {Tensor::from({2}, std::vector<double>{0.3, -0.7})};
  std::vector<Tensor> grads = {Tensor::zeros({2}, Dtype::F64)};
  AdamState st = AdamState::init_like(params);

  double rp[2] = {0.3, -0.7}, m[2] = {0, 0}, v[2] = {0, 0};
  Rng rng(5);
  for (int step = 1; step <= 25; ++step) {
    double g[2] = {rng.normal(), rng.normal()};
    grads[0].set(0, g[0]);
    grads[0].set(1, g[1]);
    adam_step(params, grads, st, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, step));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, step));
      rp[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  CHECK(params[0].at(0) == doctest::Approx(rp[0]).epsilon(1e-12));
  CHECK(params[0].at(1) == doctest::Approx(rp[1]).epsilon(1e-12));
}
