#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "stc/losses.hpp"
#include "stc/rng.hpp"
#include "stc/tape.hpp"

using namespace stc;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng) {
  Tensor t = Tensor::zeros(dims, Dtype::F64);
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rng.normal());
  return t;
}

Tensor all_valid(int h, int w) { return Tensor::full({h, w}, 1.0, Dtype::F64); }

double weight_sum(const Tensor& w) {
  double s = 0;
  for (int64_t i = 0; i < w.size(); ++i) s += w.at(i);
  return s;
}

// Scalar loop oracle for the weighted L1 of Eq. 1.
double l1_oracle(const Tensor& wmap, const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += wmap.at(i) * std::abs(a.at(i) - b.at(i));
  return s;
}

// Scalar loop oracle for masked mean cross-entropy.
double ce_oracle(const Tensor& logits, const SegMask& t, const Tensor& valid) {
  const int h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
  double total = 0;
  int n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (valid.at(valid.offset(y, x)) == 0.0) continue;
      double mx = -1e300;
      for (int ch = 0; ch < c; ++ch) mx = std::max(mx, logits.at(logits.offset(y, x, ch)));
      double z = 0;
      for (int ch = 0; ch < c; ++ch) z += std::exp(logits.at(logits.offset(y, x, ch)) - mx);
      total += -(logits.at(logits.offset(y, x, t.at(y, x))) - mx - std::log(z));
      ++n;
    }
  return n ? total / n : 0.0;
}

double fd_loss(const std::function<double(const Tensor&)>& f, const Tensor& at, int64_t i,
               double h = 1e-4) {
  Tensor hi = at, lo = at;
  hi.set(i, at.at(i) + h);
  lo.set(i, at.at(i) - h);
  return (f(hi) - f(lo)) / (2 * h);
}

}  // namespace

TEST_CASE("weight_uniform hand cases") {
  Tensor w = weight_uniform(2, 2, 2, all_valid(2, 2));
  for (int64_t i = 0; i < w.size(); ++i) CHECK(w.at(i) == doctest::Approx(1.0 / 8.0));

  Tensor v = all_valid(2, 2);
  v.set(v.offset(0, 1), 0.0);
  Tensor w2 = weight_uniform(2, 2, 2, v);
  for (int c = 0; c < 2; ++c) CHECK(w2.at(w2.offset(0, 1, c)) == 0.0);
  CHECK(w2.at(w2.offset(0, 0, 0)) == doctest::Approx(1.0 / 6.0));
  CHECK(weight_sum(w2) == doctest::Approx(1.0).epsilon(1e-5));

  Tensor none = Tensor::zeros({2, 2}, Dtype::F64);
  Tensor w3 = weight_uniform(2, 2, 2, none);
  CHECK(weight_sum(w3) == 0.0);
}

TEST_CASE("weight_label_prior is one-hot at the argmax") {
  Tensor logits = Tensor::from({1, 1, 3}, std::vector<double>{0.1, 2.0, -1.0});
  Tensor w = weight_label_prior(logits, all_valid(1, 1));
  CHECK(w.at(0) == 0.0);
  CHECK(w.at(1) == doctest::Approx(1.0));
  CHECK(w.at(2) == 0.0);

  // two valid pixels, argmaxes at classes 0 and 2
  Tensor two = Tensor::from({1, 2, 3}, std::vector<double>{5, 1, 0, 0, 1, 5});
  Tensor w2 = weight_label_prior(two, all_valid(1, 2));
  CHECK(w2.at(w2.offset(0, 0, 0)) == doctest::Approx(0.5));
  CHECK(w2.at(w2.offset(0, 1, 2)) == doctest::Approx(0.5));
  CHECK(weight_sum(w2) == doctest::Approx(1.0));

  // tie -> lowest class id
  Tensor tie = Tensor::from({1, 1, 2}, std::vector<double>{1.0, 1.0});
  Tensor w3 = weight_label_prior(tie, all_valid(1, 1));
  CHECK(w3.at(0) == doctest::Approx(1.0));
  CHECK(w3.at(1) == 0.0);
}

TEST_CASE("edge_map on constants and a vertical step") {
  Tensor flat = Tensor::full({6, 6, 3}, 0.5, Dtype::F64);
  Tensor e0 = edge_map(flat);
  for (int64_t i = 0; i < e0.size(); ++i) CHECK(e0.at(i) == 0.0);

  // left half 0, right half 1; step between columns 2 and 3
  Tensor step = Tensor::zeros({6, 6, 3}, Dtype::F64);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x)
      for (int c = 0; c < 3; ++c) step.set(step.offset(y, x, c), 1.0);
  Tensor e = edge_map(step);
  for (int64_t i = 0; i < e.size(); ++i) CHECK((e.at(i) == 0.0 || e.at(i) == 1.0));
  for (int y = 0; y < 6; ++y) {
    // Sobel responds at columns 2 and 3; dilation widens the band to 1..4
    for (int x = 1; x <= 4; ++x) CHECK(e.at(e.offset(y, x)) == 1.0);
    CHECK(e.at(e.offset(y, 0)) == 0.0);
    CHECK(e.at(e.offset(y, 5)) == 0.0);
  }
}

TEST_CASE("weight_pixel_prior normalization and fallback") {
  Tensor flat = Tensor::full({4, 4, 3}, 0.25, Dtype::F64);
  Tensor v = all_valid(4, 4);
  Tensor wp = weight_pixel_prior(flat, 2, v);
  Tensor wu = weight_uniform(4, 4, 2, v);
  for (int64_t i = 0; i < wp.size(); ++i) CHECK(wp.at(i) == doctest::Approx(wu.at(i)));

  // a step image concentrates weight on the edge band, normalized over it
  Tensor step = Tensor::zeros({6, 6, 3}, Dtype::F64);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x)
      for (int c = 0; c < 3; ++c) step.set(step.offset(y, x, c), 1.0);
  Tensor w = weight_pixel_prior(step, 2, all_valid(6, 6));
  CHECK(weight_sum(w) == doctest::Approx(1.0).epsilon(1e-5));
  const double expect = 1.0 / (6 * 4 * 2);  // 24 edge pixels, 2 channels
  for (int y = 0; y < 6; ++y) {
    for (int x = 1; x <= 4; ++x)
      for (int c = 0; c < 2; ++c) CHECK(w.at(w.offset(y, x, c)) == doctest::Approx(expect));
    CHECK(w.at(w.offset(y, 0, 0)) == 0.0);
  }

  // invalidating part of the band renormalizes over the remainder
  Tensor v2 = all_valid(6, 6);
  for (int x = 0; x < 6; ++x) v2.set(v2.offset(0, x), 0.0);
  Tensor w2 = weight_pixel_prior(step, 2, v2);
  CHECK(weight_sum(w2) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(w2.at(w2.offset(0, 2, 0)) == 0.0);
  CHECK(w2.at(w2.offset(1, 2, 0)) == doctest::Approx(1.0 / (5 * 4 * 2)));
}

TEST_CASE("consistency_l1 hand cases and loop oracle") {
  Tape t0(Dtype::F64);
  Tensor a = Tensor::from({1, 1, 1}, std::vector<double>{3.0});
  Tensor b = Tensor::from({1, 1, 1}, std::vector<double>{1.0});
  Tensor w1 = Tensor::from({1, 1, 1}, std::vector<double>{1.0});
  NodeId na = t0.leaf(a, true), nb = t0.leaf(b, true);
  NodeId loss = consistency_l1(t0, na, nb, w1);
  CHECK(t0.value(loss).at(0) == doctest::Approx(2.0));

  Tape t1(Dtype::F64);
  Rng rng(81);
  Tensor x = random_tensor({4, 4, 3}, rng);
  NodeId nx = t1.leaf(x, false);
  CHECK(t1.value(consistency_l1(t1, nx, nx, weight_uniform(4, 4, 3, all_valid(4, 4)))).at(0) ==
        0.0);

  for (int inst = 0; inst < 100; ++inst) {
    Rng r2(mix_seed(1200, static_cast<uint64_t>(inst)));
    Tensor p = random_tensor({4, 4, 3}, r2), q = random_tensor({4, 4, 3}, r2);
    Tensor wu = weight_uniform(4, 4, 3, all_valid(4, 4));
    Tape t(Dtype::F64);
    NodeId lp = t.leaf(p, false), lq = t.leaf(q, false);
    const double got = t.value(consistency_l1(t, lp, lq, wu)).at(0);
    CHECK(got == doctest::Approx(l1_oracle(wu, p, q)).epsilon(1e-6));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("consistency_l1 scale covariance with a fixed weight map") {
  Rng rng(83);
  Tensor p = random_tensor({3, 3, 2}, rng), q = random_tensor({3, 3, 2}, rng);
  Tensor wu = weight_uniform(3, 3, 2, all_valid(3, 3));
  auto eval = [&](double scale) {
    Tensor ps = p, qs = q;
    for (int64_t i = 0; i < ps.size(); ++i) {
      ps.set(i, p.at(i) * scale);
      qs.set(i, q.at(i) * scale);
    }
    Tape t(Dtype::F64);
    return t.value(consistency_l1(t, t.leaf(ps), t.leaf(qs), wu)).at(0);
  };
  const double base = eval(1.0);
  CHECK(eval(3.5) == doctest::Approx(3.5 * base).epsilon(1e-9));
}

TEST_CASE("consistency_l1 gradients match finite differences on both inputs") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(1300, seed));
    Tensor p = random_tensor({3, 3, 2}, rng), q = random_tensor({3, 3, 2}, rng);
    Tensor wu = weight_uniform(3, 3, 2, all_valid(3, 3));
    Tape t(Dtype::F64);
    NodeId np = t.leaf(p, true), nq = t.leaf(q, true);
    t.backward(consistency_l1(t, np, nq, wu));
    for (int64_t i = 0; i < p.size(); ++i) {
      const double fd_p = fd_loss(
          [&](const Tensor& at) {
            Tape t2(Dtype::F64);
            return t2.value(consistency_l1(t2, t2.leaf(at), t2.leaf(q), wu)).at(0);
          },
          p, i);
      const double gp = t.grad(np).at(i);
      CHECK(std::abs(fd_p - gp) <= 1e-3 * std::max({std::abs(fd_p), std::abs(gp), 1e-6}));
      const double fd_q = fd_loss(
          [&](const Tensor& at) {
            Tape t2(Dtype::F64);
            return t2.value(consistency_l1(t2, t2.leaf(p), t2.leaf(at), wu)).at(0);
          },
          q, i);
      const double gq = t.grad(nq).at(i);
      CHECK(std::abs(fd_q - gq) <= 1e-3 * std::max({std::abs(fd_q), std::abs(gq), 1e-6}));
    }
  }
}

TEST_CASE("combined_consistency recomposes from the three parts") {
  for (int inst = 0; inst < 100; ++inst) {
    Rng rng(mix_seed(1400, static_cast<uint64_t>(inst)));
    const int h = 4, w = 4, c = 3;
    Tensor warped = random_tensor({h, w, c}, rng);
    Tensor predicted = random_tensor({h, w, c}, rng);
    Tensor image = Tensor::zeros({h, w, 3}, Dtype::F64);
    for (int64_t i = 0; i < image.size(); ++i) image.set(i, rng.uniform());
    Tensor v = all_valid(h, w);
    if (inst % 3 == 0) v.set(v.offset(1, 2), 0.0);

    Tape t(Dtype::F64);
    NodeId nw = t.leaf(warped), np = t.leaf(predicted);
    const double combined = t.value(combined_consistency(t, nw, np, image, v)).at(0);

    const double lu = l1_oracle(weight_uniform(h, w, c, v), warped, predicted);
    const double ll = l1_oracle(weight_label_prior(predicted, v), warped, predicted);
    const double lp = l1_oracle(weight_pixel_prior(image, c, v), warped, predicted);
    CHECK(combined == doctest::Approx(0.2 * lu + 0.4 * ll + 0.4 * lp).epsilon(1e-6));
    CHECK(combined >= 0.0);
  }

  ConsistencyMix mix;
  CHECK(mix.uniform + mix.label_prior + mix.pixel_prior == 1.0);
}

TEST_CASE("combined_consistency is zero when warped equals predicted") {
  Rng rng(91);
  Tensor x = random_tensor({4, 4, 3}, rng);
  Tensor img = Tensor::zeros({4, 4, 3}, Dtype::F64);
  for (int64_t i = 0; i < img.size(); ++i) img.set(i, rng.uniform());
  Tape t(Dtype::F64);
  NodeId nx = t.leaf(x);
  CHECK(t.value(combined_consistency(t, nx, nx, img, all_valid(4, 4))).at(0) == 0.0);
}

TEST_CASE("label-prior weights are gradient-stopped") {
  // perturbing predicted changes the loss only through the |.| term, not W:
  // analytic grad at predicted must match FD of the loss with W rebuilt, as
  // long as no argmax flips in the FD neighborhood (margins are wide here)
  Tensor predicted = Tensor::from({1, 2, 2}, std::vector<double>{4.0, 0.0, 0.0, 4.0});
  Tensor warped = Tensor::from({1, 2, 2}, std::vector<double>{1.0, 2.0, 3.0, 1.0});
  Tensor v = all_valid(1, 2);
  Tape t(Dtype::F64);
  NodeId nw = t.leaf(warped, true), np = t.leaf(predicted, true);
  NodeId loss = consistency_l1(t, nw, np, weight_label_prior(predicted, v));
  t.backward(loss);
  // W = 0.5 at (pixel0,c0) and (pixel1,c1); d|w-p|/dp = -sign(w-p)*W
  CHECK(t.grad(np).at(0) == doctest::Approx(0.5));    // warped 1 < predicted 4
  CHECK(t.grad(np).at(1) == 0.0);
  CHECK(t.grad(np).at(2) == 0.0);
  CHECK(t.grad(np).at(3) == doctest::Approx(0.5));    // warped 1 < predicted 4
  CHECK(t.grad(nw).at(0) == doctest::Approx(-0.5));
  CHECK(t.grad(nw).at(3) == doctest::Approx(-0.5));
}

TEST_CASE("masked_ce hand cases and loop oracle") {
  // uniform logits -> ln C
  Tensor u = Tensor::zeros({2, 2, 4}, Dtype::F64);
  SegMask any{{0, 1, 2, 3}, 2, 2};
  Tape t(Dtype::F64);
  CHECK(t.value(masked_ce(t, t.leaf(u), any, all_valid(2, 2))).at(0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // strong agreement -> near zero; margin +10
  Tensor strong = Tensor::zeros({1, 1, 2}, Dtype::F64);
  strong.set(0, 10.0);
  SegMask zero{{0}, 1, 1};
  Tape t2(Dtype::F64);
  CHECK(t2.value(masked_ce(t2, t2.leaf(strong), zero, all_valid(1, 1))).at(0) < 1e-4);

  // all-invalid -> exactly 0
  Tape t3(Dtype::F64);
  CHECK(t3.value(masked_ce(t3, t3.leaf(u), any, Tensor::zeros({2, 2}, Dtype::F64))).at(0) == 0.0);

  for (int inst = 0; inst < 100; ++inst) {
    Rng rng(mix_seed(1500, static_cast<uint64_t>(inst)));
    Tensor logits = random_tensor({3, 4, 5}, rng);
    SegMask m{{}, 3, 4};
    for (int i = 0; i < 12; ++i) m.ids.push_back(rng.uniform_int(5));
    Tensor v = all_valid(3, 4);
    if (inst % 2) v.set(v.offset(rng.uniform_int(3), rng.uniform_int(4)), 0.0);
    Tape tt(Dtype::F64);
    const double got = tt.value(masked_ce(tt, tt.leaf(logits), m, v)).at(0);
    CHECK(got == doctest::Approx(ce_oracle(logits, m, v)).epsilon(1e-6));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("masked_ce gradient matches finite differences") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(1600, seed));
    Tensor logits = random_tensor({3, 3, 4}, rng);
    SegMask m{{}, 3, 3};
    for (int i = 0; i < 9; ++i) m.ids.push_back(rng.uniform_int(4));
    Tensor v = all_valid(3, 3);
    v.set(v.offset(0, 0), 0.0);
    Tape t(Dtype::F64);
    NodeId nl = t.leaf(logits, true);
    t.backward(masked_ce(t, nl, m, v));
    for (int64_t i = 0; i < logits.size(); ++i) {
      const double fd = fd_loss(
          [&](const Tensor& at) {
            Tape t2(Dtype::F64);
            return t2.value(masked_ce(t2, t2.leaf(at), m, v)).at(0);
          },
          logits, i);
      const double g = t.grad(nl).at(i);
      CHECK(std::abs(fd - g) <= 1e-3 * std::max({std::abs(fd), std::abs(g), 1e-6}));
    }
    // invalid pixel receives zero gradient
    for (int c = 0; c < 4; ++c) CHECK(t.grad(nl).at(t.grad(nl).offset(0, 0, c)) == 0.0);
  }
}

TEST_CASE("weight maps always normalize to one over valid entries") {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(mix_seed(1700, seed));
    const int h = 3 + rng.uniform_int(4), w = 3 + rng.uniform_int(4), c = 2 + rng.uniform_int(3);
    Tensor v = all_valid(h, w);
    for (int i = 0; i < h * w / 3; ++i) v.set(v.offset(rng.uniform_int(h), rng.uniform_int(w)), 0.0);
    Tensor logits = random_tensor({h, w, c}, rng);
    Tensor img = Tensor::zeros({h, w, 3}, Dtype::F64);
    for (int64_t i = 0; i < img.size(); ++i) img.set(i, rng.uniform());
    for (const Tensor& wm :
         {weight_uniform(h, w, c, v), weight_label_prior(logits, v), weight_pixel_prior(img, c, v)}) {
      const double s = weight_sum(wm);
      CHECK((std::abs(s - 1.0) <= 1e-5 || s == 0.0));
      for (int64_t i = 0; i < wm.size(); ++i) CHECK(wm.at(i) >= 0.0);
      // zero at invalid pixels
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (v.at(v.offset(y, x)) == 0.0)
            for (int ch = 0; ch < c; ++ch) CHECK(wm.at(wm.offset(y, x, ch)) == 0.0);
    }
  }
}
