#include <doctest.h>

#include <cmath>

#include "stc/rng.hpp"
#include "stc/segmenter.hpp"

using namespace stc;

namespace {

Tensor random_image(int h, int w, Rng& rng, Dtype dt = Dtype::F64) {
  Tensor t = Tensor::zeros({h, w, 3}, dt);
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rng.uniform());
  return t;
}

double tensor_sd(const Tensor& t) {
  double mean = 0;
  for (int64_t i = 0; i < t.size(); ++i) mean += t.at(i);
  mean /= static_cast<double>(t.size());
  double var = 0;
  for (int64_t i = 0; i < t.size(); ++i) var += (t.at(i) - mean) * (t.at(i) - mean);
  return std::sqrt(var / static_cast<double>(t.size()));
}

}  // namespace

TEST_CASE("reference architecture chains and counts parameters") {
  ArchDescriptor arch = ArchDescriptor::reference(8);
  CHECK_NOTHROW(arch.validate());
  CHECK(arch.classes() == 8);
  CHECK(arch.layers.size() == 4);
  // conv3x3 3->16, 16->32, 32->32, conv1x1 32->8 plus biases
  const int64_t expect = (3 * 3 * 3 * 16 + 16) + (3 * 3 * 16 * 32 + 32) +
                         (3 * 3 * 32 * 32 + 32) + (1 * 1 * 32 * 8 + 8);
  CHECK(arch.param_count() == expect);

  ArchDescriptor bad = arch;
  bad.layers[1].cin = 99;  // breaks the chain
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  ArchDescriptor one_class = ArchDescriptor::reference(8);
  one_class.layers.back().cout = 1;
  CHECK_THROWS_AS(one_class.validate(), ConfigError);
}

TEST_CASE("zero image with zero params yields the final bias everywhere") {
  ArchDescriptor arch = ArchDescriptor::reference(5);
  SegmenterParams p = init_params(arch, 1, Dtype::F64);
  for (auto& k : p.kernels)
    for (int64_t i = 0; i < k.size(); ++i) k.set(i, 0.0);
  for (int c = 0; c < 5; ++c) p.biases.back().set(c, 0.3 * (c + 1));
  Tensor img = Tensor::zeros({10, 12, 3}, Dtype::F64);
  Tensor logits = segmenter_forward(img, p);
  CHECK(logits.dim(0) == 10);
  CHECK(logits.dim(1) == 12);
  CHECK(logits.dim(2) == 5);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 5; ++c)
        CHECK(logits.at(logits.offset(y, x, c)) == doctest::Approx(0.3 * (c + 1)));
}

TEST_CASE("forward preserves spatial dims and is deterministic") {
  Rng rng(101);
  ArchDescriptor arch = ArchDescriptor::reference(4);
  SegmenterParams p = init_params(arch, 7);
  for (int h : {9, 16, 33}) {
    Tensor img = random_image(h, h + 3, rng).astype(Dtype::F32);
    Tensor a = segmenter_forward(img, p);
    CHECK(a.dim(0) == h);
    CHECK(a.dim(1) == h + 3);
    Tensor b = segmenter_forward(img, p);
    auto da = a.data<float>(), db = b.data<float>();
    for (size_t i = 0; i < da.size(); ++i) CHECK(da[i] == db[i]);
  }
}

TEST_CASE("init_params is deterministic per seed with He-scaled kernels") {
  ArchDescriptor arch = ArchDescriptor::reference(6);
  SegmenterParams a = init_params(arch, 42, Dtype::F64);
  SegmenterParams b = init_params(arch, 42, Dtype::F64);
  for (size_t l = 0; l < a.kernels.size(); ++l)
    for (int64_t i = 0; i < a.kernels[l].size(); ++i)
      CHECK(a.kernels[l].at(i) == b.kernels[l].at(i));

  SegmenterParams c = init_params(arch, 43, Dtype::F64);
  bool any_diff = false;
  for (int64_t i = 0; i < a.kernels[0].size(); ++i)
    if (a.kernels[0].at(i) != c.kernels[0].at(i)) any_diff = true;
  CHECK(any_diff);

  for (auto& bias : a.biases)
    for (int64_t i = 0; i < bias.size(); ++i) CHECK(bias.at(i) == 0.0);

  // 3x3x32x32 layer: sd within 20% of sqrt(2 / fan_in), fan_in = 3*3*32
  const Tensor& k32 = a.kernels[2];
  REQUIRE(k32.dim(2) == 32);
  const double want = std::sqrt(2.0 / (3 * 3 * 32));
  CHECK(tensor_sd(k32) == doctest::Approx(want).epsilon(0.2));
}

TEST_CASE("predict takes the per-pixel argmax with ties to the lowest id") {
  Tensor l = Tensor::from({1, 1, 3}, std::vector<double>{0.1, 2.0, -1.0});
  CHECK(predict(l).at(0, 0) == 1);

  Tensor tie = Tensor::full({2, 2, 4}, 0.7, Dtype::F64);
  SegMask m = predict(tie);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK(m.at(y, x) == 0);
}

TEST_CASE("predict is invariant to positive scale and per-pixel shifts") {
  Rng rng(107);
  Tensor l = Tensor::zeros({5, 5, 6}, Dtype::F64);
  for (int64_t i = 0; i < l.size(); ++i) l.set(i, rng.normal());
  SegMask base = predict(l);
  Tensor t = Tensor::zeros({5, 5, 6}, Dtype::F64);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const double shift = rng.normal();
      for (int c = 0; c < 6; ++c) t.set(t.offset(y, x, c), 2.5 * l.at(l.offset(y, x, c)) + shift);
    }
  SegMask scaled = predict(t);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) CHECK(scaled.at(y, x) == base.at(y, x));
}

TEST_CASE("tape forward shares parameter nodes across frames") {
  ArchDescriptor arch = ArchDescriptor::reference(3);
  SegmenterParams p = init_params(arch, 11, Dtype::F64);
  Rng rng(113);
  Tensor img1 = random_image(9, 9, rng), img2 = random_image(9, 9, rng);

  Tape t(Dtype::F64);
  ParamNodes nodes = push_params(t, p);
  NodeId l1 = segmenter_forward(t, t.leaf(img1), arch, nodes);
  NodeId l2 = segmenter_forward(t, t.leaf(img2), arch, nodes);
  NodeId loss = t.add(t.sum(t.mul(l1, l1)), t.sum(t.mul(l2, l2)));
  t.backward(loss);
  // gradient accumulates contributions from both frames into the shared leaf
  CHECK(t.has_grad(nodes.kernels[0]));
  CHECK(t.trainable_leaves().size() == nodes.kernels.size() + nodes.biases.size());

  // value matches the pure forward
  Tensor pure = segmenter_forward(img1, p);
  const Tensor& taped = t.value(l1);
  for (int64_t i = 0; i < pure.size(); ++i)
    CHECK(taped.at(i) == doctest::Approx(pure.at(i)).epsilon(1e-12));
}

TEST_CASE("end-to-end parameter gradients match finite differences on a 9x9 image") {
  ArchDescriptor arch;
  arch.layers = {{3, 3, 4, true}, {1, 4, 3, false}};  // small net keeps FD affordable
  arch.validate();
  int accepted = 0;
  for (uint64_t seed = 0; seed < 200 && accepted < 20; ++seed) {
    Rng rng(mix_seed(1800, seed));
    SegmenterParams p = init_params(arch, mix_seed(1900, seed), Dtype::F64);
    Tensor img = random_image(9, 9, rng);
    SegMask labels{{}, 9, 9};
    for (int i = 0; i < 81; ++i) labels.ids.push_back(rng.uniform_int(3));
    Tensor valid = Tensor::full({9, 9}, 1.0, Dtype::F64);

    // central differences are invalid across the ReLU kink: skip draws whose
    // hidden preactivations sit within the FD step of zero
    Tensor pre = conv2d(img, p.kernels[0], p.biases[0]);
    bool near_kink = false;
    for (int64_t i = 0; i < pre.size(); ++i)
      if (std::abs(pre.at(i)) < 1e-3) near_kink = true;
    if (near_kink) continue;
    ++accepted;

    auto loss_at = [&](const SegmenterParams& pp) {
      Tape t(Dtype::F64);
      ParamNodes nodes = push_params(t, pp, false);
      NodeId logits = segmenter_forward(t, t.leaf(img), arch, nodes);
      return t.value(supervised_ce(t, logits, labels, valid)).at(0);
    };

    Tape t(Dtype::F64);
    ParamNodes nodes = push_params(t, p);
    NodeId logits = segmenter_forward(t, t.leaf(img), arch, nodes);
    t.backward(supervised_ce(t, logits, labels, valid));

    const double h = 1e-4;
    // spot-check a stride of parameters in each tensor
    for (size_t l = 0; l < p.kernels.size(); ++l) {
      const Tensor& g = t.grad(nodes.kernels[l]);
      for (int64_t i = 0; i < p.kernels[l].size(); i += 7) {
        SegmenterParams hi = p, lo = p;
        hi.kernels[l].set(i, p.kernels[l].at(i) + h);
        lo.kernels[l].set(i, p.kernels[l].at(i) - h);
        const double fd = (loss_at(hi) - loss_at(lo)) / (2 * h);
        CHECK(std::abs(fd - g.at(i)) <= 1e-3 * std::max({std::abs(fd), std::abs(g.at(i)), 1e-6}));
      }
      const Tensor& gb = t.grad(nodes.biases[l]);
      for (int64_t i = 0; i < p.biases[l].size(); ++i) {
        SegmenterParams hi = p, lo = p;
        hi.biases[l].set(i, p.biases[l].at(i) + h);
        lo.biases[l].set(i, p.biases[l].at(i) - h);
        const double fd = (loss_at(hi) - loss_at(lo)) / (2 * h);
        CHECK(std::abs(fd - gb.at(i)) <= 1e-3 * std::max({std::abs(fd), std::abs(gb.at(i)), 1e-6}));
      }
    }
  }
  CHECK(accepted == 20);
}
