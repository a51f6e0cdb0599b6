#include "stc/losses.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "stc/errors.hpp"

namespace stc {

namespace {

void check_hwc(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + " must be H x W x C, got " + t.shape_str());
}

void check_validity(const Tensor& validity, int h, int w) {
  if (validity.rank() != 2 || validity.dim(0) != h || validity.dim(1) != w)
    throw ShapeError("validity mask " + validity.shape_str() + " does not match H x W");
}

bool valid_at(const Tensor& validity, int y, int x) {
  return validity.at(validity.offset(y, x)) > 0.5;
}

}  // namespace

SegMask argmax_channels(const Tensor& logits) {
  check_hwc(logits, "logits");
  const int h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
  SegMask out;
  out.h = h;
  out.w = w;
  out.ids.resize(static_cast<size_t>(h) * w);
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = logits.data<T>().data();
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
      const T* l = p + i * c;
      int best = 0;
      for (int j = 1; j < c; ++j)
        if (l[j] > l[best]) best = j;  // ties keep the lowest id
      out.ids[static_cast<size_t>(i)] = best;
    }
  });
  return out;
}

Tensor weight_uniform(int h, int w, int c, const Tensor& validity) {
  check_validity(validity, h, w);
  Tensor out = Tensor::zeros({h, w, c}, Dtype::F64);
  int64_t nv = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid_at(validity, y, x)) ++nv;
  if (nv == 0) return out;
  const double wv = 1.0 / (static_cast<double>(nv) * c);
  auto o = out.data<double>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid_at(validity, y, x))
        for (int ch = 0; ch < c; ++ch) o[out.offset(y, x, ch)] = wv;
  return out;
}

Tensor weight_label_prior(const Tensor& logits, const Tensor& validity) {
  check_hwc(logits, "logits");
  const int h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
  check_validity(validity, h, w);
  const SegMask am = argmax_channels(logits);
  Tensor out = Tensor::zeros({h, w, c}, Dtype::F64);
  int64_t nv = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid_at(validity, y, x)) ++nv;
  if (nv == 0) return out;
  const double wv = 1.0 / static_cast<double>(nv);
  auto o = out.data<double>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid_at(validity, y, x)) o[out.offset(y, x, am.at(y, x))] = wv;
  return out;
}

Tensor edge_map(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("edge_map expects H x W x C image, got " + image.shape_str());
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<double> gray(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int ch = 0; ch < c; ++ch) s += image.at(image.offset(y, x, ch));
      gray[static_cast<size_t>(y) * w + x] = s / c;
    }

  auto g = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return gray[static_cast<size_t>(y) * w + x];
  };
  std::vector<double> mag(static_cast<size_t>(h) * w);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (g(y - 1, x + 1) + 2 * g(y, x + 1) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2 * g(y, x - 1) + g(y + 1, x - 1));
      const double gy = (g(y + 1, x - 1) + 2 * g(y + 1, x) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2 * g(y - 1, x) + g(y - 1, x + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag[static_cast<size_t>(y) * w + x] = m;
      max_mag = std::max(max_mag, m);
    }

  Tensor out = Tensor::zeros({h, w}, Dtype::F64);
  auto o = out.data<double>();
  const double thresh = 0.1 * max_mag;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool on = false;
      for (int dy = -1; dy <= 1 && !on; ++dy)
        for (int dx = -1; dx <= 1 && !on; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          // Strict > keeps a constant image (max_mag 0) all-zero.
          if (mag[static_cast<size_t>(yy) * w + xx] > thresh) on = true;
        }
      o[out.offset(y, x)] = on ? 1.0 : 0.0;
    }
  return out;
}

Tensor weight_pixel_prior(const Tensor& image_t1, int c, const Tensor& validity) {
  const Tensor edges = edge_map(image_t1);
  const int h = edges.dim(0), w = edges.dim(1);
  check_validity(validity, h, w);
  int64_t ne = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.at(edges.offset(y, x)) > 0.5 && valid_at(validity, y, x)) ++ne;
  // No valid edge pixel (constant image, or every edge warped invalid):
  // fall back to the uniform scheme so the mix keeps three live terms.
  if (ne == 0) return weight_uniform(h, w, c, validity);
  Tensor out = Tensor::zeros({h, w, c}, Dtype::F64);
  auto o = out.data<double>();
  const double wv = 1.0 / (static_cast<double>(ne) * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.at(edges.offset(y, x)) > 0.5 && valid_at(validity, y, x))
        for (int ch = 0; ch < c; ++ch) o[out.offset(y, x, ch)] = wv;
  return out;
}

namespace {

struct WeightedL1Node final : Node {
  Tensor weights;  // constant, same shape as the logits
  const char* name() const override { return "weighted_l1"; }
  void backward(Tape& t, NodeId) override {
    const double g = grad.at(0);
    const Tensor& a = t.value(inputs[0]);
    const Tensor& b = t.value(inputs[1]);
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto av = a.data<T>();
      auto bv = b.data<T>();
      auto wv = weights.data<T>();
      const T gv = static_cast<T>(g);
      for (int side = 0; side < 2; ++side) {
        if (!t.requires_grad(inputs[side])) continue;
        auto acc = t.grad_buffer(inputs[side]).data<T>();
        const T sgn = side == 0 ? T(1) : T(-1);
        for (int64_t i = 0; i < a.size(); ++i) {
          const T d = av[i] - bv[i];
          const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
          acc[i] += sgn * gv * wv[i] * s;
        }
      }
    });
  }
};

struct MaskedCeNode final : Node {
  Tensor probs;              // cached softmax of the logits
  std::vector<int32_t> target;
  std::vector<uint8_t> mask;
  int64_t nv = 0;
  const char* name() const override { return "masked_ce"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0]) || nv == 0) return;
    const double g = grad.at(0);
    const int c = probs.dim(2);
    dispatch(probs.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto p = probs.data<T>();
      auto acc = t.grad_buffer(inputs[0]).data<T>();
      const T scale = static_cast<T>(g / static_cast<double>(nv));
      const int64_t npix = static_cast<int64_t>(probs.dim(0)) * probs.dim(1);
      for (int64_t i = 0; i < npix; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const int64_t base = i * c;
        for (int j = 0; j < c; ++j) acc[base + j] += scale * p[base + j];
        acc[base + target[static_cast<size_t>(i)]] -= scale;
      }
    });
  }
};

}  // namespace

NodeId consistency_l1(Tape& t, NodeId warped, NodeId predicted, Tensor weights) {
  const Tensor& a = t.value(warped);
  const Tensor& b = t.value(predicted);
  check_hwc(a, "warped logits");
  if (!a.same_shape(b)) throw ShapeError("consistency_l1: logits shapes differ");
  if (weights.dims() != a.dims())
    throw ShapeError("consistency_l1: weight map " + weights.shape_str() + " vs logits " +
                     a.shape_str());
  auto n = std::make_unique<WeightedL1Node>();
  n->inputs = {warped, predicted};
  n->weights = weights.astype(t.dtype());
  const double loss = dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto av = a.data<T>();
    auto bv = b.data<T>();
    auto wv = n->weights.data<T>();
    double s = 0;
    for (int64_t i = 0; i < a.size(); ++i)
      s += static_cast<double>(wv[i]) * std::abs(static_cast<double>(av[i]) - bv[i]);
    return s;
  });
  n->value = Tensor::scalar(loss, t.dtype());
  return t.push(std::move(n));
}

NodeId combined_consistency(Tape& t, NodeId warped, NodeId predicted, const Tensor& image_t1,
                            const Tensor& validity, const ConsistencyMix& mix) {
  const Tensor& pv = t.value(predicted);
  check_hwc(pv, "predicted logits");
  const int h = pv.dim(0), w = pv.dim(1), c = pv.dim(2);
  const NodeId lu = consistency_l1(t, warped, predicted, weight_uniform(h, w, c, validity));
  const NodeId ll = consistency_l1(t, warped, predicted, weight_label_prior(pv, validity));
  const NodeId lp =
      consistency_l1(t, warped, predicted, weight_pixel_prior(image_t1, c, validity));
  return t.add(t.scale(lu, mix.uniform),
               t.add(t.scale(ll, mix.label_prior), t.scale(lp, mix.pixel_prior)));
}

NodeId masked_ce(Tape& t, NodeId logits, const SegMask& targets, const Tensor& validity) {
  const Tensor& l = t.value(logits);
  check_hwc(l, "logits");
  const int h = l.dim(0), w = l.dim(1), c = l.dim(2);
  if (targets.h != h || targets.w != w) throw ShapeError("masked_ce: target mask shape mismatch");
  check_validity(validity, h, w);
  for (int32_t id : targets.ids)
    if (id < 0 || id >= c) throw ContractError("masked_ce: class id out of range");

  auto n = std::make_unique<MaskedCeNode>();
  n->inputs = {logits};
  n->probs = Tensor::zeros({h, w, c}, t.dtype());
  n->target.assign(targets.ids.begin(), targets.ids.end());
  n->mask.resize(static_cast<size_t>(h) * w);
  double loss = 0.0;
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto lv = l.data<T>();
    auto pv = n->probs.data<T>();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int64_t i = static_cast<int64_t>(y) * w + x;
        if (!valid_at(validity, y, x)) continue;
        n->mask[static_cast<size_t>(i)] = 1;
        ++n->nv;
        const T* lp = lv.data() + i * c;
        T* pp = pv.data() + i * c;
        T m = lp[0];
        for (int j = 1; j < c; ++j) m = std::max(m, lp[j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
          pp[j] = std::exp(lp[j] - m);
          sum += pp[j];
        }
        for (int j = 0; j < c; ++j) pp[j] /= sum;
        const double lse = static_cast<double>(m) + std::log(static_cast<double>(sum));
        loss += lse - static_cast<double>(lp[n->target[static_cast<size_t>(i)]]);
      }
  });
  if (n->nv > 0) loss /= static_cast<double>(n->nv);
  n->value = Tensor::scalar(loss, t.dtype());
  return t.push(std::move(n));
}

}  // namespace stc
