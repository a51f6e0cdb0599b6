#include "stc/segmenter.hpp"

#include <cmath>

#include "stc/errors.hpp"
#include "stc/ops.hpp"
#include "stc/rng.hpp"

namespace stc {

int64_t ArchDescriptor::param_count() const {
  int64_t n = 0;
  for (const LayerSpec& l : layers)
    n += static_cast<int64_t>(l.ksize) * l.ksize * l.cin * l.cout + l.cout;
  return n;
}

void ArchDescriptor::validate() const {
  if (layers.empty()) throw ConfigError("architecture has no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.ksize <= 0 || l.ksize % 2 == 0) throw ConfigError("kernel sizes must be odd");
    if (l.cin <= 0 || l.cout <= 0) throw ConfigError("layer widths must be positive");
    if (i > 0 && l.cin != layers[i - 1].cout)
      throw ConfigError("layer " + std::to_string(i) + " input width does not chain");
  }
  if (layers.back().cout < 2) throw ConfigError("class count must be >= 2");
}

ArchDescriptor ArchDescriptor::reference(int classes) {
  ArchDescriptor a;
  a.layers = {{3, 3, 16, true}, {3, 16, 32, true}, {3, 32, 32, true}, {1, 32, classes, false}};
  a.validate();
  return a;
}

SegmenterParams init_params(const ArchDescriptor& arch, uint64_t seed, Dtype dt) {
  arch.validate();
  SegmenterParams p;
  p.arch = arch;
  Rng rng(mix_seed(seed, 0x5e69'6e69ULL));
  for (const LayerSpec& l : arch.layers) {
    Tensor k = Tensor::zeros({l.ksize, l.ksize, l.cin, l.cout}, dt);
    const double sd = std::sqrt(2.0 / (static_cast<double>(l.ksize) * l.ksize * l.cin));
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      for (T& v : k.data<T>()) v = static_cast<T>(rng.normal() * sd);
    });
    p.kernels.push_back(std::move(k));
    p.biases.push_back(Tensor::zeros({l.cout}, dt));
  }
  return p;
}

Tensor segmenter_forward(const Tensor& image, const SegmenterParams& params) {
  params.arch.validate();
  if (params.kernels.size() != params.arch.layers.size())
    throw ShapeError("parameter count does not match architecture");
  Tensor x = image.dtype() == params.kernels[0].dtype()
                 ? image
                 : image.astype(params.kernels[0].dtype());
  for (size_t i = 0; i < params.arch.layers.size(); ++i) {
    x = conv2d(x, params.kernels[i], params.biases[i]);
    if (params.arch.layers[i].relu) x = relu(x);
  }
  return x;
}

ParamNodes push_params(Tape& t, const SegmenterParams& params, bool trainable) {
  ParamNodes out;
  for (size_t i = 0; i < params.kernels.size(); ++i) {
    out.kernels.push_back(t.leaf(params.kernels[i].astype(t.dtype()), trainable));
    out.biases.push_back(t.leaf(params.biases[i].astype(t.dtype()), trainable));
  }
  return out;
}

NodeId segmenter_forward(Tape& t, NodeId image, const ArchDescriptor& arch,
                         const ParamNodes& nodes) {
  arch.validate();
  if (nodes.kernels.size() != arch.layers.size())
    throw ShapeError("parameter nodes do not match architecture");
  NodeId x = image;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    x = t.conv2d(x, nodes.kernels[i], nodes.biases[i]);
    if (arch.layers[i].relu) x = t.relu(x);
  }
  return x;
}

}  // namespace stc
