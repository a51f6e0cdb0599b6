#include "stc/tape.hpp"

#include "stc/kernels.hpp"

namespace stc {

Node& Tape::node(NodeId id) {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw ContractError("bad node id");
  return *nodes_[static_cast<size_t>(id)];
}

const Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw ContractError("bad node id");
  return *nodes_[static_cast<size_t>(id)];
}

NodeId Tape::push(std::unique_ptr<Node> n) {
  if (n->value.dtype() != dtype_) throw ShapeError("tape: node dtype differs from tape dtype");
  for (NodeId in : n->inputs)
    if (node(in).requires_grad) n->requires_grad = true;
  if (n->trainable) n->requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad.empty()) throw ContractError("gradient not computed for node");
  return n.grad;
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.dims(), n.value.dtype());
  return n.grad;
}

std::vector<NodeId> Tape::trainable_leaves() const {
  std::vector<NodeId> out;
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i]->trainable) out.push_back(static_cast<NodeId>(i));
  return out;
}

NodeId Tape::leaf(Tensor value, bool trainable) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->trainable = trainable;
  return push(std::move(n));
}

namespace {

struct Conv2dNode final : Node {
  const char* name() const override { return "conv2d"; }
  void backward(Tape& t, NodeId) override {
    const Tensor& in = t.value(inputs[0]);
    const Tensor& k = t.value(inputs[1]);
    const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
    const int kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
    dispatch(grad.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = grad.data<T>().data();
      if (t.requires_grad(inputs[0])) {
        kernels::conv2d_backward_input(g, h, w, cout, k.data<T>().data(), kh, kw, cin,
                                       t.grad_buffer(inputs[0]).data<T>().data());
      }
      if (t.requires_grad(inputs[1]) || t.requires_grad(inputs[2])) {
        T* dk = t.grad_buffer(inputs[1]).data<T>().data();
        T* db = t.grad_buffer(inputs[2]).data<T>().data();
        kernels::conv2d_backward_kernel(in.data<T>().data(), g, h, w, cin, kh, kw, cout, dk,
                                        db);
      }
    });
  }
};

struct ReluNode final : Node {
  const char* name() const override { return "relu"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0])) return;
    const Tensor& in = t.value(inputs[0]);
    dispatch(grad.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kernels::relu_backward(in.data<T>().data(), grad.data<T>().data(),
                             t.grad_buffer(inputs[0]).data<T>().data(), in.size());
    });
  }
};

struct SoftmaxNode final : Node {
  const char* name() const override { return "softmax_channels"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0])) return;
    dispatch(grad.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kernels::softmax_channels_backward(value.data<T>().data(), grad.data<T>().data(),
                                         value.dim(0), value.dim(1), value.dim(2),
                                         t.grad_buffer(inputs[0]).data<T>().data());
    });
  }
};

struct PixelMapNode final : Node {
  std::shared_ptr<const PixelMap> map;
  const char* name() const override { return "pixel_map"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0])) return;
    Tensor back = apply_pixel_map_transpose(*map, grad);
    Tensor& acc = t.grad_buffer(inputs[0]);
    dispatch(acc.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto a = acc.data<T>();
      auto b = back.data<T>();
      for (int64_t i = 0; i < acc.size(); ++i) a[i] += b[i];
    });
  }
};

struct AddNode final : Node {
  const char* name() const override { return "add"; }
  void backward(Tape& t, NodeId) override {
    for (int side = 0; side < 2; ++side) {
      if (!t.requires_grad(inputs[side])) continue;
      Tensor& acc = t.grad_buffer(inputs[side]);
      dispatch(acc.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto a = acc.data<T>();
        auto g = grad.data<T>();
        for (int64_t i = 0; i < acc.size(); ++i) a[i] += g[i];
      });
    }
  }
};

struct ScaleNode final : Node {
  double factor = 1.0;
  const char* name() const override { return "scale"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0])) return;
    Tensor& acc = t.grad_buffer(inputs[0]);
    dispatch(acc.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto a = acc.data<T>();
      auto g = grad.data<T>();
      const T f = static_cast<T>(factor);
      for (int64_t i = 0; i < acc.size(); ++i) a[i] += f * g[i];
    });
  }
};

struct MulNode final : Node {
  const char* name() const override { return "mul"; }
  void backward(Tape& t, NodeId) override {
    for (int side = 0; side < 2; ++side) {
      if (!t.requires_grad(inputs[side])) continue;
      const Tensor& other = t.value(inputs[1 - side]);
      Tensor& acc = t.grad_buffer(inputs[side]);
      dispatch(acc.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto a = acc.data<T>();
        auto g = grad.data<T>();
        auto o = other.data<T>();
        for (int64_t i = 0; i < acc.size(); ++i) a[i] += g[i] * o[i];
      });
    }
  }
};

struct SumNode final : Node {
  const char* name() const override { return "sum"; }
  void backward(Tape& t, NodeId) override {
    if (!t.requires_grad(inputs[0])) return;
    Tensor& acc = t.grad_buffer(inputs[0]);
    const double g = grad.at(0);
    dispatch(acc.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto a = acc.data<T>();
      const T gv = static_cast<T>(g);
      for (int64_t i = 0; i < acc.size(); ++i) a[i] += gv;
    });
  }
};

}  // namespace

NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias) {
  auto n = std::make_unique<Conv2dNode>();
  n->inputs = {input, kernel, bias};
  n->value = stc::conv2d(value(input), value(kernel), value(bias));
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  auto n = std::make_unique<ReluNode>();
  n->inputs = {x};
  n->value = stc::relu(value(x));
  return push(std::move(n));
}

NodeId Tape::softmax_channels(NodeId x) {
  auto n = std::make_unique<SoftmaxNode>();
  n->inputs = {x};
  n->value = stc::softmax_channels(value(x));
  return push(std::move(n));
}

NodeId Tape::pixel_map(NodeId src, std::shared_ptr<const PixelMap> map) {
  auto n = std::make_unique<PixelMapNode>();
  n->inputs = {src};
  n->map = std::move(map);
  n->value = apply_pixel_map(*n->map, value(src));
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw ShapeError("add: shape mismatch");
  auto n = std::make_unique<AddNode>();
  n->inputs = {a, b};
  n->value = Tensor::zeros(value(a).dims(), dtype_);
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto o = n->value.data<T>();
    auto x = value(a).data<T>();
    auto y = value(b).data<T>();
    for (int64_t i = 0; i < n->value.size(); ++i) o[i] = x[i] + y[i];
  });
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double s) {
  auto n = std::make_unique<ScaleNode>();
  n->inputs = {x};
  n->factor = s;
  n->value = Tensor::zeros(value(x).dims(), dtype_);
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto o = n->value.data<T>();
    auto in = value(x).data<T>();
    const T f = static_cast<T>(s);
    for (int64_t i = 0; i < n->value.size(); ++i) o[i] = f * in[i];
  });
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw ShapeError("mul: shape mismatch");
  auto n = std::make_unique<MulNode>();
  n->inputs = {a, b};
  n->value = Tensor::zeros(value(a).dims(), dtype_);
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto o = n->value.data<T>();
    auto x = value(a).data<T>();
    auto y = value(b).data<T>();
    for (int64_t i = 0; i < n->value.size(); ++i) o[i] = x[i] * y[i];
  });
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  auto n = std::make_unique<SumNode>();
  n->inputs = {x};
  double acc = dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    T s = T(0);
    for (T v : value(x).data<T>()) s += v;
    return static_cast<double>(s);
  });
  n->value = Tensor::scalar(acc, dtype_);
  return push(std::move(n));
}

void Tape::backward(NodeId root) {
  if (value(root).size() != 1) throw ContractError("backward: root must be scalar");
  grad_buffer(root).set(0, 1.0);
  for (NodeId i = root; i >= 0; --i) {
    Node& n = *nodes_[static_cast<size_t>(i)];
    if (n.grad.empty() || !n.requires_grad || n.inputs.empty()) continue;
    n.backward(*this, i);
  }
}

}  // namespace stc
