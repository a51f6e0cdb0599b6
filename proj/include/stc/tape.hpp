#pragma once

#include <memory>
#include <vector>

#include "stc/ops.hpp"
#include "stc/tensor.hpp"

namespace stc {

class Tape;
using NodeId = int32_t;

// One record on the tape: cached forward value, lazily allocated gradient,
// input ids, and a backward rule. Loss modules extend this to add their own
// operation kinds without touching the tape.
struct Node {
  Tensor value;
  Tensor grad;  // empty until touched by backward
  std::vector<NodeId> inputs;
  bool trainable = false;
  bool requires_grad = false;

  virtual ~Node() = default;
  virtual void backward(Tape&, NodeId) {}
  virtual const char* name() const { return "leaf"; }
};

// Reverse-mode tape, rebuilt per training step. Forward values are computed
// eagerly at node creation; creation order is a topological order, so the
// backward pass is a single reverse sweep visiting each node once.
class Tape {
 public:
  explicit Tape(Dtype dt = Dtype::F32) : dtype_(dt) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId push(std::unique_ptr<Node> n);

  NodeId leaf(Tensor value, bool trainable = false);
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias);
  NodeId relu(NodeId x);
  NodeId softmax_channels(NodeId x);
  NodeId pixel_map(NodeId src, std::shared_ptr<const PixelMap> map);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, double s);
  NodeId mul(NodeId a, NodeId b);
  NodeId sum(NodeId x);

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  // root must hold a scalar value.
  void backward(NodeId root);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const Tensor& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return !node(id).grad.empty(); }
  Tensor& grad_buffer(NodeId id);  // allocates zeros on first touch
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  size_t size() const { return nodes_.size(); }
  Dtype dtype() const { return dtype_; }

  std::vector<NodeId> trainable_leaves() const;

 private:
  Dtype dtype_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace stc
