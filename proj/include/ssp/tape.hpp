#pragma once

#include <optional>
#include <vector>

#include "ssp/tensor.hpp"

namespace ssp {

enum class UpsampleMode { Nearest, Bilinear };
enum class NormMode { Instance, Rms };

// Forward-only kernels. All loops are sequential with a fixed reduction
// order, so results are bit-reproducible.
namespace ops {

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias = nullptr);
Tensor upsample2x(const Tensor& input, UpsampleMode mode);
Tensor instance_norm(const Tensor& input, double eps = 1e-8);
Tensor rms_norm(const Tensor& input, double eps = 1e-8);
Tensor scale_channels(const Tensor& input, const Tensor& gains);
Tensor leaky_relu(const Tensor& input, double slope = 0.2);
Tensor matvec(const Tensor& weight, const Tensor& input, const Tensor& bias);
Tensor clamp01(const Tensor& input);

}  // namespace ops

// Reverse-mode tape over the fixed op set above. Values are computed eagerly
// at record time; backward() replays nodes in reverse order and accumulates
// into per-node gradient buffers. Single-owner: not thread safe.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(Tensor value);

  NodeId conv2d(NodeId input, NodeId kernel, std::optional<NodeId> bias = std::nullopt);
  NodeId upsample2x(NodeId input, UpsampleMode mode);
  NodeId instance_norm(NodeId input, double eps = 1e-8);
  NodeId rms_norm(NodeId input, double eps = 1e-8);
  NodeId scale_channels(NodeId input, NodeId gains);
  NodeId leaky_relu(NodeId input, double slope = 0.2);
  NodeId matvec(NodeId weight, NodeId input, NodeId bias);
  NodeId clamp01(NodeId input);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

  // Seeds d(objective)/d(value of `output`) and propagates to every leaf.
  void backward(NodeId output, const Tensor& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op { Leaf, Conv2d, Upsample, InstanceNorm, RmsNorm, ScaleChannels, LeakyRelu, Matvec, Clamp01 };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    double param = 0.0;  // eps or slope
    UpsampleMode mode = UpsampleMode::Nearest;
    Tensor value;
    Tensor grad;
  };

  NodeId push(Node n);
  void backward_node(const Node& n);

  std::vector<Node> nodes_;
};

}  // namespace ssp
