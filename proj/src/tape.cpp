#include "ssp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ssp {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

void require_chw(const Tensor& t, const char* who) {
  require(t.rank() == 3, std::string(who) + ": expected rank-3 [C,H,W] tensor, got rank " +
                             std::to_string(t.rank()));
}

}  // namespace

namespace ops {

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias) {
  require_chw(input, "conv2d input");
  require(kernel.rank() == 4, "conv2d kernel: expected rank-4 [Cout,Cin,k,k]");
  const int cin = input.dims[0], h = input.dims[1], w = input.dims[2];
  const int cout = kernel.dims[0], k = kernel.dims[2];
  require(kernel.dims[1] == cin,
          "conv2d: kernel input-channel axis is " + std::to_string(kernel.dims[1]) +
              " but input has " + std::to_string(cin) + " channels");
  require(kernel.dims[3] == k && (k == 1 || k == 3), "conv2d: kernel must be square 1x1 or 3x3");
  if (bias) require(bias->rank() == 1 && bias->dims[0] == cout, "conv2d: bias axis mismatch");

  const int p = k / 2;
  Tensor out({cout, h, w});
  for (int o = 0; o < cout; ++o) {
    const double b = bias ? bias->at(o) : 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = b;
        for (int c = 0; c < cin; ++c) {
          for (int dy = 0; dy < k; ++dy) {
            const int iy = y + dy - p;
            if (iy < 0 || iy >= h) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int ix = x + dx - p;
              if (ix < 0 || ix >= w) continue;
              acc += input.at3(c, iy, ix) *
                     kernel.data[((static_cast<std::size_t>(o) * cin + c) * k + dy) * k + dx];
            }
          }
        }
        out.at3(o, y, x) = acc;
      }
    }
  }
  return out;
}

Tensor upsample2x(const Tensor& input, UpsampleMode mode) {
  require_chw(input, "upsample2x");
  const int c = input.dims[0], h = input.dims[1], w = input.dims[2];
  Tensor out({c, 2 * h, 2 * w});
  if (mode == UpsampleMode::Nearest) {
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x) out.at3(ch, y, x) = input.at3(ch, y / 2, x / 2);
    return out;
  }
  // bilinear, align-corners false: source coord = (o + 0.5)/2 - 0.5
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < 2 * h; ++y) {
      const double sy = 0.5 * (y + 0.5) - 0.5;
      int y0 = static_cast<int>(std::floor(sy));
      const double wy = sy - y0;
      const int y1 = std::min(std::max(y0 + 1, 0), h - 1);
      y0 = std::min(std::max(y0, 0), h - 1);
      for (int x = 0; x < 2 * w; ++x) {
        const double sx = 0.5 * (x + 0.5) - 0.5;
        int x0 = static_cast<int>(std::floor(sx));
        const double wx = sx - x0;
        const int x1 = std::min(std::max(x0 + 1, 0), w - 1);
        x0 = std::min(std::max(x0, 0), w - 1);
        out.at3(ch, y, x) = (1 - wy) * ((1 - wx) * input.at3(ch, y0, x0) + wx * input.at3(ch, y0, x1)) +
                            wy * ((1 - wx) * input.at3(ch, y1, x0) + wx * input.at3(ch, y1, x1));
      }
    }
  }
  return out;
}

Tensor instance_norm(const Tensor& input, double eps) {
  require_chw(input, "instance_norm");
  require(eps > 0, "instance_norm: eps must be positive");
  const int c = input.dims[0], h = input.dims[1], w = input.dims[2];
  const double n = static_cast<double>(h) * w;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) mean += input.at3(ch, y, x);
    mean /= n;
    double var = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = input.at3(ch, y, x) - mean;
        var += d * d;
      }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at3(ch, y, x) = (input.at3(ch, y, x) - mean) * inv;
  }
  return out;
}

Tensor rms_norm(const Tensor& input, double eps) {
  require_chw(input, "rms_norm");
  require(eps > 0, "rms_norm: eps must be positive");
  const int c = input.dims[0], h = input.dims[1], w = input.dims[2];
  const double n = static_cast<double>(h) * w;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double ms = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ms += input.at3(ch, y, x) * input.at3(ch, y, x);
    const double inv = 1.0 / std::sqrt(ms / n + eps);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at3(ch, y, x) = input.at3(ch, y, x) * inv;
  }
  return out;
}

Tensor scale_channels(const Tensor& input, const Tensor& gains) {
  require_chw(input, "scale_channels");
  require(gains.rank() == 1 && gains.dims[0] == input.dims[0],
          "scale_channels: gains axis length " +
              std::to_string(gains.rank() == 1 ? gains.dims[0] : -1) + " vs " +
              std::to_string(input.dims[0]) + " channels");
  Tensor out = input;
  const int c = input.dims[0];
  const std::size_t hw = static_cast<std::size_t>(input.dims[1]) * input.dims[2];
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out.data[ch * hw + i] *= gains.at(ch);
  return out;
}

Tensor leaky_relu(const Tensor& input, double slope) {
  require(slope > 0 && slope < 1, "leaky_relu: slope must lie in (0,1)");
  Tensor out = input;
  for (double& v : out.data)
    if (v < 0) v *= slope;
  return out;
}

Tensor matvec(const Tensor& weight, const Tensor& input, const Tensor& bias) {
  require(weight.rank() == 2, "matvec: weight must be rank 2");
  const int m = weight.dims[0], n = weight.dims[1];
  require(input.rank() == 1 && input.dims[0] == n,
          "matvec: input axis " + std::to_string(input.rank() == 1 ? input.dims[0] : -1) +
              " vs weight columns " + std::to_string(n));
  require(bias.rank() == 1 && bias.dims[0] == m, "matvec: bias axis mismatch");
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double acc = bias.at(i);
    for (int j = 0; j < n; ++j) acc += weight.data[static_cast<std::size_t>(i) * n + j] * input.at(j);
    out.at(i) = acc;
  }
  return out;
}

Tensor clamp01(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = std::min(1.0, std::max(0.0, v));
  return out;
}

}  // namespace ops

Tape::NodeId Tape::push(Node n) {
  n.grad = Tensor(n.value.dims);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::conv2d(NodeId input, NodeId kernel, std::optional<NodeId> bias) {
  Node n;
  n.op = Op::Conv2d;
  n.a = input;
  n.b = kernel;
  n.c = bias ? *bias : -1;
  n.value = ops::conv2d(nodes_[input].value, nodes_[kernel].value,
                        bias ? &nodes_[*bias].value : nullptr);
  return push(std::move(n));
}

Tape::NodeId Tape::upsample2x(NodeId input, UpsampleMode mode) {
  Node n;
  n.op = Op::Upsample;
  n.a = input;
  n.mode = mode;
  n.value = ops::upsample2x(nodes_[input].value, mode);
  return push(std::move(n));
}

Tape::NodeId Tape::instance_norm(NodeId input, double eps) {
  Node n;
  n.op = Op::InstanceNorm;
  n.a = input;
  n.param = eps;
  n.value = ops::instance_norm(nodes_[input].value, eps);
  return push(std::move(n));
}

Tape::NodeId Tape::rms_norm(NodeId input, double eps) {
  Node n;
  n.op = Op::RmsNorm;
  n.a = input;
  n.param = eps;
  n.value = ops::rms_norm(nodes_[input].value, eps);
  return push(std::move(n));
}

Tape::NodeId Tape::scale_channels(NodeId input, NodeId gains) {
  Node n;
  n.op = Op::ScaleChannels;
  n.a = input;
  n.b = gains;
  n.value = ops::scale_channels(nodes_[input].value, nodes_[gains].value);
  return push(std::move(n));
}

Tape::NodeId Tape::leaky_relu(NodeId input, double slope) {
  Node n;
  n.op = Op::LeakyRelu;
  n.a = input;
  n.param = slope;
  n.value = ops::leaky_relu(nodes_[input].value, slope);
  return push(std::move(n));
}

Tape::NodeId Tape::matvec(NodeId weight, NodeId input, NodeId bias) {
  Node n;
  n.op = Op::Matvec;
  n.a = weight;
  n.b = input;
  n.c = bias;
  n.value = ops::matvec(nodes_[weight].value, nodes_[input].value, nodes_[bias].value);
  return push(std::move(n));
}

Tape::NodeId Tape::clamp01(NodeId input) {
  Node n;
  n.op = Op::Clamp01;
  n.a = input;
  n.value = ops::clamp01(nodes_[input].value);
  return push(std::move(n));
}

void Tape::backward(NodeId output, const Tensor& seed) {
  require(output >= 0 && output < static_cast<NodeId>(nodes_.size()), "backward: bad node id");
  require(seed.dims == nodes_[output].value.dims, "backward: seed dims mismatch");
  for (auto& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  nodes_[output].grad = seed;
  for (int i = output; i >= 0; --i) backward_node(nodes_[i]);
}

void Tape::backward_node(const Node& n) {
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Conv2d: {
      const Tensor& in = nodes_[n.a].value;
      const Tensor& ker = nodes_[n.b].value;
      Tensor& gin = nodes_[n.a].grad;
      Tensor& gker = nodes_[n.b].grad;
      const int cin = in.dims[0], h = in.dims[1], w = in.dims[2];
      const int cout = ker.dims[0], k = ker.dims[2], p = k / 2;
      for (int o = 0; o < cout; ++o) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double go = g.at3(o, y, x);
            if (n.c >= 0) nodes_[n.c].grad.at(o) += go;
            for (int c = 0; c < cin; ++c) {
              for (int dy = 0; dy < k; ++dy) {
                const int iy = y + dy - p;
                if (iy < 0 || iy >= h) continue;
                for (int dx = 0; dx < k; ++dx) {
                  const int ix = x + dx - p;
                  if (ix < 0 || ix >= w) continue;
                  const std::size_t ki = ((static_cast<std::size_t>(o) * cin + c) * k + dy) * k + dx;
                  gin.at3(c, iy, ix) += ker.data[ki] * go;
                  gker.data[ki] += in.at3(c, iy, ix) * go;
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::Upsample: {
      const Tensor& in = nodes_[n.a].value;
      Tensor& gin = nodes_[n.a].grad;
      const int c = in.dims[0], h = in.dims[1], w = in.dims[2];
      if (n.mode == UpsampleMode::Nearest) {
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) gin.at3(ch, y / 2, x / 2) += g.at3(ch, y, x);
      } else {
        for (int ch = 0; ch < c; ++ch) {
          for (int y = 0; y < 2 * h; ++y) {
            const double sy = 0.5 * (y + 0.5) - 0.5;
            int y0 = static_cast<int>(std::floor(sy));
            const double wy = sy - y0;
            const int y1 = std::min(std::max(y0 + 1, 0), h - 1);
            y0 = std::min(std::max(y0, 0), h - 1);
            for (int x = 0; x < 2 * w; ++x) {
              const double sx = 0.5 * (x + 0.5) - 0.5;
              int x0 = static_cast<int>(std::floor(sx));
              const double wx = sx - x0;
              const int x1 = std::min(std::max(x0 + 1, 0), w - 1);
              x0 = std::min(std::max(x0, 0), w - 1);
              const double go = g.at3(ch, y, x);
              gin.at3(ch, y0, x0) += (1 - wy) * (1 - wx) * go;
              gin.at3(ch, y0, x1) += (1 - wy) * wx * go;
              gin.at3(ch, y1, x0) += wy * (1 - wx) * go;
              gin.at3(ch, y1, x1) += wy * wx * go;
            }
          }
        }
      }
      break;
    }
    case Op::InstanceNorm: {
      const Tensor& in = nodes_[n.a].value;
      const Tensor& y = n.value;
      Tensor& gin = nodes_[n.a].grad;
      const int c = in.dims[0];
      const std::size_t hw = static_cast<std::size_t>(in.dims[1]) * in.dims[2];
      const double cnt = static_cast<double>(hw);
      for (int ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t i = 0; i < hw; ++i) mean += in.data[ch * hw + i];
        mean /= cnt;
        double var = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = in.data[ch * hw + i] - mean;
          var += d * d;
        }
        var /= cnt;
        const double inv = 1.0 / std::sqrt(var + n.param);
        double gmean = 0.0, gydot = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          gmean += g.data[ch * hw + i];
          gydot += g.data[ch * hw + i] * y.data[ch * hw + i];
        }
        gmean /= cnt;
        gydot /= cnt;
        for (std::size_t i = 0; i < hw; ++i)
          gin.data[ch * hw + i] += inv * (g.data[ch * hw + i] - gmean - y.data[ch * hw + i] * gydot);
      }
      break;
    }
    case Op::RmsNorm: {
      const Tensor& in = nodes_[n.a].value;
      Tensor& gin = nodes_[n.a].grad;
      const int c = in.dims[0];
      const std::size_t hw = static_cast<std::size_t>(in.dims[1]) * in.dims[2];
      const double cnt = static_cast<double>(hw);
      for (int ch = 0; ch < c; ++ch) {
        double ms = 0.0, gxdot = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          ms += in.data[ch * hw + i] * in.data[ch * hw + i];
          gxdot += g.data[ch * hw + i] * in.data[ch * hw + i];
        }
        const double r2 = ms / cnt + n.param;
        const double r = std::sqrt(r2);
        for (std::size_t i = 0; i < hw; ++i)
          gin.data[ch * hw + i] += g.data[ch * hw + i] / r - in.data[ch * hw + i] * gxdot / (cnt * r2 * r);
      }
      break;
    }
    case Op::ScaleChannels: {
      const Tensor& in = nodes_[n.a].value;
      const Tensor& gains = nodes_[n.b].value;
      Tensor& gin = nodes_[n.a].grad;
      Tensor& ggains = nodes_[n.b].grad;
      const int c = in.dims[0];
      const std::size_t hw = static_cast<std::size_t>(in.dims[1]) * in.dims[2];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          gin.data[ch * hw + i] += g.data[ch * hw + i] * gains.at(ch);
          acc += g.data[ch * hw + i] * in.data[ch * hw + i];
        }
        ggains.at(ch) += acc;
      }
      break;
    }
    case Op::LeakyRelu: {
      const Tensor& in = nodes_[n.a].value;
      Tensor& gin = nodes_[n.a].grad;
      for (std::size_t i = 0; i < in.numel(); ++i)
        gin.data[i] += g.data[i] * (in.data[i] > 0 ? 1.0 : n.param);
      break;
    }
    case Op::Matvec: {
      const Tensor& wgt = nodes_[n.a].value;
      const Tensor& in = nodes_[n.b].value;
      Tensor& gw = nodes_[n.a].grad;
      Tensor& gin = nodes_[n.b].grad;
      Tensor& gb = nodes_[n.c].grad;
      const int m = wgt.dims[0], k = wgt.dims[1];
      for (int i = 0; i < m; ++i) {
        const double gi = g.at(i);
        gb.at(i) += gi;
        for (int j = 0; j < k; ++j) {
          gw.data[static_cast<std::size_t>(i) * k + j] += gi * in.at(j);
          gin.at(j) += gi * wgt.data[static_cast<std::size_t>(i) * k + j];
        }
      }
      break;
    }
    case Op::Clamp01: {
      const Tensor& in = nodes_[n.a].value;
      Tensor& gin = nodes_[n.a].grad;
      for (std::size_t i = 0; i < in.numel(); ++i)
        if (in.data[i] >= 0.0 && in.data[i] <= 1.0) gin.data[i] += g.data[i];
      break;
    }
  }
}

}  // namespace ssp
