#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major tensor. Arithmetic runs in double; persisted values are
// 32-bit floats, so builders that produce serializable tensors round through
// float first (see round_to_f32).
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
    data.assign(numel_of(dims), 0.0);
  }
  Tensor(std::vector<int> d, std::vector<double> v) : dims(std::move(d)), data(std::move(v)) {
    if (data.size() != numel_of(dims))
      throw TensorError("tensor: data length " + std::to_string(data.size()) +
                        " does not match dims product " + std::to_string(numel_of(dims)));
  }

  static std::size_t numel_of(const std::vector<int>& d) {
    std::size_t n = 1;
    for (int x : d) {
      if (x <= 0) throw TensorError("tensor: non-positive dim");
      n *= static_cast<std::size_t>(x);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }

  // [C,H,W] indexing
  double& at3(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * dims[1] + y) * dims[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * dims[1] + y) * dims[2] + x];
  }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.dims); }

// Snap every entry to its nearest float32 value.
inline void round_to_f32(Tensor& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ssp
