#pragma once

#include "ssp/tensor.hpp"

namespace ssp {

enum class MaskRegion { Inside, Outside };

struct MetricsRow {
  double mse = 0.0;
  double masked_mse = 0.0;
  double ssim = 0.0;
};

double mse(const Tensor& a, const Tensor& b);

// Mean squared difference restricted to mask==1 (Inside) or mask==0 (Outside).
// The mask is [H,W] and applies to every channel.
double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask, MaskRegion region);

// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03, L=1,
// valid windows only, averaged over channels.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace ssp
