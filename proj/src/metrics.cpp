#include "ssp/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ssp {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require(a.dims == b.dims, "mse: image dims mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask, MaskRegion region) {
  require(a.dims == b.dims, "masked_mse: image dims mismatch");
  require(a.rank() == 3, "masked_mse: expected [C,H,W] images");
  require(mask.rank() == 2 && mask.dims[0] == a.dims[1] && mask.dims[1] == a.dims[2],
          "masked_mse: mask dims mismatch");
  const int c = a.dims[0], h = a.dims[1], w = a.dims[2];
  const bool want_inside = region == MaskRegion::Inside;
  double acc = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool inside = mask.data[static_cast<std::size_t>(y) * w + x] > 0.5;
      if (inside != want_inside) continue;
      for (int ch = 0; ch < c; ++ch) {
        const double d = a.at3(ch, y, x) - b.at3(ch, y, x);
        acc += d * d;
      }
      count += static_cast<std::size_t>(c);
    }
  require(count > 0, "masked_mse: selected region is empty");
  return acc / static_cast<double>(count);
}

double ssim(const Tensor& a, const Tensor& b) {
  require(a.dims == b.dims, "ssim: image dims mismatch");
  require(a.rank() == 3, "ssim: expected [C,H,W] images");
  const int c = a.dims[0], h = a.dims[1], w = a.dims[2];
  constexpr int win = 11;
  require(h >= win && w >= win, "ssim: image smaller than 11x11 window");

  // 11x11 Gaussian, sigma 1.5, normalized to sum 1.
  double kernel[win][win];
  double ksum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5.0, dx = j - 5.0;
      kernel[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      ksum += kernel[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  double total = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int y = 0; y + win <= h; ++y) {
      for (int x = 0; x + win <= w; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double va = a.at3(ch, y + i, x + j);
            const double vb = b.at3(ch, y + i, x + j);
            const double k = kernel[i][j];
            const double vab = va * vb;
            ma += k * va;
            mb += k * vb;
            maa += k * va * va;
            mbb += k * vb * vb;
            mab += k * vab;
          }
        // Squares go through locals so the expression stays symmetric in
        // (a, b) even when the compiler contracts multiply-adds.
        const double ma2 = ma * ma, mb2 = mb * mb, mamb = ma * mb;
        const double va = maa - ma2;
        const double vb = mbb - mb2;
        const double cov = mab - mamb;
        acc += ((2 * mamb + c1) * (2 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += acc / static_cast<double>(count);
  }
  return total / c;
}

}  // namespace ssp
