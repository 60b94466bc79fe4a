#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssp/metrics.hpp"
#include "ssp/rng.hpp"
#include "ssp/tensor.hpp"

using namespace ssp;

namespace {

Tensor const_image(double v, int h = 16, int w = 16) {
  Tensor t({3, h, w});
  for (double& x : t.data) x = v;
  return t;
}

Tensor random_image(Rng& rng, int h = 16, int w = 16) {
  Tensor t({3, h, w});
  for (double& x : t.data) x = 0.5 + 0.2 * rng.next_normal();
  return t;
}

}  // namespace

TEST_CASE("mse closed forms") {
  CHECK(mse(const_image(0.3), const_image(0.3)) == 0.0);
  CHECK(mse(const_image(0.0), const_image(1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mse(const_image(0.0), const_image(0.5)) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(mse(const_image(0.0), const_image(0.0, 8, 8)), TensorError);
}

TEST_CASE("mse symmetry and quadratic scaling") {
  Rng rng(3);
  Tensor a = random_image(rng), b = random_image(rng);
  CHECK(mse(a, b) == mse(b, a));

  Tensor b2 = a;
  for (std::size_t i = 0; i < a.numel(); ++i) b2.data[i] = a.data[i] + 2.0 * (b.data[i] - a.data[i]);
  CHECK(mse(a, b2) == doctest::Approx(4.0 * mse(a, b)).epsilon(1e-12));
}

TEST_CASE("masked_mse restricts to the selected region") {
  Tensor a = const_image(0.0);
  Tensor b = const_image(0.0);
  Tensor mask({16, 16});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) mask.data[static_cast<std::size_t>(y) * 16 + x] = 1.0;
  // Difference supported only inside the mask.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x) b.at3(c, y, x) = 0.4;
  CHECK(masked_mse(a, b, mask, MaskRegion::Outside) == 0.0);
  CHECK(masked_mse(a, b, mask, MaskRegion::Inside) == doctest::Approx(0.16).epsilon(1e-12));

  CHECK(masked_mse(a, a, mask, MaskRegion::Inside) == 0.0);
  Tensor c1 = const_image(0.0), c2 = const_image(0.1);
  CHECK(masked_mse(c1, c2, mask, MaskRegion::Inside) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(masked_mse(c1, c2, mask, MaskRegion::Outside) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("masked_mse rejects empty regions and recombines to mse") {
  Tensor all_ones({16, 16});
  for (double& v : all_ones.data) v = 1.0;
  Tensor a = const_image(0.2), b = const_image(0.7);
  CHECK_THROWS_AS(masked_mse(a, b, all_ones, MaskRegion::Outside), TensorError);

  Rng rng(4);
  Tensor x = random_image(rng), y = random_image(rng);
  Tensor mask({16, 16});
  std::size_t inside = 0;
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask.data[i] = (rng.next_u64() & 1) ? 1.0 : 0.0;
    inside += mask.data[i] == 1.0;
  }
  const std::size_t outside = mask.numel() - inside;
  const double combined = (masked_mse(x, y, mask, MaskRegion::Inside) * static_cast<double>(inside) +
                           masked_mse(x, y, mask, MaskRegion::Outside) * static_cast<double>(outside)) /
                          static_cast<double>(mask.numel());
  CHECK(combined == doctest::Approx(mse(x, y)).epsilon(1e-12));
}

TEST_CASE("ssim identity, symmetry, and constant-image closed form") {
  Rng rng(5);
  Tensor a = random_image(rng, 20, 20);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);

  Tensor b = random_image(rng, 20, 20);
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) < 1.0);

  // Constant images: variance terms vanish, value reduces to
  // (2*mu_a*mu_b + C1) / (mu_a^2 + mu_b^2 + C1); zeros vs ones gives C1/(1+C1).
  constexpr double c1 = 1e-4;
  CHECK(ssim(const_image(0.0), const_image(1.0)) ==
        doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
}

TEST_CASE("ssim rejects images below the window size") {
  CHECK_THROWS_AS(ssim(const_image(0.5, 8, 8), const_image(0.5, 8, 8)), TensorError);
}
