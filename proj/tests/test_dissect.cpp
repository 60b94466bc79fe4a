#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssp/dissect.hpp"
#include "ssp/rng.hpp"
#include "ssp/sampling.hpp"
#include "ssp/stylegen.hpp"

using namespace ssp;

namespace {

Tensor quadrant_mask(int res, int g) {
  Tensor m({res, res});
  const int y0 = (g / 2) * (res / 2), x0 = (g % 2) * (res / 2);
  for (int y = 0; y < res / 2; ++y)
    for (int x = 0; x < res / 2; ++x) m.data[static_cast<std::size_t>(y0 + y) * res + (x0 + x)] = 1.0;
  return m;
}

std::size_t ones(const Tensor& m) {
  std::size_t n = 0;
  for (double v : m.data) n += v > 0.5;
  return n;
}

}  // namespace

TEST_CASE("binarize_topk keeps the top fraction, ties included") {
  // 32x32, fraction 0.05 -> k = floor(51.2) = 51.
  Tensor fmap({32, 32});
  for (std::size_t i = 0; i < fmap.numel(); ++i) fmap.data[i] = static_cast<double>(i);
  Tensor mask = binarize_topk(fmap, 0.05, 32);
  CHECK(ones(mask) == 51);
  for (std::size_t i = 0; i < fmap.numel(); ++i)
    CHECK(mask.data[i] == (i >= 1024 - 51 ? 1.0 : 0.0));

  // Strictly increasing 4x4 map at its own resolution: k = max(1, 0) = 1.
  Tensor small({4, 4});
  for (std::size_t i = 0; i < 16; ++i) small.data[i] = static_cast<double>(i);
  Tensor single = binarize_topk(small, 0.05, 4);
  CHECK(ones(single) == 1);
  CHECK(single.data[15] == 1.0);

  // Constant map: every value ties the threshold.
  Tensor flat({8, 8});
  for (double& v : flat.data) v = 0.3;
  CHECK(ones(binarize_topk(flat, 0.05, 8)) == 64);
}

TEST_CASE("binarize_topk upsamples to the target resolution first") {
  Tensor fmap({4, 4});
  fmap.data[5] = 1.0;  // one hot cell
  Tensor mask = binarize_topk(fmap, 0.05, 16, UpsampleMode::Nearest);
  CHECK(mask.dims == std::vector<int>{16, 16});
  // 4x upsampled hot cell covers 16 pixels; k = floor(0.05*256) = 12, ties
  // at the hot value keep all 16.
  CHECK(ones(mask) == 16);
  CHECK_THROWS_AS(binarize_topk(fmap, 0.05, 24), TensorError);
  CHECK_THROWS_AS(binarize_topk(fmap, 0.0, 4), TensorError);
  CHECK_THROWS_AS(binarize_topk(fmap, 1.0, 4), TensorError);
}

TEST_CASE("binarize_topk is invariant under strictly increasing transforms") {
  Rng rng(9);
  Tensor fmap({32, 32});
  for (double& v : fmap.data) v = rng.next_normal();
  Tensor base = binarize_topk(fmap, 0.05, 32);
  Tensor mapped = fmap;
  for (double& v : mapped.data) v = std::exp(2.0 * v) + 1.0;
  CHECK(binarize_topk(mapped, 0.05, 32).data == base.data);
}

TEST_CASE("iou set arithmetic") {
  Tensor q = quadrant_mask(32, 0);
  CHECK(iou(q, q) == 1.0);
  CHECK(iou(q, quadrant_mask(32, 3)) == 0.0);

  Tensor left({32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) left.data[static_cast<std::size_t>(y) * 32 + x] = 1.0;
  CHECK(iou(q, left) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(iou(q, left) == iou(left, q));

  Tensor empty({32, 32});
  CHECK(iou(empty, empty) == 0.0);
  CHECK_THROWS_AS(iou(q, Tensor({16, 16})), TensorError);
}

TEST_CASE("planted dissection recovers the channel partition at the final level") {
  PlantedGenerator pg = build_planted_generator(7);
  std::vector<LatentVector> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(sample_latent(pg.weights.arch.d_z, 99, i));

  DissectionReport report = dissect_generator(pg.weights, samples, pg.partitions);
  CHECK(report.fraction == 0.05);
  for (const auto& ch : report.channels)
    for (double v : ch.iou_per_concept) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

  const int last = pg.weights.arch.n_layers() - 1;
  const int c_last = pg.weights.arch.layer_out_channels().back();
  const int per_group = c_last / 4;
  for (int g = 0; g < 4; ++g) {
    for (int ch = 0; ch < c_last; ++ch) {
      const double v = report.lookup(last, ch, g);
      if (ch / per_group == g)
        CHECK(v == 1.0);
      else
        CHECK(v < 1.0);
    }
    // Every in-group channel outranks every out-of-group channel at the
    // final level.
    double worst_in = 1.0, best_out = 0.0;
    for (int ch = 0; ch < c_last; ++ch) {
      const double v = report.lookup(last, ch, g);
      if (ch / per_group == g)
        worst_in = std::min(worst_in, v);
      else
        best_out = std::max(best_out, v);
    }
    CHECK(worst_in > best_out);
  }
}

TEST_CASE("single-sample dissection equals the averaged single entry") {
  PlantedGenerator pg = build_planted_generator(7);
  std::vector<LatentVector> one = {sample_latent(pg.weights.arch.d_z, 99, 0)};
  DissectionReport a = dissect_generator(pg.weights, one, pg.partitions);
  DissectionReport b = dissect_generator(pg.weights, one, pg.partitions);
  REQUIRE(a.channels.size() == b.channels.size());
  for (std::size_t i = 0; i < a.channels.size(); ++i)
    CHECK(a.channels[i].iou_per_concept == b.channels[i].iou_per_concept);
  CHECK(a.ranking == b.ranking);
}

TEST_CASE("ranking is sorted by descending IoU") {
  PlantedGenerator pg = build_planted_generator(7);
  std::vector<LatentVector> samples = {sample_latent(pg.weights.arch.d_z, 99, 1)};
  DissectionReport report = dissect_generator(pg.weights, samples, pg.partitions);
  for (std::size_t k = 0; k < report.ranking.size(); ++k) {
    double prev = 2.0;
    for (const auto& [layer, ch] : report.ranking[k]) {
      const double v = report.lookup(layer, ch, static_cast<int>(k));
      CHECK(v <= prev);
      prev = v;
    }
  }
}
