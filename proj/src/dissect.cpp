#include "ssp/dissect.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ssp {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

}  // namespace

Tensor binarize_topk(const Tensor& fmap, double fraction, int target_res, UpsampleMode mode) {
  require(fmap.rank() == 2, "binarize_topk: expected [H,W] feature map");
  require(fraction > 0 && fraction < 1, "binarize_topk: fraction must lie in (0,1)");
  Tensor up({1, fmap.dims[0], fmap.dims[1]}, fmap.data);
  while (up.dims[1] < target_res) up = ops::upsample2x(up, mode);
  require(up.dims[1] == target_res && up.dims[2] == target_res,
          "binarize_topk: feature map resolution does not reach target by 2x steps");

  const std::size_t n = up.numel();
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * n)));
  std::vector<double> sorted(up.data);
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(), std::greater<double>());
  const double threshold = sorted[k - 1];

  Tensor mask({target_res, target_res});
  for (std::size_t i = 0; i < n; ++i) mask.data[i] = up.data[i] >= threshold ? 1.0 : 0.0;
  return mask;
}

double iou(const Tensor& a, const Tensor& b) {
  require(a.dims == b.dims, "iou: mask dims mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const bool va = a.data[i] > 0.5, vb = b.data[i] > 0.5;
    inter += va && vb;
    uni += va || vb;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double DissectionReport::lookup(int layer, int channel, int concept_id) const {
  for (const auto& ch : channels)
    if (ch.layer == layer && ch.channel == channel) return ch.iou_per_concept.at(concept_id);
  throw TensorError("dissection report: unknown (layer, channel)");
}

DissectionReport dissect_generator(const GeneratorWeights& weights,
                                   const std::vector<LatentVector>& samples,
                                   const std::vector<ChannelPartition>& concepts,
                                   double fraction, UpsampleMode upsample) {
  require(!samples.empty(), "dissect_generator: need at least one sample");
  const int res = weights.arch.output_resolution();

  DissectionReport report;
  report.fraction = fraction;

  bool first = true;
  for (const auto& z : samples) {
    Tape tape;
    const auto wvec = map_latent(weights, z);
    const StyleCode s = style_from_w(weights, wvec);
    const SynthesisTrace trace = synthesize_traced(weights, s, tape);

    std::size_t slot = 0;
    for (std::size_t layer = 0; layer < trace.post_activation.size(); ++layer) {
      const Tensor& fmaps = tape.value(trace.post_activation[layer]);
      const int c = fmaps.dims[0], h = fmaps.dims[1], w = fmaps.dims[2];
      for (int ch = 0; ch < c; ++ch) {
        Tensor map2d({h, w});
        std::copy(fmaps.data.begin() + static_cast<std::size_t>(ch) * h * w,
                  fmaps.data.begin() + static_cast<std::size_t>(ch + 1) * h * w, map2d.data.begin());
        const Tensor bin = binarize_topk(map2d, fraction, res, upsample);
        if (first) {
          ChannelIou entry;
          entry.layer = static_cast<int>(layer);
          entry.channel = ch;
          entry.iou_per_concept.assign(concepts.size(), 0.0);
          report.channels.push_back(std::move(entry));
        }
        for (std::size_t k = 0; k < concepts.size(); ++k)
          report.channels[slot].iou_per_concept[k] += iou(bin, concepts[k].region);
        ++slot;
      }
    }
    first = false;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (auto& ch : report.channels)
    for (double& v : ch.iou_per_concept) v *= inv;

  report.ranking.resize(concepts.size());
  for (std::size_t k = 0; k < concepts.size(); ++k) {
    std::vector<std::size_t> order(report.channels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return report.channels[a].iou_per_concept[k] > report.channels[b].iou_per_concept[k];
    });
    for (std::size_t i : order)
      report.ranking[k].emplace_back(report.channels[i].layer, report.channels[i].channel);
  }
  return report;
}

}  // namespace ssp
