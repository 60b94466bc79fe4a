#pragma once

#include <vector>

#include "ssp/stylegen.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

// Threshold a feature map at its top-`fraction` activations. The map is first
// upsampled (2x steps) to `target_res`; ties at the threshold are included,
// so the result has at least k = max(1, floor(fraction*H*W)) ones.
Tensor binarize_topk(const Tensor& fmap, double fraction, int target_res,
                     UpsampleMode mode = UpsampleMode::Bilinear);

// |a AND b| / |a OR b|; 0 when both masks are empty.
double iou(const Tensor& a, const Tensor& b);

struct ChannelIou {
  int layer = 0;
  int channel = 0;
  std::vector<double> iou_per_concept;  // averaged over samples
};

struct DissectionReport {
  double fraction = 0.0;
  std::vector<ChannelIou> channels;
  // Per concept: (layer, channel) sorted by descending IoU.
  std::vector<std::vector<std::pair<int, int>>> ranking;

  double lookup(int layer, int channel, int concept_id) const;
};

DissectionReport dissect_generator(const GeneratorWeights& weights,
                                   const std::vector<LatentVector>& samples,
                                   const std::vector<ChannelPartition>& concepts,
                                   double fraction = 0.05,
                                   UpsampleMode upsample = UpsampleMode::Bilinear);

}  // namespace ssp
