#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssp/tape.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

// Output images are [3,H,W] tensors clamped to [0,1].
using Image = Tensor;

struct LevelSpec {
  int resolution;
  std::vector<int> out_channels;  // one entry per conv layer at this level
};

struct ArchSpec {
  int d_z = 32;
  int d_w = 32;
  int const_channels = 32;
  std::vector<LevelSpec> levels = {{4, {32}}, {8, {16, 16}}, {16, {8, 8}}, {32, {8, 8}}};
  int kernel = 3;  // 3 for the random backend, 1 for the planted one
  UpsampleMode upsample = UpsampleMode::Bilinear;
  NormMode norm = NormMode::Instance;
  // Snapped to float32 so an arch loaded from disk equals the built one.
  double lrelu_slope = static_cast<double>(0.2f);
  double norm_eps = static_cast<double>(1e-8f);
  int out_channels = 3;

  int n_layers() const;
  int output_resolution() const { return levels.back().resolution; }
  // Gain vector length per styled layer = input channel count of its conv.
  std::vector<int> layer_in_channels() const;
  std::vector<int> layer_out_channels() const;
  void validate() const;
};

struct StyleSlice {
  int layer;
  int offset;
  int length;
};

struct StyleLayout {
  std::vector<StyleSlice> slices;
  int total = 0;

  static StyleLayout from_arch(const ArchSpec& arch);
};

// Concatenated per-layer channel gains, ordered coarse to fine.
struct StyleCode {
  std::vector<double> values;
  StyleLayout layout;

  Tensor slice(int layer) const;
  // Inverse of slice: (layer, channel) -> flat coordinate.
  int coord(int layer, int channel) const;
};

struct LatentVector {
  std::vector<double> values;
};

struct GeneratorWeights {
  ArchSpec arch;
  Tensor map_w1, map_b1, map_w2, map_b2;
  std::vector<Tensor> affine_w;  // per styled layer, [l_i, d_w]
  std::vector<Tensor> affine_b;  // per styled layer, [l_i]
  Tensor const_input;            // [const_channels, 4, 4]
  std::vector<Tensor> conv_kernels;
  Tensor torgb_kernel;  // [out_channels, C_last, 1, 1]
  Tensor torgb_bias;
};

// Style channels that generate one visual concept, with the image region the
// concept occupies.
struct ChannelPartition {
  int concept_id = 0;
  std::vector<std::pair<int, int>> members;  // (layer, channel)
  Tensor region;                             // [H,W] in {0,1}

  bool contains(int layer, int channel) const;
};

// Planted label: mean of one RGB channel over the concept region vs a
// threshold, mapped to {+1,-1}.
struct AttributeSpec {
  int id = 0;
  std::string name;
  int partition_index = 0;
  int rgb_channel = 0;
  double threshold = 0.5;
};

int planted_label(const AttributeSpec& attr, const ChannelPartition& part, const Image& img);

struct PlantedGenerator {
  GeneratorWeights weights;
  std::vector<ChannelPartition> partitions;
  std::vector<AttributeSpec> attributes;
};

std::vector<double> map_latent(const GeneratorWeights& w, const LatentVector& z);
StyleCode style_from_w(const GeneratorWeights& w, const std::vector<double>& wvec);

struct SynthesisTrace {
  Tape::NodeId image = -1;
  std::vector<Tape::NodeId> gain_leaves;      // one per styled layer
  std::vector<Tape::NodeId> post_activation;  // feature maps after each leaky_relu
};

SynthesisTrace synthesize_traced(const GeneratorWeights& w, const StyleCode& s, Tape& tape);
Image synthesize(const GeneratorWeights& w, const StyleCode& s);

struct GenerateResult {
  std::vector<double> w;
  StyleCode s;
  Image image;
};

GenerateResult generate(const GeneratorWeights& w, const LatentVector& z);

GeneratorWeights build_random_generator(std::uint64_t seed, const ArchSpec& arch = ArchSpec{});
PlantedGenerator build_planted_generator(std::uint64_t seed);

Tensor segmentation_mask(const ChannelPartition& partition);

}  // namespace ssp
