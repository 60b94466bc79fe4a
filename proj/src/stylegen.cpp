#include "ssp/stylegen.hpp"

#include <cmath>
#include <stdexcept>

#include "ssp/rng.hpp"

namespace ssp {

int ArchSpec::n_layers() const {
  int n = 0;
  for (const auto& lv : levels) n += static_cast<int>(lv.out_channels.size());
  return n;
}

std::vector<int> ArchSpec::layer_in_channels() const {
  std::vector<int> in;
  int prev = const_channels;
  for (const auto& lv : levels)
    for (int c : lv.out_channels) {
      in.push_back(prev);
      prev = c;
    }
  return in;
}

std::vector<int> ArchSpec::layer_out_channels() const {
  std::vector<int> out;
  for (const auto& lv : levels)
    for (int c : lv.out_channels) out.push_back(c);
  return out;
}

void ArchSpec::validate() const {
  if (levels.empty()) throw TensorError("arch: no levels");
  if (levels.front().resolution != 4) throw TensorError("arch: first level resolution must be 4");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i].resolution != 2 * levels[i - 1].resolution)
      throw TensorError("arch: resolutions must double between levels");
  if (kernel != 1 && kernel != 3) throw TensorError("arch: kernel must be 1 or 3");
  for (const auto& lv : levels)
    if (lv.out_channels.empty()) throw TensorError("arch: level without conv layers");
}

StyleLayout StyleLayout::from_arch(const ArchSpec& arch) {
  StyleLayout layout;
  int offset = 0, layer = 0;
  for (int l : arch.layer_in_channels()) {
    layout.slices.push_back({layer++, offset, l});
    offset += l;
  }
  layout.total = offset;
  return layout;
}

Tensor StyleCode::slice(int layer) const {
  const StyleSlice& sl = layout.slices.at(layer);
  Tensor t({sl.length});
  for (int i = 0; i < sl.length; ++i) t.at(i) = values[sl.offset + i];
  return t;
}

int StyleCode::coord(int layer, int channel) const {
  const StyleSlice& sl = layout.slices.at(layer);
  if (channel < 0 || channel >= sl.length) throw TensorError("style: channel out of range");
  return sl.offset + channel;
}

bool ChannelPartition::contains(int layer, int channel) const {
  for (const auto& [l, c] : members)
    if (l == layer && c == channel) return true;
  return false;
}

int planted_label(const AttributeSpec& attr, const ChannelPartition& part, const Image& img) {
  double sum = 0.0, cnt = 0.0;
  const int h = img.dims[1], w = img.dims[2];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (part.region.data[static_cast<std::size_t>(y) * w + x] > 0.5) {
        sum += img.at3(attr.rgb_channel, y, x);
        cnt += 1.0;
      }
  return (sum / cnt > attr.threshold) ? 1 : -1;
}

std::vector<double> map_latent(const GeneratorWeights& w, const LatentVector& z) {
  if (static_cast<int>(z.values.size()) != w.arch.d_z)
    throw TensorError("map_latent: latent dim " + std::to_string(z.values.size()) + " vs d_z " +
                      std::to_string(w.arch.d_z));
  Tensor zt({w.arch.d_z}, z.values);
  Tensor h1 = ops::leaky_relu(ops::matvec(w.map_w1, zt, w.map_b1), w.arch.lrelu_slope);
  Tensor h2 = ops::leaky_relu(ops::matvec(w.map_w2, h1, w.map_b2), w.arch.lrelu_slope);
  return h2.data;
}

StyleCode style_from_w(const GeneratorWeights& w, const std::vector<double>& wvec) {
  StyleCode s;
  s.layout = StyleLayout::from_arch(w.arch);
  s.values.reserve(s.layout.total);
  Tensor wt({w.arch.d_w}, wvec);
  for (std::size_t i = 0; i < w.affine_w.size(); ++i) {
    Tensor si = ops::matvec(w.affine_w[i], wt, w.affine_b[i]);
    s.values.insert(s.values.end(), si.data.begin(), si.data.end());
  }
  return s;
}

SynthesisTrace synthesize_traced(const GeneratorWeights& w, const StyleCode& s, Tape& tape) {
  const ArchSpec& arch = w.arch;
  const StyleLayout want = StyleLayout::from_arch(arch);
  if (s.layout.total != want.total || s.layout.slices.size() != want.slices.size())
    throw TensorError("synthesize: style layout does not match architecture");

  SynthesisTrace trace;
  Tape::NodeId x = tape.leaf(w.const_input);
  int layer = 0;
  for (std::size_t lv = 0; lv < arch.levels.size(); ++lv) {
    if (lv > 0) x = tape.upsample2x(x, arch.upsample);
    for (std::size_t j = 0; j < arch.levels[lv].out_channels.size(); ++j) {
      x = (arch.norm == NormMode::Instance) ? tape.instance_norm(x, arch.norm_eps)
                                            : tape.rms_norm(x, arch.norm_eps);
      Tape::NodeId gains = tape.leaf(s.slice(layer));
      trace.gain_leaves.push_back(gains);
      x = tape.scale_channels(x, gains);
      x = tape.conv2d(x, tape.leaf(w.conv_kernels[layer]));
      x = tape.leaky_relu(x, arch.lrelu_slope);
      trace.post_activation.push_back(x);
      ++layer;
    }
  }
  Tape::NodeId rgb = tape.conv2d(x, tape.leaf(w.torgb_kernel), tape.leaf(w.torgb_bias));
  trace.image = tape.clamp01(rgb);
  return trace;
}

Image synthesize(const GeneratorWeights& w, const StyleCode& s) {
  Tape tape;
  return tape.value(synthesize_traced(w, s, tape).image);
}

GenerateResult generate(const GeneratorWeights& w, const LatentVector& z) {
  GenerateResult r;
  r.w = map_latent(w, z);
  r.s = style_from_w(w, r.w);
  r.image = synthesize(w, r.s);
  return r;
}

namespace {

Tensor normal_tensor(Rng& rng, std::vector<int> dims, double std_dev) {
  Tensor t(std::move(dims));
  for (double& v : t.data) v = rng.next_normal() * std_dev;
  round_to_f32(t);
  return t;
}

Tensor const_tensor(std::vector<int> dims, double value) {
  Tensor t(std::move(dims));
  for (double& v : t.data) v = value;
  round_to_f32(t);
  return t;
}

Tensor identity_matrix(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

}  // namespace

GeneratorWeights build_random_generator(std::uint64_t seed, const ArchSpec& arch) {
  arch.validate();
  Rng rng(seed);
  GeneratorWeights w;
  w.arch = arch;
  w.map_w1 = normal_tensor(rng, {arch.d_w, arch.d_z}, 1.0 / std::sqrt(arch.d_z));
  w.map_b1 = Tensor({arch.d_w});
  w.map_w2 = normal_tensor(rng, {arch.d_w, arch.d_w}, 1.0 / std::sqrt(arch.d_w));
  w.map_b2 = Tensor({arch.d_w});
  for (int l : arch.layer_in_channels()) {
    w.affine_w.push_back(normal_tensor(rng, {l, arch.d_w}, 0.2));
    w.affine_b.push_back(const_tensor({l}, 1.0));
  }
  w.const_input = normal_tensor(rng, {arch.const_channels, 4, 4}, 1.0);
  const auto in_ch = arch.layer_in_channels();
  const auto out_ch = arch.layer_out_channels();
  for (std::size_t i = 0; i < in_ch.size(); ++i) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(in_ch[i]) * arch.kernel * arch.kernel);
    w.conv_kernels.push_back(normal_tensor(rng, {out_ch[i], in_ch[i], arch.kernel, arch.kernel}, std_dev));
  }
  w.torgb_kernel = normal_tensor(rng, {arch.out_channels, out_ch.back(), 1, 1},
                                 1.0 / std::sqrt(static_cast<double>(out_ch.back())));
  w.torgb_bias = Tensor({arch.out_channels});
  return w;
}

PlantedGenerator build_planted_generator(std::uint64_t seed) {
  ArchSpec arch;
  arch.kernel = 1;
  arch.upsample = UpsampleMode::Nearest;
  arch.norm = NormMode::Rms;
  arch.validate();

  Rng rng(seed);
  PlantedGenerator pg;
  GeneratorWeights& w = pg.weights;
  w.arch = arch;

  // Mapping is the identity MLP; all label variation enters through the
  // affine heads of the last styled layer.
  w.map_w1 = identity_matrix(arch.d_z);
  w.map_b1 = Tensor({arch.d_w});
  w.map_w2 = identity_matrix(arch.d_w);
  w.map_b2 = Tensor({arch.d_w});

  const auto in_ch = arch.layer_in_channels();
  const auto out_ch = arch.layer_out_channels();
  const int n_layers = arch.n_layers();
  // Early layers get tiny style spread: renormalization makes their gain
  // magnitudes irrelevant, and small spread keeps all signs positive.
  const double early_std = 0.02;
  const double last_std = 0.09;
  for (int i = 0; i < n_layers; ++i) {
    const double std_dev = (i == n_layers - 1) ? last_std : early_std;
    w.affine_w.push_back(normal_tensor(rng, {in_ch[i], arch.d_w}, std_dev));
    w.affine_b.push_back(const_tensor({in_ch[i]}, 1.0));
  }

  // Constant input: each channel group occupies exactly one quadrant.
  w.const_input = Tensor({arch.const_channels, 4, 4});
  const int group_c0 = arch.const_channels / 4;
  for (int c = 0; c < arch.const_channels; ++c) {
    const int g = c / group_c0;
    const int y0 = (g / 2) * 2, x0 = (g % 2) * 2;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) w.const_input.at3(c, y0 + dy, x0 + dx) = 1.0;
  }

  // 1x1 kernels, block-diagonal over the 4 groups; weight 1/(2*m_in) turns
  // rms-normalized inputs (value 2 inside the quadrant) into the mean of the
  // group's gains.
  for (int i = 0; i < n_layers; ++i) {
    const int cin = in_ch[i], cout = out_ch[i];
    const int gin = cin / 4, gout = cout / 4;
    Tensor k({cout, cin, 1, 1});
    for (int o = 0; o < cout; ++o)
      for (int c = 0; c < cin; ++c)
        if (o / gout == c / gin) k.data[static_cast<std::size_t>(o) * cin + c] = 1.0 / (2.0 * gin);
    round_to_f32(k);
    w.conv_kernels.push_back(k);
  }

  // Mean red intensity inside quadrant g = 0.5 * mean(last-layer group gains).
  const int clast = out_ch.back();
  w.torgb_kernel = Tensor({arch.out_channels, clast, 1, 1});
  const double rgb_w[3] = {0.25, 0.20, 0.15};
  for (int k = 0; k < arch.out_channels; ++k)
    for (int c = 0; c < clast; ++c)
      w.torgb_kernel.data[static_cast<std::size_t>(k) * clast + c] = rgb_w[k];
  round_to_f32(w.torgb_kernel);
  w.torgb_bias = Tensor({arch.out_channels});

  const int res = arch.output_resolution();
  for (int g = 0; g < 4; ++g) {
    ChannelPartition part;
    part.concept_id = g;
    for (int i = 0; i < n_layers; ++i) {
      const int gin = in_ch[i] / 4;
      for (int c = g * gin; c < (g + 1) * gin; ++c) part.members.emplace_back(i, c);
    }
    part.region = Tensor({res, res});
    const int y0 = (g / 2) * (res / 2), x0 = (g % 2) * (res / 2);
    for (int y = 0; y < res / 2; ++y)
      for (int x = 0; x < res / 2; ++x)
        part.region.data[static_cast<std::size_t>(y0 + y) * res + (x0 + x)] = 1.0;
    pg.partitions.push_back(std::move(part));

    AttributeSpec attr;
    attr.id = g;
    static const char* names[4] = {"quad_tl_red", "quad_tr_red", "quad_bl_red", "quad_br_red"};
    attr.name = names[g];
    attr.partition_index = g;
    attr.rgb_channel = 0;
    attr.threshold = 0.5;
    pg.attributes.push_back(attr);
  }
  return pg;
}

Tensor segmentation_mask(const ChannelPartition& partition) {
  if (partition.region.numel() == 0) throw TensorError("segmentation_mask: partition has no region");
  return partition.region;
}

}  // namespace ssp
