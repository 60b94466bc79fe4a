#include "ssp/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ssp {
namespace {

constexpr std::uint32_t kFormatVersion = 1;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& f, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(f, bits);
}

float get_f32(std::ifstream& f) {
  const std::uint32_t bits = get_u32(f);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

Tensor meta_tensor(const std::vector<double>& vals) {
  Tensor t({static_cast<int>(vals.size())}, vals);
  round_to_f32(t);
  return t;
}

// u64 split into 4 exact 16-bit limbs, low first.
std::vector<double> seed_limbs(std::uint64_t seed) {
  std::vector<double> v;
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<double>((seed >> (16 * i)) & 0xffffULL));
  return v;
}

std::uint64_t seed_from_limbs(const Tensor& t, int offset) {
  std::uint64_t seed = 0;
  for (int i = 0; i < 4; ++i)
    seed |= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.at(offset + i))) << (16 * i);
  return seed;
}

}  // namespace

void save_tensors(const std::string& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot open for writing: " + path);
  f.write("SIV1", 4);
  put_u32(f, kFormatVersion);
  put_u32(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) put_u32(f, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f32(f, static_cast<float>(v));
  }
  require(f.good(), "write failed: " + path);
}

NamedTensors load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::memcmp(magic, "SIV1", 4) == 0, "not a SIV1 file: " + path);
  const std::uint32_t version = get_u32(f);
  require(version == kFormatVersion, "unsupported SIV1 version in " + path);
  const std::uint32_t count = get_u32(f);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(f);
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(get_u32(f));
    Tensor t(dims);
    for (double& v : t.data) v = static_cast<double>(get_f32(f));
    require(f.good(), "truncated SIV1 file: " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

const Tensor& find_tensor(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts)
    if (n == name) return t;
  throw std::runtime_error("tensor '" + name + "' not found in file");
}

bool has_tensor(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts)
    if (n == name) return true;
  return false;
}

void save_generator(const std::string& path, const GeneratorWeights& w,
                    const std::vector<ChannelPartition>* partitions,
                    const std::vector<AttributeSpec>* attributes) {
  const ArchSpec& a = w.arch;
  std::vector<double> arch = {
      static_cast<double>(a.d_z),          static_cast<double>(a.d_w),
      static_cast<double>(a.const_channels), static_cast<double>(a.kernel),
      a.upsample == UpsampleMode::Nearest ? 0.0 : 1.0,
      a.norm == NormMode::Instance ? 0.0 : 1.0,
      static_cast<double>(a.out_channels), a.lrelu_slope, a.norm_eps,
      static_cast<double>(a.levels.size())};
  for (const auto& lv : a.levels) {
    arch.push_back(lv.resolution);
    arch.push_back(static_cast<double>(lv.out_channels.size()));
    for (int c : lv.out_channels) arch.push_back(c);
  }

  NamedTensors ts;
  ts.emplace_back("arch", meta_tensor(arch));
  ts.emplace_back("map/w1", w.map_w1);
  ts.emplace_back("map/b1", w.map_b1);
  ts.emplace_back("map/w2", w.map_w2);
  ts.emplace_back("map/b2", w.map_b2);
  for (std::size_t i = 0; i < w.affine_w.size(); ++i) {
    ts.emplace_back("affine/" + std::to_string(i) + "/w", w.affine_w[i]);
    ts.emplace_back("affine/" + std::to_string(i) + "/b", w.affine_b[i]);
  }
  ts.emplace_back("const_input", w.const_input);
  for (std::size_t i = 0; i < w.conv_kernels.size(); ++i)
    ts.emplace_back("conv/" + std::to_string(i) + "/kernel", w.conv_kernels[i]);
  ts.emplace_back("torgb/kernel", w.torgb_kernel);
  ts.emplace_back("torgb/bias", w.torgb_bias);

  if (partitions) {
    ts.emplace_back("part/count", meta_tensor({static_cast<double>(partitions->size())}));
    for (std::size_t g = 0; g < partitions->size(); ++g) {
      const ChannelPartition& p = (*partitions)[g];
      Tensor members({static_cast<int>(p.members.size()), 2});
      for (std::size_t i = 0; i < p.members.size(); ++i) {
        members.data[2 * i] = p.members[i].first;
        members.data[2 * i + 1] = p.members[i].second;
      }
      ts.emplace_back("part/" + std::to_string(g) + "/members", members);
      ts.emplace_back("part/" + std::to_string(g) + "/region", p.region);
    }
  }
  if (attributes) {
    for (std::size_t g = 0; g < attributes->size(); ++g) {
      const AttributeSpec& at = (*attributes)[g];
      ts.emplace_back("attr/" + std::to_string(g) + "/" + at.name,
                      meta_tensor({static_cast<double>(at.id), static_cast<double>(at.partition_index),
                                   static_cast<double>(at.rgb_channel), at.threshold}));
    }
  }
  save_tensors(path, ts);
}

LoadedGenerator load_generator(const std::string& path) {
  const NamedTensors ts = load_tensors(path);
  LoadedGenerator out;
  GeneratorWeights& w = out.weights;

  const Tensor& arch = find_tensor(ts, "arch");
  ArchSpec a;
  a.d_z = static_cast<int>(arch.at(0));
  a.d_w = static_cast<int>(arch.at(1));
  a.const_channels = static_cast<int>(arch.at(2));
  a.kernel = static_cast<int>(arch.at(3));
  a.upsample = arch.at(4) == 0.0 ? UpsampleMode::Nearest : UpsampleMode::Bilinear;
  a.norm = arch.at(5) == 0.0 ? NormMode::Instance : NormMode::Rms;
  a.out_channels = static_cast<int>(arch.at(6));
  a.lrelu_slope = arch.at(7);
  a.norm_eps = arch.at(8);
  const int n_levels = static_cast<int>(arch.at(9));
  a.levels.clear();
  int pos = 10;
  for (int i = 0; i < n_levels; ++i) {
    LevelSpec lv;
    lv.resolution = static_cast<int>(arch.at(pos++));
    const int n_convs = static_cast<int>(arch.at(pos++));
    for (int j = 0; j < n_convs; ++j) lv.out_channels.push_back(static_cast<int>(arch.at(pos++)));
    a.levels.push_back(std::move(lv));
  }
  a.validate();
  w.arch = a;

  w.map_w1 = find_tensor(ts, "map/w1");
  w.map_b1 = find_tensor(ts, "map/b1");
  w.map_w2 = find_tensor(ts, "map/w2");
  w.map_b2 = find_tensor(ts, "map/b2");
  const int n_layers = a.n_layers();
  for (int i = 0; i < n_layers; ++i) {
    w.affine_w.push_back(find_tensor(ts, "affine/" + std::to_string(i) + "/w"));
    w.affine_b.push_back(find_tensor(ts, "affine/" + std::to_string(i) + "/b"));
  }
  w.const_input = find_tensor(ts, "const_input");
  for (int i = 0; i < n_layers; ++i)
    w.conv_kernels.push_back(find_tensor(ts, "conv/" + std::to_string(i) + "/kernel"));
  w.torgb_kernel = find_tensor(ts, "torgb/kernel");
  w.torgb_bias = find_tensor(ts, "torgb/bias");

  if (has_tensor(ts, "part/count")) {
    const int count = static_cast<int>(find_tensor(ts, "part/count").at(0));
    for (int g = 0; g < count; ++g) {
      ChannelPartition p;
      p.concept_id = g;
      const Tensor& members = find_tensor(ts, "part/" + std::to_string(g) + "/members");
      for (int i = 0; i < members.dims[0]; ++i)
        p.members.emplace_back(static_cast<int>(members.data[2 * i]),
                               static_cast<int>(members.data[2 * i + 1]));
      p.region = find_tensor(ts, "part/" + std::to_string(g) + "/region");
      out.partitions.push_back(std::move(p));
    }
    const std::string prefix = "attr/";
    for (const auto& [name, t] : ts) {
      if (name.rfind(prefix, 0) != 0) continue;
      const auto slash = name.find('/', prefix.size());
      AttributeSpec at;
      at.id = static_cast<int>(t.at(0));
      at.name = name.substr(slash + 1);
      at.partition_index = static_cast<int>(t.at(1));
      at.rgb_channel = static_cast<int>(t.at(2));
      at.threshold = t.at(3);
      out.attributes.push_back(std::move(at));
    }
  }
  return out;
}

void save_hyperplane(const std::string& path, const Hyperplane& plane) {
  NamedTensors ts;
  ts.emplace_back("normal", meta_tensor(plane.normal));
  ts.emplace_back("unit_normal", meta_tensor(plane.unit_normal));
  ts.emplace_back("bias", meta_tensor({plane.bias}));
  std::vector<double> meta = {static_cast<double>(static_cast<int>(plane.space)), plane.l1_lambda,
                              plane.hinge_c, static_cast<double>(plane.epochs)};
  const auto limbs = seed_limbs(plane.seed);
  meta.insert(meta.end(), limbs.begin(), limbs.end());
  ts.emplace_back("meta", meta_tensor(meta));
  save_tensors(path, ts);
}

Hyperplane load_hyperplane(const std::string& path) {
  const NamedTensors ts = load_tensors(path);
  Hyperplane p;
  p.normal = find_tensor(ts, "normal").data;
  p.unit_normal = find_tensor(ts, "unit_normal").data;
  p.bias = find_tensor(ts, "bias").at(0);
  const Tensor& meta = find_tensor(ts, "meta");
  p.space = static_cast<Space>(static_cast<int>(meta.at(0)));
  p.l1_lambda = meta.at(1);
  p.hinge_c = meta.at(2);
  p.epochs = static_cast<int>(meta.at(3));
  p.seed = seed_from_limbs(meta, 4);
  return p;
}

void write_ppm(const std::string& path, const Image& image) {
  require(image.rank() == 3 && image.dims[0] == 3, "write_ppm: expected [3,H,W] image");
  const int h = image.dims[1], w = image.dims[2];
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot open for writing: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(1.0, std::max(0.0, image.at3(c, y, x)));
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  require(f.good(), "write failed: " + path);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return std::string(buf);
}

}  // namespace ssp
