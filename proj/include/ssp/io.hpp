#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssp/directions.hpp"
#include "ssp/stylegen.hpp"

namespace ssp {

inline constexpr const char* kToolVersion = "stylespace 0.1.0";

// Binary tensor container: magic "SIV1", u32 LE format version, u32 tensor
// count, then per tensor: u32 name length + UTF-8 name, u32 rank, u32 dims,
// raw float32 LE values.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::string& path);

const Tensor& find_tensor(const NamedTensors& ts, const std::string& name);
bool has_tensor(const NamedTensors& ts, const std::string& name);

// Generator weights; planted generators carry their partitions and attribute
// specs in the same file.
void save_generator(const std::string& path, const GeneratorWeights& weights,
                    const std::vector<ChannelPartition>* partitions = nullptr,
                    const std::vector<AttributeSpec>* attributes = nullptr);

struct LoadedGenerator {
  GeneratorWeights weights;
  std::vector<ChannelPartition> partitions;
  std::vector<AttributeSpec> attributes;
};

LoadedGenerator load_generator(const std::string& path);

void save_hyperplane(const std::string& path, const Hyperplane& plane);
Hyperplane load_hyperplane(const std::string& path);

// Binary PPM (P6, maxval 255); for inspection only, metrics never read these.
void write_ppm(const std::string& path, const Image& image);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string file_checksum(const std::string& path);

}  // namespace ssp
