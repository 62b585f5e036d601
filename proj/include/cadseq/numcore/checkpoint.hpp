#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "cadseq/numcore/array.hpp"

namespace cadseq::nc {

struct NamedTensor {
  std::string name;
  Array<float> value;
};

struct TensorBundle {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Array<float>* find(const std::string& name) const;
  const Array<float>& get(const std::string& name) const;
};

// Writes dir/manifest.json and dir/blob.bin (little-endian float32).
void save_bundle(const std::filesystem::path& dir, const TensorBundle& bundle);
TensorBundle load_bundle(const std::filesystem::path& dir);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);

}  // namespace cadseq::nc
