#include "cadseq/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cadseq::nc {
namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "blob.bin";

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

void put_le(std::vector<unsigned char>& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xffu));
}

float get_le(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

const Array<float>* TensorBundle::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

const Array<float>& TensorBundle::get(const std::string& name) const {
  const auto* a = find(name);
  if (!a) throw Error(ErrorCode::CorruptCheckpoint, "checkpoint lacks tensor " + name);
  return *a;
}

void save_bundle(const std::filesystem::path& dir, const TensorBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<unsigned char> blob;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : bundle.tensors) {
    list.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"dtype", "float32"}, {"byte_offset", blob.size()}});
    for (float v : t.value.values()) put_le(blob, v);
  }
  nlohmann::json manifest = {{"format", "cadseq-tensors-1"},
                             {"tensors", list},
                             {"blob_bytes", blob.size()},
                             {"checksum_fnv1a64", hex64(fnv1a64(blob.data(), blob.size()))},
                             {"meta", bundle.meta}};
  {
    std::ofstream b(dir / kBlob, std::ios::binary | std::ios::trunc);
    b.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!b) throw Error(ErrorCode::IoError, "cannot write " + (dir / kBlob).string());
  }
  std::ofstream m(dir / kManifest, std::ios::trunc);
  m << manifest.dump(2) << "\n";
  if (!m) throw Error(ErrorCode::IoError, "cannot write " + (dir / kManifest).string());
}

TensorBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream m(dir / kManifest);
  if (!m) throw Error(ErrorCode::IoError, "cannot open " + (dir / kManifest).string());
  nlohmann::json manifest;
  try {
    m >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("manifest is not JSON: ") + e.what());
  }
  std::ifstream b(dir / kBlob, std::ios::binary);
  if (!b) throw Error(ErrorCode::IoError, "cannot open " + (dir / kBlob).string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  TensorBundle out;
  try {
    if (manifest.at("blob_bytes").get<std::size_t>() != blob.size()) {
      throw Error(ErrorCode::CorruptCheckpoint, "blob size differs from manifest");
    }
    if (manifest.at("checksum_fnv1a64").get<std::string>() != hex64(fnv1a64(blob.data(), blob.size()))) {
      throw Error(ErrorCode::CorruptCheckpoint, "blob checksum mismatch");
    }
    for (const auto& e : manifest.at("tensors")) {
      if (e.at("dtype").get<std::string>() != "float32") throw Error(ErrorCode::CorruptCheckpoint, "unsupported dtype");
      Shape shape = e.at("shape").get<Shape>();
      const std::size_t off = e.at("byte_offset").get<std::size_t>();
      const std::size_t n = shape_size(shape);
      if (off % 4 != 0 || off + 4 * n > blob.size()) {
        throw Error(ErrorCode::CorruptCheckpoint, "tensor " + e.at("name").get<std::string>() + " exceeds blob");
      }
      Array<float> a(shape);
      for (std::size_t i = 0; i < n; ++i) a[i] = get_le(blob.data() + off + 4 * i);
      out.tensors.push_back({e.at("name").get<std::string>(), std::move(a)});
    }
    out.meta = manifest.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("malformed manifest: ") + e.what());
  }
  return out;
}

}  // namespace cadseq::nc
