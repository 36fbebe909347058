#pragma once

// Named-tensor archive.
//
// Layout (all integers little-endian):
//   magic "HATSARC1"
//   u64 entry count
//   per entry: u32 name length, name bytes, u8 dtype, u32 rank, u64 dims[rank],
//              u64 payload byte count, payload
// dtype 0 = float64, 1 = float32, 2 = bit-packed booleans (LSB first).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hats/nn.hpp"
#include "hats/tensor.hpp"
#include "json.hpp"

namespace hats {

enum class DType : std::uint8_t { kFloat64 = 0, kFloat32 = 1, kBits = 2 };

struct ArchiveEntry {
  std::string name;
  DType dtype = DType::kFloat64;
  Shape shape;
  std::vector<double> values;  // decoded; bits become 0.0 / 1.0
};

std::string encode_archive(const std::vector<ArchiveEntry>& entries);
std::vector<ArchiveEntry> decode_archive(const std::string& bytes);

void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries);
std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path);

// Checkpoints store every parameter as float64 in `path` and the manifest as
// JSON in `path` + ".json".
void save_checkpoint(const std::filesystem::path& path, const ParamGroup& params,
                     const nlohmann::ordered_json& manifest,
                     const std::vector<ArchiveEntry>& extra = {});
// Copies stored values into an already-shaped group; names and shapes must match.
nlohmann::ordered_json load_checkpoint(const std::filesystem::path& path, ParamGroup& params,
                                       std::vector<ArchiveEntry>* extra = nullptr);
nlohmann::ordered_json read_manifest(const std::filesystem::path& checkpoint_path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hats
