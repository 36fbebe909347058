#include "hats/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hats/error.hpp"

namespace hats {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'T', 'S', 'A', 'R', 'C', '1'};

static_assert(std::endian::native == std::endian::little,
              "archive encoding assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("archive truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_archive(const std::vector<ArchiveEntry>& entries) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    if (numel_of(e.shape) != e.values.size()) {
      throw DimensionError("archive entry '" + e.name + "' shape " + shape_str(e.shape) +
                           " does not match its value count");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    std::string payload;
    switch (e.dtype) {
      case DType::kFloat64:
        for (double v : e.values) put<double>(payload, v);
        break;
      case DType::kFloat32:
        for (double v : e.values) put<float>(payload, static_cast<float>(v));
        break;
      case DType::kBits: {
        payload.assign((e.values.size() + 7) / 8, '\0');
        for (std::size_t i = 0; i < e.values.size(); ++i) {
          if (e.values[i] != 0.0) payload[i / 8] = static_cast<char>(payload[i / 8] | (1 << (i % 8)));
        }
        break;
      }
    }
    put<std::uint64_t>(out, payload.size());
    out += payload;
  }
  return out;
}

std::vector<ArchiveEntry> decode_archive(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a tensor archive (bad magic)");
  }
  const auto count = r.get<std::uint64_t>();
  std::vector<ArchiveEntry> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = r.take(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 2) throw ParseError("archive entry '" + e.name + "' has unknown dtype");
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = numel_of(e.shape);
    const std::string payload = r.take(r.get<std::uint64_t>());
    e.values.resize(n);
    const std::size_t expected = e.dtype == DType::kFloat64   ? n * 8
                                 : e.dtype == DType::kFloat32 ? n * 4
                                                              : (n + 7) / 8;
    if (payload.size() != expected) {
      throw ParseError("archive entry '" + e.name + "' payload has wrong size");
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (e.dtype == DType::kFloat64) {
        std::memcpy(&e.values[k], payload.data() + 8 * k, 8);
      } else if (e.dtype == DType::kFloat32) {
        float f;
        std::memcpy(&f, payload.data() + 4 * k, 4);
        e.values[k] = f;
      } else {
        e.values[k] = (static_cast<unsigned char>(payload[k / 8]) >> (k % 8)) & 1 ? 1.0 : 0.0;
      }
    }
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("trailing bytes after archive entries");
  return entries;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries) {
  write_text_file(path, encode_archive(entries));
}

std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path) {
  return decode_archive(read_text_file(path));
}

void save_checkpoint(const std::filesystem::path& path, const ParamGroup& params,
                     const nlohmann::ordered_json& manifest,
                     const std::vector<ArchiveEntry>& extra) {
  std::vector<ArchiveEntry> entries;
  for (const auto& slot : params.slots()) {
    entries.push_back({slot.name, DType::kFloat64, slot.value.shape(),
                       std::vector<double>(slot.value.data().begin(), slot.value.data().end())});
  }
  for (const auto& e : extra) entries.push_back(e);
  write_archive(path, entries);
  write_text_file(path.string() + ".json", manifest.dump(2) + "\n");
}

nlohmann::ordered_json read_manifest(const std::filesystem::path& checkpoint_path) {
  return nlohmann::ordered_json::parse(read_text_file(checkpoint_path.string() + ".json"));
}

nlohmann::ordered_json load_checkpoint(const std::filesystem::path& path, ParamGroup& params,
                                       std::vector<ArchiveEntry>* extra) {
  auto entries = read_archive(path);
  std::unordered_map<std::string, const ArchiveEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& slot : params.slots()) {
    auto it = by_name.find(slot.name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter '" + slot.name + "'");
    if (it->second->shape != slot.value.shape()) {
      throw DimensionError("checkpoint parameter '" + slot.name + "' has shape " +
                           shape_str(it->second->shape) + ", model expects " +
                           shape_str(slot.value.shape()));
    }
    auto dst = slot.value.mutable_data();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    by_name.erase(it);
  }
  if (extra) {
    for (const auto& e : entries) {
      if (by_name.count(e.name)) extra->push_back(e);
    }
  }
  return read_manifest(path);
}

}  // namespace hats
