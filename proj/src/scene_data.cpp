#include <algorithm>
#include <cmath>
#include <random>

#include "hats/archive.hpp"
#include "hats/error.hpp"
#include "hats/scene.hpp"

namespace hats {

namespace {

struct Means {
  std::vector<std::vector<double>> rgb_mech, rgb_side, rgb_sev, disp_mech, disp_side, disp_sev;
  std::vector<std::vector<double>> relevance;  // embedding offset per relevance class
  std::vector<double> path_rgb, path_disp, vehicle_rgb, vehicle_disp;
};

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<std::vector<double>> table(std::mt19937_64& rng, std::size_t rows, std::size_t n, double scale) {
  std::vector<std::vector<double>> t;
  for (std::size_t r = 0; r < rows; ++r) t.push_back(gaussian(rng, n, scale));
  return t;
}

Means draw_means(const SceneSynthConfig& c) {
  std::mt19937_64 rng(c.seed);
  Means m;
  m.rgb_mech = table(rng, kMechanisms.size(), c.rgb_channels, 1.0);
  m.rgb_side = table(rng, kSides.size(), c.rgb_channels, 1.0);
  m.rgb_sev = table(rng, kSeverities.size(), c.rgb_channels, 1.0);
  m.disp_mech = table(rng, kMechanisms.size(), c.disp_channels, 1.0);
  m.disp_side = table(rng, kSides.size(), c.disp_channels, 1.0);
  m.disp_sev = table(rng, kSeverities.size(), c.disp_channels, 1.0);
  m.relevance = table(rng, 2, c.embed_dim, 1.0);
  m.path_rgb = gaussian(rng, c.rgb_channels, 1.0);
  m.path_disp = gaussian(rng, c.disp_channels, 1.0);
  m.vehicle_rgb = gaussian(rng, c.rgb_channels, 1.0);
  m.vehicle_disp = gaussian(rng, c.disp_channels, 1.0);
  return m;
}

constexpr double kPixelNoise = 0.3;

// Rectangle placement bands on the grid, as fractions of the width/height.
struct Band {
  double x0, x1, y0, y1;
};
constexpr std::array<Band, 3> kSideBands = {{{0.10, 0.40, 0.30, 0.85}, {0.38, 0.62, 0.30, 0.85}, {0.60, 0.90, 0.30, 0.85}}};
constexpr Band kBackground = {0.0, 1.0, 0.0, 0.35};

SceneSample make_scene(const SceneSynthConfig& c, const Means& means, std::mt19937_64& rng, const std::string& id) {
  SceneSample s;
  s.id = id;
  s.height = c.height;
  s.width = c.width;
  s.rgb_channels = c.rgb_channels;
  s.disp_channels = c.disp_channels;
  const std::size_t hw = c.height * c.width;
  s.rgb = gaussian(rng, c.rgb_channels * hw, kPixelNoise);
  s.disp = gaussian(rng, c.disp_channels * hw, kPixelNoise);
  s.path_mask.assign(hw, 0);
  s.vehicle_mask.assign(hw, 0);
  for (std::size_t y = 0; y < c.height; ++y) {
    for (std::size_t x = 0; x < c.width; ++x) {
      const double fy = (y + 0.5) / c.height, fx = (x + 0.5) / c.width;
      if (fy > 0.3 && fx > 0.35 && fx < 0.65) s.path_mask[y * c.width + x] = 1;
      if (fy > 0.88 && fx > 0.4 && fx < 0.6) s.vehicle_mask[y * c.width + x] = 1;
    }
  }
  auto paint = [&](const std::vector<std::uint8_t>& mask, const std::vector<double>& rgb, const std::vector<double>& disp) {
    for (std::size_t p = 0; p < hw; ++p) {
      if (!mask[p]) continue;
      for (std::size_t ch = 0; ch < c.rgb_channels; ++ch) s.rgb[ch * hw + p] += rgb[ch];
      for (std::size_t ch = 0; ch < c.disp_channels; ++ch) s.disp[ch * hw + p] += disp[ch];
    }
  };
  std::vector<std::uint8_t> claimed = s.vehicle_mask;

  std::uniform_int_distribution<std::size_t> count(c.min_entities, c.max_entities);
  std::uniform_int_distribution<std::size_t> cls(0, kSemanticClasses.size() - 1), side(0, kSides.size() - 1),
      sev(0, kSeverities.size() - 1), mech(0, kMechanisms.size() - 1), pick(0, 1);
  std::uniform_int_distribution<std::size_t> extent(2, 4);
  std::bernoulli_distribution relevant(c.relevant_fraction);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = count(rng);
  std::vector<std::uint8_t> road_rest = s.path_mask;
  for (std::size_t i = 0; i < n; ++i) {
    EntityLabels l;
    l.relevant = relevant(rng);
    const std::size_t klass = cls(rng);
    l.mechanism = l.relevant ? class_mechanisms(klass)[pick(rng)] : mech(rng);
    l.side = side(rng);
    l.severity = sev(rng);
    const Band band = l.relevant ? kSideBands[l.side] : kBackground;

    std::vector<std::uint8_t> mask;
    for (int attempt = 0; attempt < 20 && mask.empty(); ++attempt) {
      const std::size_t h = std::min(extent(rng), c.height), w = std::min(extent(rng), c.width);
      const double cy = band.y0 + unit(rng) * (band.y1 - band.y0), cx = band.x0 + unit(rng) * (band.x1 - band.x0);
      const auto y0 = static_cast<std::size_t>(std::clamp<long>(std::lround(cy * c.height - h / 2.0), 0, long(c.height - h)));
      const auto x0 = static_cast<std::size_t>(std::clamp<long>(std::lround(cx * c.width - w / 2.0), 0, long(c.width - w)));
      std::vector<std::uint8_t> m(hw, 0);
      std::size_t area = 0;
      for (std::size_t y = y0; y < y0 + h; ++y) {
        for (std::size_t x = x0; x < x0 + w; ++x) {
          if (!claimed[y * c.width + x]) {
            m[y * c.width + x] = 1;
            ++area;
          }
        }
      }
      if (area > 0) mask = std::move(m);
    }
    if (mask.empty()) continue;
    for (std::size_t p = 0; p < hw; ++p) {
      if (mask[p]) {
        claimed[p] = 1;
        road_rest[p] = 0;
      }
    }

    auto rgb = gaussian(rng, c.rgb_channels, c.noise), disp = gaussian(rng, c.disp_channels, c.noise);
    for (std::size_t ch = 0; ch < c.rgb_channels; ++ch) {
      rgb[ch] += means.rgb_mech[l.mechanism][ch] + means.rgb_side[l.side][ch] + means.rgb_sev[l.severity][ch];
    }
    for (std::size_t ch = 0; ch < c.disp_channels; ++ch) {
      disp[ch] += means.disp_mech[l.mechanism][ch] + means.disp_side[l.side][ch] + means.disp_sev[l.severity][ch];
    }
    paint(mask, rgb, disp);

    SceneEntity e;
    e.mask = std::move(mask);
    e.semantic_class = klass;
    e.embedding = gaussian(rng, c.embed_dim, 0.5);
    for (std::size_t d = 0; d < c.embed_dim; ++d) e.embedding[d] += means.relevance[l.relevant][d];
    if (!l.relevant) l.mechanism = l.side = l.severity = 0;
    e.labels = l;
    s.entities.push_back(std::move(e));
  }
  paint(road_rest, means.path_rgb, means.path_disp);
  paint(s.vehicle_mask, means.vehicle_rgb, means.vehicle_disp);
  return s;
}

std::vector<std::uint8_t> to_mask(const std::vector<double>& values, std::size_t from, std::size_t count) {
  std::vector<std::uint8_t> m(count);
  for (std::size_t i = 0; i < count; ++i) m[i] = values[from + i] != 0.0;
  return m;
}

std::vector<double> to_values(const std::vector<std::uint8_t>& m) { return {m.begin(), m.end()}; }

}  // namespace

std::vector<std::size_t> class_mechanisms(std::size_t semantic_class) {
  if (semantic_class >= kSemanticClasses.size()) throw ValidationError("semantic class id out of range");
  const std::size_t n = kMechanisms.size();
  return {semantic_class % n, (semantic_class + 3) % n};
}

nlohmann::ordered_json to_json(const SceneSynthConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"rgb_channels", c.rgb_channels},
          {"disp_channels", c.disp_channels},
          {"embed_dim", c.embed_dim},
          {"min_entities", c.min_entities},
          {"max_entities", c.max_entities},
          {"relevant_fraction", c.relevant_fraction},
          {"noise", c.noise},
          {"train", c.train},
          {"valid", c.valid},
          {"test", c.test},
          {"seed", c.seed}};
}

SceneSynthConfig scene_synth_config_from_json(const nlohmann::json& j, SceneSynthConfig c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("scene generator config must be an object");
  const auto defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown scene generator config key '" + key + "'");
  }
  try {
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.rgb_channels = j.value("rgb_channels", c.rgb_channels);
    c.disp_channels = j.value("disp_channels", c.disp_channels);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.min_entities = j.value("min_entities", c.min_entities);
    c.max_entities = j.value("max_entities", c.max_entities);
    c.relevant_fraction = j.value("relevant_fraction", c.relevant_fraction);
    c.noise = j.value("noise", c.noise);
    c.train = j.value("train", c.train);
    c.valid = j.value("valid", c.valid);
    c.test = j.value("test", c.test);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scene generator config value: ") + e.what());
  }
  if (c.height < 4 || c.width < 4) throw ConfigError("scene grid must be at least 4x4");
  if (c.rgb_channels == 0 || c.disp_channels == 0 || c.embed_dim == 0) throw ConfigError("scene widths must be positive");
  if (c.min_entities == 0 || c.min_entities > c.max_entities) throw ConfigError("bad entity count range");
  if (!(c.relevant_fraction >= 0.0 && c.relevant_fraction <= 1.0)) throw ConfigError("relevant_fraction must lie in [0, 1]");
  if (!(c.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  return c;
}

SceneSplits generate_scenes(const SceneSynthConfig& c) {
  const Means means = draw_means(c);
  SceneSplits out;
  auto run = [&](std::vector<SceneSample>& dst, std::size_t count, const char* name, std::uint64_t stream) {
    std::mt19937_64 rng(c.seed * 0x9e3779b97f4a7c15ULL + stream);
    for (std::size_t i = 0; i < count; ++i) dst.push_back(make_scene(c, means, rng, std::string(name) + "-" + std::to_string(i)));
  };
  run(out.train, c.train, "train", 1);
  run(out.valid, c.valid, "valid", 2);
  run(out.test, c.test, "test", 3);
  return out;
}

void save_scene(const std::filesystem::path& path, const SceneSample& s) {
  s.validate();
  const std::size_t o = s.entities.size(), hw = s.height * s.width, d = s.embed_dim();
  std::vector<ArchiveEntry> entries;
  entries.push_back({"rgb", DType::kFloat32, {s.rgb_channels, s.height, s.width}, s.rgb});
  entries.push_back({"disp", DType::kFloat32, {s.disp_channels, s.height, s.width}, s.disp});
  entries.push_back({"path_mask", DType::kBits, {s.height, s.width}, to_values(s.path_mask)});
  entries.push_back({"vehicle_mask", DType::kBits, {s.height, s.width}, to_values(s.vehicle_mask)});
  if (o > 0) {
    std::vector<double> masks, emb;
    masks.reserve(o * hw);
    for (const auto& e : s.entities) {
      masks.insert(masks.end(), e.mask.begin(), e.mask.end());
      emb.insert(emb.end(), e.embedding.begin(), e.embedding.end());
    }
    entries.push_back({"entity_masks", DType::kBits, {o, s.height, s.width}, std::move(masks)});
    entries.push_back({"embeddings", DType::kFloat32, {o, d}, std::move(emb)});
  }
  write_archive(path, entries);

  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["entities"] = nlohmann::ordered_json::array();
  for (const auto& e : s.entities) {
    nlohmann::ordered_json je;
    je["semantic_class"] = kSemanticClasses[e.semantic_class];
    if (e.labels) {
      je["labels"]["relevant"] = e.labels->relevant;
      if (e.labels->relevant) {
        je["labels"]["mechanism"] = kMechanisms[e.labels->mechanism];
        je["labels"]["side"] = kSides[e.labels->side];
        je["labels"]["severity"] = kSeverities[e.labels->severity];
      }
    }
    j["entities"].push_back(je);
  }
  write_text_file(path.string() + ".json", j.dump(2) + "\n");
}

SceneSample load_scene(const std::filesystem::path& path) {
  const auto entries = read_archive(path);
  auto find = [&](const std::string& name) -> const ArchiveEntry* {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };
  auto require = [&](const std::string& name) -> const ArchiveEntry& {
    const auto* e = find(name);
    if (!e) throw ValidationError(path.string() + ": missing tensor '" + name + "'");
    return *e;
  };
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_text_file(path.string() + ".json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ".json: " + e.what());
  }

  SceneSample s;
  s.id = side.value("id", path.stem().string());
  const auto& rgb = require("rgb");
  const auto& disp = require("disp");
  if (rgb.shape.size() != 3 || disp.shape.size() != 3) throw DimensionError(path.string() + ": feature maps must be C x H x W");
  s.rgb_channels = rgb.shape[0];
  s.height = rgb.shape[1];
  s.width = rgb.shape[2];
  s.disp_channels = disp.shape[0];
  s.rgb = rgb.values;
  s.disp = disp.values;
  const std::size_t hw = s.height * s.width;
  s.path_mask = to_mask(require("path_mask").values, 0, require("path_mask").values.size());
  s.vehicle_mask = to_mask(require("vehicle_mask").values, 0, require("vehicle_mask").values.size());

  const auto& meta = side.at("entities");
  const std::size_t o = meta.size();
  const auto* masks = find("entity_masks");
  const auto* emb = find("embeddings");
  if (o > 0 && (!masks || !emb || masks->shape.size() != 3 || masks->shape[0] != o || emb->shape.size() != 2 ||
                emb->shape[0] != o)) {
    throw DimensionError(path.string() + ": entity tensors disagree with the sidecar");
  }
  try {
    for (std::size_t i = 0; i < o; ++i) {
      SceneEntity e;
      e.mask = to_mask(masks->values, i * hw, hw);
      const std::size_t d = emb->shape[1];
      e.embedding.assign(emb->values.begin() + static_cast<std::ptrdiff_t>(i * d),
                         emb->values.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      e.semantic_class = semantic_class_index(meta[i].at("semantic_class").get<std::string>());
      if (meta[i].contains("labels")) {
        const auto& jl = meta[i]["labels"];
        EntityLabels l;
        l.relevant = jl.at("relevant").get<bool>();
        if (l.relevant) {
          l.mechanism = mechanism_index(jl.at("mechanism").get<std::string>());
          l.side = side_index(jl.at("side").get<std::string>());
          l.severity = severity_index(jl.at("severity").get<std::string>());
        }
        e.labels = l;
      }
      s.entities.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ".json: " + e.what());
  }
  s.validate();
  return s;
}

}  // namespace hats
