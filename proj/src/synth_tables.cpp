#include "hats/synth_tables.hpp"

#include <numeric>
#include <random>
#include <set>

#include "hats/error.hpp"

namespace hats {

std::size_t SynthGroundTruth::total_nodes() const {
  return std::accumulate(nodes.begin(), nodes.end(), std::size_t{0},
                         [](std::size_t a, const auto& p) { return a + p.second; });
}

std::size_t SynthGroundTruth::total_edges() const {
  return std::accumulate(edges.begin(), edges.end(), std::size_t{0},
                         [](std::size_t a, const auto& p) { return a + p.second; });
}

namespace {

constexpr double kNullRate = 0.05;

class Draw {
 public:
  Draw(std::uint64_t seed, const KgSchema& schema) : rng_(seed), schema_(schema) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  const std::string& pick(const std::string& label) {
    const auto& vocab = schema_.require_node_type(label).vocabulary;
    return vocab[uniform(0, vocab.size() - 1)];
  }
  std::optional<std::string> maybe(const std::string& label) {
    if (chance(kNullRate)) return std::nullopt;
    return pick(label);
  }

 private:
  std::mt19937_64 rng_;
  const KgSchema& schema_;
};

}  // namespace

SyntheticDataset generate_synthetic_dataset(std::uint64_t seed, const SynthScale& scale,
                                            const ContractSet& contracts, const KgSchema& schema,
                                            const BridgeMapping& mapping) {
  if (scale.crashes < 1 || scale.vehicles_per_crash < 1 || scale.occupants_per_vehicle < 1) {
    throw ConfigError("synthetic scale values must all be at least 1");
  }
  validate_contracts(contracts, schema);
  Draw draw(seed, schema);
  SyntheticDataset out;
  auto& truth = out.truth;
  auto& rows = out.rows;
  std::set<std::string> causal;    // distinct causality edges
  std::set<std::string> entities;  // distinct (crash, object) pairs

  for (const auto& t : schema.node_types) {
    if (!t.vocabulary.empty()) truth.nodes[t.label] = t.vocabulary.size();
  }

  auto new_row = [&](const std::string& table) -> DecodedRow& {
    auto& list = rows[table];
    list.push_back(DecodedRow{table, list.size(), {}});
    ++truth.rows[table];
    return list.back();
  };
  auto attr = [&](DecodedRow& row, const std::string& column, std::optional<std::string> value,
                  const std::string& relation) {
    if (value && !relation.empty()) ++truth.edges[relation];
    row.values[column] = std::move(value);
  };

  const auto& manners = schema.require_node_type("MANCOLL").vocabulary;
  for (std::size_t c = 1; c <= scale.crashes; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%06zu", c);
    const std::string crash_id = buf;
    const std::size_t k = draw.uniform(1, scale.vehicles_per_crash);
    const std::size_t events = draw.uniform(1, k);

    DecodedRow& crash = new_row("crash");
    ++truth.nodes["CRASH"];
    crash.values["crash_id"] = crash_id;
    std::optional<std::string> manner;
    if (!draw.chance(kNullRate)) {
      manner = k == 1 ? manners.front() : manners[draw.uniform(1, manners.size() - 1)];
    }
    attr(crash, "manner", manner, "CollisionManner");
    attr(crash, "max_injury", draw.pick("CAIS"), "MostSevereInjuryInCrash");
    attr(crash, "light", draw.maybe("LIGHTCOND"), "LightCondition");
    attr(crash, "weather", draw.maybe("WEATHER"), "WeatherCondition");
    attr(crash, "junction", draw.maybe("RELTOJUNCT"), "RelationToJunction");
    attr(crash, "surface_condition", draw.maybe("SURFCOND"), "SurfaceCondition");
    crash.values["vehicle_count"] = std::to_string(k);
    crash.values["event_count"] = std::to_string(events);
    crash.values["hour"] = std::to_string(draw.uniform(0, 23));
    crash.values["weekday"] = std::to_string(draw.uniform(1, 7));
    crash.values["month"] = std::to_string(draw.uniform(1, 12));

    for (std::size_t v = 1; v <= k; ++v) {
      DecodedRow& veh = new_row("vehicle");
      ++truth.nodes["VEHICLE"];
      ++truth.edges["VehicleInvolved"];
      veh.values["crash_id"] = crash_id;
      veh.values["vehicle_no"] = std::to_string(v);
      attr(veh, "class", draw.pick("VEHCLASS"), "InstanceOf");
      attr(veh, "surface_type", draw.maybe("SURFTYPE"), "SurfaceType");
      attr(veh, "alignment", draw.maybe("ALIGNMENT"), "RoadwayAlignment");
      attr(veh, "crash_category", draw.maybe("CRASHCAT"), "CrashCategory");
      attr(veh, "crash_config", draw.maybe("CRASHCONF"), "CrashConfiguration");
      attr(veh, "consequence", draw.maybe("CONSEQ"), "GeneralConsequence");
      attr(veh, "damage_plane", draw.maybe("DAMPLANE"), "VehicleDamagePosition");
      attr(veh, "damage_severity", draw.maybe("DAMSEV"), "DamageSeverityLevel");
      attr(veh, "max_injury", draw.pick("VAIS"), "MostSevereInjuryInVehicle");
      attr(veh, "pre_movement", draw.maybe("PREMOVE"), "Pre-crashVehicleMovement");
      attr(veh, "rollover", draw.maybe("ROLLINITYP"), "Post-crashRolloverType");
      attr(veh, "traffic_device", draw.maybe("TRAFDEV"), "SignBestControlsTraffic");

      const std::size_t m = draw.uniform(1, scale.occupants_per_vehicle);
      for (std::size_t o = 1; o <= m; ++o) {
        DecodedRow& occ = new_row("occupant");
        ++truth.nodes["OCCUPANT"];
        ++truth.edges["OccupantInvolved"];
        ++truth.edges["HasOccupant"];
        occ.values["crash_id"] = crash_id;
        occ.values["vehicle_no"] = std::to_string(v);
        occ.values["occupant_no"] = std::to_string(o);
        occ.values["seat"] = std::string(o == 1 ? "driver" : "passenger");
        attr(occ, "max_injury", draw.pick("MAIS"), "MostSevereInjury");
        attr(occ, "treatment", draw.maybe("TREATMENT"), "TreatmentReceived");
      }
    }

    // Contacts: a first harmful event for each vehicle, sometimes a later one
    // with a fixed or non-fixed object.
    std::size_t contact_no = 0;
    for (std::size_t v = 1; v <= k; ++v) {
      auto contact = [&](const std::string& sequence, std::optional<std::size_t> other,
                         std::optional<std::string> object) {
        DecodedRow& row = new_row("contact");
        row.values["crash_id"] = crash_id;
        row.values["vehicle_no"] = std::to_string(v);
        row.values["contact_no"] = std::to_string(++contact_no);
        row.values["sequence"] = sequence;
        row.values["other_kind"] = std::string(other ? "vehicle" : "object");
        row.values["other_vehicle_no"] =
            other ? std::optional<std::string>(std::to_string(*other)) : std::nullopt;
        row.values["object"] = object;
        if (other) {
          ++truth.edges["ContactWith"];
        } else {
          ++truth.edges["Contactwith"];
          if (entities.insert(crash_id + "|" + *object).second) ++truth.edges["EntityInvolved"];
        }
      };
      std::string first_object;
      if (k > 1) {
        std::size_t other = draw.uniform(1, k - 1);
        if (other >= v) ++other;
        contact("first", other, std::nullopt);
      } else {
        first_object = draw.pick("OBJCONT");
        contact("first", std::nullopt, first_object);
      }
      if (draw.chance(0.3)) {
        std::string object = draw.pick("OBJCONT");
        contact("subsequent", std::nullopt, object);
      }
    }

    for (std::size_t e = 1; e <= events; ++e) {
      DecodedRow& row = new_row("event");
      const std::size_t actor = draw.uniform(1, k);
      const std::string& event = draw.pick("CRITEVENT");
      const std::string& category = draw.pick("CRITCAT");
      std::optional<std::size_t> victim;
      std::string object;
      if (k > 1 && draw.chance(0.85)) {
        victim = draw.uniform(1, k - 1);
        if (*victim >= actor) ++*victim;
      } else {
        object = draw.pick("OBJCONT");
      }
      row.values["crash_id"] = crash_id;
      row.values["event_no"] = std::to_string(e);
      row.values["actor_vehicle_no"] = std::to_string(actor);
      row.values["event"] = event;
      row.values["category"] = category;
      row.values["victim_kind"] = std::string(victim ? "vehicle" : "object");
      row.values["victim_vehicle_no"] =
          victim ? std::optional<std::string>(std::to_string(*victim)) : std::nullopt;
      row.values["victim_object"] = victim ? std::nullopt : std::optional<std::string>(object);

      const std::string a = "veh " + crash_id + "#" + std::to_string(actor);
      const std::string cr = "crash " + crash_id;
      const std::string ev = "event " + event, cat = "cat " + category;
      const std::string vic = victim ? "veh " + crash_id + "#" + std::to_string(*victim) : "obj " + object;
      for (const std::string& edge :
           {a + ">LeadTo>" + cr + ">actor", ev + ">LeadTo>" + cr + ">event",
            cat + ">LeadTo>" + cr + ">factor", ev + ">Imminent>" + vic + ">event",
            cat + ">Imminent>" + vic + ">factor", a + ">Implicated>" + ev + ">actor/event",
            a + ">Implicated>" + cat + ">actor/factor", vic + ">Implicated>" + ev + ">victim/witness"}) {
        causal.insert(edge);
      }
    }
  }

  for (const auto& e : causal) {
    if (e.find(">LeadTo>") != std::string::npos) {
      ++truth.edges["LeadTo"];
    } else if (e.find(">Imminent>") != std::string::npos) {
      ++truth.edges["MakeCrashImminentFor"];
    } else {
      ++truth.edges["ImplicatedBy"];
    }
  }
  std::set<std::string> bridges;
  for (const auto& c : mapping.entries) bridges.insert(c.taxonomy + c.node_type + c.value + ">" + c.target);
  if (!bridges.empty()) truth.edges["CorrespondsTo"] = bridges.size();

  for (const auto& t : contracts.tables) {
    out.tables.csv[t.table] = encode_table(rows[t.table], t);
  }
  out.tables.mapping = nlohmann::json::parse(bridge_mapping_to_json(mapping).dump());
  return out;
}

}  // namespace hats
