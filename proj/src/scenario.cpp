#include "v2g/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace v2g::sim {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::ConfigInvalid, what); }

void reject_unknown(const YAML::Node& node, const std::string& where,
                    std::initializer_list<std::string_view> known) {
  if (!node.IsMap()) invalid(where + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool found = false;
    for (auto k : known) found = found || k == key;
    if (!found) invalid(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const auto child = node[key];
  if (!child) return;
  try {
    out = child.as<T>();
  } catch (const YAML::Exception&) {
    invalid(where + "." + key + ": wrong type");
  }
}

// A range is either [lo, hi] or a single number.
void read_range(const YAML::Node& node, const char* key, Range& out, const std::string& where) {
  const auto child = node[key];
  if (!child) return;
  try {
    if (child.IsSequence()) {
      if (child.size() != 2) invalid(where + "." + key + ": expected [lo, hi]");
      out = Range{child[0].as<double>(), child[1].as<double>()};
    } else {
      const double v = child.as<double>();
      out = Range{v, v};
    }
  } catch (const YAML::Exception&) {
    invalid(where + "." + key + ": expected a number or [lo, hi]");
  }
}

void check_range(const Range& r, const std::string& name, double min, bool min_exclusive,
                 double max = INFINITY) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    invalid(name + ": range must be finite with lo <= hi");
  }
  if (min_exclusive ? r.lo <= min : r.lo < min) {
    invalid(name + ": lower bound must be " + (min_exclusive ? "> " : ">= ") + std::to_string(min));
  }
  if (r.hi > max) invalid(name + ": upper bound must be <= " + std::to_string(max));
}

nlohmann::ordered_json range_json(const Range& r) { return nlohmann::ordered_json::array({r.lo, r.hi}); }

}  // namespace

void ScenarioConfig::validate() const {
  if (users < 1) invalid("users.count must be >= 1");
  if (stations < 1) invalid("stations.count must be >= 1");
  if (slots < 1) invalid("slots must be >= 1");
  if (slot_ticks < 1) invalid("slot_ticks must be >= 1");
  if (tick_ms < 1) invalid("tick_ms must be >= 1");
  if (!(std::isfinite(delta_fresh_s) && delta_fresh_s > 0)) invalid("delta_fresh_s must be > 0");
  if (!(std::isfinite(delta_e_meter_kwh) && delta_e_meter_kwh >= 0)) {
    invalid("delta_e_meter_kwh must be >= 0");
  }
  if (!(std::isfinite(credential_lifetime_h) && credential_lifetime_h > 0)) {
    invalid("credential_lifetime_h must be > 0");
  }
  if (pseudonyms != 0 && pseudonyms < slots) invalid("users.pseudonyms must cover every slot");

  check_range(battery.capacity_kwh, "users.battery.capacity_kwh", 0, true);
  check_range(battery.soc_fraction, "users.battery.soc_fraction", 0, false, 1);
  check_range(battery.charger_limit_kwh, "users.battery.charger_limit_kwh", 0, false);
  check_range(battery.efficiency, "users.battery.efficiency", 0, true, 1);
  check_range(terms.alpha, "users.utility.alpha", 0, false);
  check_range(terms.beta, "users.utility.beta", 0, true);
  check_range(terms.gamma, "users.utility.gamma", 0, false);
  check_range(terms.delta, "users.utility.delta", 0, true);
  check_range(terms.p_c, "stations.terms.p_c", 0, false);
  check_range(terms.p_d, "stations.terms.p_d", 0, false);
  check_range(terms.c_g, "stations.terms.c_g", 0, false);
  check_range(terms.v_g, "stations.terms.v_g", 0, false);
  check_range(terms.fee, "stations.terms.fee", 0, false);

  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const auto& a = attacks[i].scenario;
    const std::string where = "attacks[" + std::to_string(i) + "]";
    const auto& names = adversary::variants_of(a.kind);
    if (!a.variant.empty() && std::find(names.begin(), names.end(), a.variant) == names.end()) {
      invalid(where + ": unknown variant '" + a.variant + "'");
    }
    if (!std::isfinite(a.magnitude)) invalid(where + ".magnitude must be finite");
    if (a.kind == adversary::AttackKind::LedgerCorrelation &&
        (a.users < 1 || a.sessions_per_user < 1 || a.seeds < 1)) {
      invalid(where + ": users, sessions_per_user and seeds must be >= 1");
    }
  }
}

WorldConfig ScenarioConfig::world_config() const {
  WorldConfig c;
  c.auth.fresh_window = static_cast<SimTime>(std::llround(delta_fresh_s * 1000.0));
  c.pki.credential_lifetime = static_cast<SimTime>(std::llround(credential_lifetime_h * 3600.0 * 1000.0));
  c.contract.tolerance = Energy::from_kwh(delta_e_meter_kwh);
  c.tick = tick_ms;
  c.slot_ticks = slot_ticks;
  c.capture = capture;
  return c;
}

adversary::HarnessConfig ScenarioConfig::harness_config() const {
  const auto w = world_config();
  return adversary::HarnessConfig{w.auth.fresh_window, w.contract.tolerance};
}

ScenarioConfig parse_scenario(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    invalid(std::string("malformed YAML: ") + e.what());
  }
  if (!root || root.IsNull()) invalid("empty scenario");
  reject_unknown(root, "scenario",
                 {"seed", "slots", "tick_ms", "slot_ticks", "delta_fresh_s", "delta_e_meter_kwh",
                  "credential_lifetime_h", "capture", "users", "stations", "attacks"});
  ScenarioConfig c;
  read(root, "seed", c.seed, "scenario");
  read(root, "slots", c.slots, "scenario");
  read(root, "tick_ms", c.tick_ms, "scenario");
  read(root, "slot_ticks", c.slot_ticks, "scenario");
  read(root, "delta_fresh_s", c.delta_fresh_s, "scenario");
  read(root, "delta_e_meter_kwh", c.delta_e_meter_kwh, "scenario");
  read(root, "credential_lifetime_h", c.credential_lifetime_h, "scenario");
  read(root, "capture", c.capture, "scenario");

  if (const auto users = root["users"]) {
    reject_unknown(users, "users", {"count", "pseudonyms", "battery", "utility"});
    read(users, "count", c.users, "users");
    read(users, "pseudonyms", c.pseudonyms, "users");
    if (const auto b = users["battery"]) {
      reject_unknown(b, "users.battery", {"capacity_kwh", "soc_fraction", "charger_limit_kwh", "efficiency"});
      read_range(b, "capacity_kwh", c.battery.capacity_kwh, "users.battery");
      read_range(b, "soc_fraction", c.battery.soc_fraction, "users.battery");
      read_range(b, "charger_limit_kwh", c.battery.charger_limit_kwh, "users.battery");
      read_range(b, "efficiency", c.battery.efficiency, "users.battery");
    }
    if (const auto u = users["utility"]) {
      reject_unknown(u, "users.utility", {"alpha", "beta", "gamma", "delta"});
      read_range(u, "alpha", c.terms.alpha, "users.utility");
      read_range(u, "beta", c.terms.beta, "users.utility");
      read_range(u, "gamma", c.terms.gamma, "users.utility");
      read_range(u, "delta", c.terms.delta, "users.utility");
    }
  }
  if (const auto stations = root["stations"]) {
    reject_unknown(stations, "stations", {"count", "terms"});
    read(stations, "count", c.stations, "stations");
    if (const auto t = stations["terms"]) {
      reject_unknown(t, "stations.terms", {"p_c", "p_d", "c_g", "v_g", "fee"});
      read_range(t, "p_c", c.terms.p_c, "stations.terms");
      read_range(t, "p_d", c.terms.p_d, "stations.terms");
      read_range(t, "c_g", c.terms.c_g, "stations.terms");
      read_range(t, "v_g", c.terms.v_g, "stations.terms");
      read_range(t, "fee", c.terms.fee, "stations.terms");
    }
  }
  if (const auto attacks = root["attacks"]) {
    if (!attacks.IsSequence()) invalid("attacks: expected a list");
    for (std::size_t i = 0; i < attacks.size(); ++i) {
      const auto a = attacks[i];
      const std::string where = "attacks[" + std::to_string(i) + "]";
      reject_unknown(a, where, {"kind", "variant", "seed", "trials", "magnitude", "users",
                                "sessions_per_user", "seeds"});
      if (!a["kind"]) invalid(where + ": missing kind");
      AttackEntry e;
      e.scenario.kind = adversary::parse_attack_kind(a["kind"].as<std::string>());
      read(a, "variant", e.scenario.variant, where);
      e.seed_given = static_cast<bool>(a["seed"]);
      read(a, "seed", e.scenario.seed, where);
      read(a, "trials", e.scenario.trials, where);
      read(a, "magnitude", e.scenario.magnitude, where);
      read(a, "users", e.scenario.users, where);
      read(a, "sessions_per_user", e.scenario.sessions_per_user, where);
      read(a, "seeds", e.scenario.seeds, where);
      c.attacks.push_back(std::move(e));
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["slots"] = c.slots;
  j["tick_ms"] = c.tick_ms;
  j["slot_ticks"] = c.slot_ticks;
  j["delta_fresh_s"] = c.delta_fresh_s;
  j["delta_e_meter_kwh"] = c.delta_e_meter_kwh;
  j["credential_lifetime_h"] = c.credential_lifetime_h;
  j["capture"] = c.capture;
  j["users"] = {{"count", c.users},
                {"pseudonyms", c.pseudonyms ? c.pseudonyms : c.slots},
                {"battery",
                 {{"capacity_kwh", range_json(c.battery.capacity_kwh)},
                  {"soc_fraction", range_json(c.battery.soc_fraction)},
                  {"charger_limit_kwh", range_json(c.battery.charger_limit_kwh)},
                  {"efficiency", range_json(c.battery.efficiency)}}},
                {"utility",
                 {{"alpha", range_json(c.terms.alpha)},
                  {"beta", range_json(c.terms.beta)},
                  {"gamma", range_json(c.terms.gamma)},
                  {"delta", range_json(c.terms.delta)}}}};
  j["stations"] = {{"count", c.stations},
                   {"terms",
                    {{"p_c", range_json(c.terms.p_c)},
                     {"p_d", range_json(c.terms.p_d)},
                     {"c_g", range_json(c.terms.c_g)},
                     {"v_g", range_json(c.terms.v_g)},
                     {"fee", range_json(c.terms.fee)}}}};
  auto attacks = nlohmann::ordered_json::array();
  for (const auto& e : c.attacks) {
    const auto& a = e.scenario;
    nlohmann::ordered_json item;
    item["kind"] = std::string(adversary::to_string(a.kind));
    item["variant"] = a.variant.empty() ? adversary::variants_of(a.kind).front() : a.variant;
    item["seed"] = a.seed;
    item["trials"] = a.trials;
    item["magnitude"] = a.magnitude;
    if (a.kind == adversary::AttackKind::LedgerCorrelation) {
      item["users"] = a.users;
      item["sessions_per_user"] = a.sessions_per_user;
      item["seeds"] = a.seeds;
    }
    attacks.push_back(std::move(item));
  }
  j["attacks"] = std::move(attacks);
  return j;
}

}  // namespace v2g::sim
