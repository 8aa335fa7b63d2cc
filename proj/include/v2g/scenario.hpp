#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "v2g/adversary.hpp"
#include "v2g/world.hpp"

// Scenario files and the end-to-end run they describe. The file format is
// YAML; the schema is documented in the top-level README.
namespace v2g::sim {

struct AttackEntry {
  adversary::AttackScenario scenario;
  bool seed_given = false;  // otherwise derived from the run seed
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::uint32_t slots = 3;
  std::int64_t tick_ms = 1000;
  std::uint32_t slot_ticks = 300;
  double delta_fresh_s = 120;
  double delta_e_meter_kwh = 0.05;
  double credential_lifetime_h = 24;
  bool capture = false;

  std::size_t users = 2;
  std::size_t pseudonyms = 0;  // per user; 0 means one per slot
  BatteryRanges battery;
  std::size_t stations = 1;
  TermRanges terms;

  std::vector<AttackEntry> attacks;

  // Throws Error(ConfigInvalid) naming the first offending field.
  void validate() const;
  WorldConfig world_config() const;
  adversary::HarnessConfig harness_config() const;
};

// Throws Error(ConfigInvalid) on malformed YAML, unknown keys or invalid
// values.
ScenarioConfig parse_scenario(std::string_view yaml_text);
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ScenarioConfig& config);

struct RunOutput {
  nlohmann::ordered_json report;
  std::string ledger_jsonl;
  std::optional<std::string> capture_jsonl;
  bool expectations_met = false;
};

// Registration, one charging session per user per slot, then the attack
// scenarios. Everything except report["wall_clock_ms"] is a function of the
// config.
RunOutput run_scenario(const ScenarioConfig& config);

// report.json, ledger.jsonl and, when present, capture.jsonl. Throws
// Error(IoFailure).
void write_outputs(const RunOutput& out, const std::filesystem::path& dir);

}  // namespace v2g::sim
