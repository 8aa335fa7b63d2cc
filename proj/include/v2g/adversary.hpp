#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "v2g/ledger.hpp"
#include "v2g/world.hpp"

// Attack scenarios run against the real protocol stack. Each scenario builds
// its own world from its seed, declares the outcome the defenses must
// produce, and reports what actually happened.
namespace v2g::adversary {

enum class AttackKind {
  MitmRelay,
  ReplayM1,
  LedgerCorrelation,
  EvcsTamperParams,
  EvcsCredentialExtract,
  EvRefusePay,
  EvFalseMeter,
  CrossSessionRelay,
};
std::string_view to_string(AttackKind kind) noexcept;
// Throws Error(ConfigInvalid) for unknown names.
AttackKind parse_attack_kind(std::string_view name);
// Accepted variant names per kind; the first is the default.
const std::vector<std::string>& variants_of(AttackKind kind);

struct AttackScenario {
  AttackKind kind = AttackKind::MitmRelay;
  std::string variant;  // empty selects the kind's default
  std::uint64_t seed = 0;
  std::size_t trials = 0;  // 0 selects the kind's default
  // Meter offset in kWh (EvcsTamperParams/inflate_meter, EvFalseMeter) or
  // price factor (EvcsTamperParams/substitute_price). 0 selects the default.
  double magnitude = 0;
  // LedgerCorrelation only.
  std::size_t users = 5;
  std::size_t sessions_per_user = 10;
  std::size_t seeds = 50;
};

struct OutcomeReport {
  AttackKind kind = AttackKind::MitmRelay;
  std::string variant;
  std::uint64_t seed = 0;
  std::string expected;
  std::string observed;
  bool pass = false;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(std::string_view name) const;
};

// Freshness window and metering tolerance the scenarios run under.
struct HarnessConfig {
  SimTime fresh_window = 120 * kSecond;
  Energy meter_tolerance = Energy::wh(50);
};

OutcomeReport run_scenario(const AttackScenario& scenario, const HarnessConfig& config = {});

// Variants: passive, modify_m2, forge.
OutcomeReport run_mitm(const AttackScenario& scenario, const HarnessConfig& config = {});
// Variants: stale, in_window, transcript.
OutcomeReport run_replay(const AttackScenario& scenario, const HarnessConfig& config = {});
// Variants: unique, reused (pseudonym defense ablated).
OutcomeReport run_ledger_correlation(const AttackScenario& scenario,
                                     const HarnessConfig& config = {});
// EvcsTamperParams variants: inflate_meter, substitute_price.
// EvcsCredentialExtract variant: capture.
OutcomeReport run_malicious_evcs(const AttackScenario& scenario, const HarnessConfig& config = {});
// EvRefusePay variant: refuse. EvFalseMeter variants: under_report, silent.
// CrossSessionRelay variants: relay, after_use.
OutcomeReport run_malicious_ev(const AttackScenario& scenario, const HarnessConfig& config = {});

// Ledger-only linkage analyst. Sees the transaction records and, for each
// user, one session already tied to them (the reference). Every other record
// is assigned greedily: a pid seen in a cluster decides outright, otherwise
// the nearest cluster by bill amount, energy and time-of-slot, never giving
// one user two sessions in the same slot.
struct LinkageInput {
  std::vector<ledger::TransactionRecord> records;  // ledger order
  std::vector<std::size_t> reference;              // record index per user
  SimTime slot_length = 0;
};
// Returns the user index assigned to every record.
std::vector<std::size_t> assign_sessions(const LinkageInput& input);

// Mean linkage accuracy over `seeds` simulated deployments.
struct CorrelationResult {
  double mean_accuracy = 0;
  double chance = 0;
  std::vector<double> per_seed;
};
CorrelationResult measure_linkage(std::uint64_t seed, std::size_t users, std::size_t sessions,
                                  std::size_t seeds, bool reuse_pids, const HarnessConfig& config);

}  // namespace v2g::adversary
