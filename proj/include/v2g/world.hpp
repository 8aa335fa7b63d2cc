#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "v2g/actors.hpp"
#include "v2g/channels.hpp"
#include "v2g/contract.hpp"
#include "v2g/ledger.hpp"
#include "v2g/pki.hpp"

// A populated deployment: one CA, a ledger, the channel fabric, and the EVs
// and stations registered with them. Both the scenario runner and the attack
// harness drive charging sessions through this type.
namespace v2g::sim {

struct WorldConfig {
  actors::AuthConfig auth;
  pki::PkiConfig pki;
  contract::ContractConfig contract;
  SimTime tick = kSecond;
  std::uint32_t slot_ticks = 300;
  bool capture = false;

  SimTime slot_length() const noexcept { return tick * slot_ticks; }
};

struct UserSlot {
  std::string name;
  channels::EndpointId endpoint;
  std::unique_ptr<actors::EvActor> actor;
  contract::Battery battery;
  std::vector<contract::EvLedgerEntry> log;
};

struct StationSlot {
  channels::EndpointId endpoint;
  std::unique_ptr<actors::EvcsActor> actor;
};

// Per-session misbehaviour knobs. The defaults are an honest session.
struct SessionBehavior {
  double ev_meter_offset_kwh = 0;    // added to every EV reading, in the flow direction
  double evcs_meter_offset_kwh = 0;  // same for the station meter
  std::optional<std::uint32_t> ev_silent_from_tick;
  bool ev_refuses_payment = false;
  // Applied to p_c and p_d in the bill the station presents, after the
  // schedule was agreed at the true prices.
  double evcs_price_factor = 1.0;
};

struct SlotTerms {
  contract::EvUtility ev;
  contract::StationTerms station;
};

// Uniform draw range; lo == hi gives a constant.
struct Range {
  double lo = 0;
  double hi = 0;
  double draw(crypto::Drbg& rng) const { return rng.uniform(lo, hi); }
};

struct TermRanges {
  Range alpha{0.35, 0.60};
  Range beta{0.008, 0.020};
  Range gamma{0.05, 0.12};
  Range delta{0.010, 0.030};
  Range p_c{0.15, 0.30};
  Range p_d{0.10, 0.25};
  Range c_g{0.05, 0.15};
  Range v_g{0.10, 0.35};
  Range fee{0.20, 0.60};

  SlotTerms draw(crypto::Drbg& rng) const;
};

struct BatteryRanges {
  Range capacity_kwh{50, 80};
  Range soc_fraction{0.15, 0.50};
  Range charger_limit_kwh{11, 22};
  Range efficiency{0.92, 0.98};

  contract::Battery draw(crypto::Drbg& rng) const;
};

// alpha 0.5, beta 0.01, gamma 0.1, delta 0.01; p_c 0.2, p_d 0.25, c_g 0.1,
// v_g 0.3, fee 0.5. Schedules x* = 20 kWh when the battery allows it.
SlotTerms reference_terms();

enum class SlotStatus { AuthFailed, Finalized, Disputed };
std::string_view to_string(SlotStatus s) noexcept;

struct SlotResult {
  std::uint32_t slot = 0;
  std::size_t user = 0;
  std::size_t station = 0;
  SimTime started_at = 0;
  actors::HandshakeOutcome auth;
  std::optional<contract::Schedule> schedule;
  contract::MeteringStatus metering = contract::MeteringStatus::Ok;
  std::optional<std::uint64_t> violation_tick;
  std::optional<contract::Bill> presented_bill;
  bool ev_ack = false;
  SlotStatus status = SlotStatus::AuthFailed;
  std::optional<ledger::DisputeCause> dispute_cause;
  std::optional<contract::Resolution> resolution;
  Money bill_total;  // finalized total, or the settled / fee-only amount
  std::optional<contract::Settlement> settlement;
  std::size_t meter_frames = 0;
};

class World {
 public:
  World(std::uint64_t seed, WorldConfig config);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  // Registers a user with the CA, issues its pseudonym batch and creates the
  // EV actor and its radio endpoint.
  std::size_t add_user(contract::Battery battery, std::size_t pseudonyms, SimTime now);
  std::size_t add_station(SimTime now);
  // Seals a block if entries are pending.
  void seal_pending();
  // Discards frames left in an endpoint's inbox by an aborted exchange.
  void drain(channels::EndpointId endpoint);

  // Plugs the EV in and runs the handshake with its next fresh pid (or the
  // given one). The EV stays plugged.
  actors::HandshakeOutcome authenticate(std::size_t user, std::size_t station, SimTime now,
                                        std::optional<std::string> pid = std::nullopt);

  // Full slot: handshake, utility submission, per-tick metering over the CAN
  // bus, billing, finalization or dispute, and the EV's local bookkeeping.
  SlotResult run_charging_slot(std::size_t user, std::size_t station, std::uint32_t slot,
                               SimTime start, const SlotTerms& terms,
                               const SessionBehavior& behavior = {},
                               std::optional<std::string> pid = std::nullopt);

  ledger::Ledger& ledger() noexcept { return *ledger_; }
  pki::CertificateAuthority& ca() noexcept { return *ca_; }
  channels::ChannelFabric& fabric() noexcept { return *fabric_; }
  crypto::Drbg& rng() noexcept { return scenario_rng_; }
  const WorldConfig& config() const noexcept { return config_; }

  UserSlot& user(std::size_t i) { return users_.at(i); }
  StationSlot& station(std::size_t j) { return stations_.at(j); }
  std::size_t user_count() const noexcept { return users_.size(); }
  std::size_t station_count() const noexcept { return stations_.size(); }

  // Every secret the deployment holds: CA-issued private keys plus the
  // challenges and session keys of every handshake run so far. Used to scan
  // artifacts for leakage.
  std::vector<Bytes> secrets() const;

 private:
  void remember_secrets(const UserSlot& u, const StationSlot& s);

  WorldConfig config_;
  crypto::Drbg root_;
  crypto::Drbg scenario_rng_;
  std::unique_ptr<ledger::Ledger> ledger_;
  std::unique_ptr<pki::CertificateAuthority> ca_;
  std::unique_ptr<channels::ChannelFabric> fabric_;
  std::vector<UserSlot> users_;
  std::vector<StationSlot> stations_;
  std::vector<Bytes> session_secrets_;
};

// Number of secrets that occur as a contiguous byte run in any blob.
std::size_t count_leaks(const std::vector<Bytes>& secrets, const std::vector<Bytes>& blobs);

}  // namespace v2g::sim
