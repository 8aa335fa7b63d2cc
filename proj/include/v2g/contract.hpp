#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "v2g/ledger.hpp"
#include "v2g/units.hpp"

// Per-session smart contract for the transaction phase: utility submission,
// joint-utility scheduling, metering reconciliation, billing, finalization
// and dispute handling. Sign convention: x > 0 charges the EV, x < 0
// discharges it.
namespace v2g::contract {

using ledger::DisputeCause;

// EV-side utility coefficients.
struct EvUtility {
  double alpha = 0;  // marginal charging benefit, per kWh
  double beta = 0;   // charging-benefit curvature, per kWh^2
  double gamma = 0;  // discharge degradation cost, per kWh
  double delta = 0;  // discharge inconvenience curvature, per kWh^2
};

// Station-side terms.
struct StationTerms {
  double p_c = 0;  // charging price
  double p_d = 0;  // discharging price
  double c_g = 0;  // grid procurement cost
  double v_g = 0;  // grid value of injected energy
  double fee = 0;  // flat service fee, paid by the EV
};

struct TradeParams {
  double alpha = 0, beta = 0, gamma = 0, delta = 0;
  double p_c = 0, p_d = 0, c_g = 0, v_g = 0, fee = 0;

  static TradeParams merge(const EvUtility& ev, const StationTerms& station);
  // Throws Error(InvalidParams) unless beta > 0, delta > 0 and every price,
  // cost and fee is non-negative and finite.
  void validate() const;
};

struct EnergyBounds {
  double x_min = 0;  // <= 0, deepest discharge this slot (kWh)
  double x_max = 0;  // >= 0, largest charge this slot (kWh)
  void validate() const;
};

// U_user(x >= 0) = alpha x - beta x^2 - p_c x
// U_user(x <  0) = p_d s - gamma s - delta s^2,          s = -x
double user_utility(double x, const TradeParams& p);
// U_evcs(x >= 0) = (p_c - c_g) x;  U_evcs(x < 0) = (v_g - p_d) s
double station_utility(double x, const TradeParams& p);
// Sum of the two; payments cancel.
double joint_utility(double x, const TradeParams& p);

// argmax of joint_utility over [x_min, x_max], from the two clamped branch
// vertices and 0. Ties go to the smaller |x|.
double compute_optimal_exchange(const TradeParams& params, const EnergyBounds& bounds);

struct Battery {
  double soc_kwh = 0;
  double capacity_kwh = 0;
  double charger_limit_kwh = 0;  // per slot
  double efficiency = 1.0;

  // x_max = min(limit, capacity - soc), x_min = -min(limit, soc).
  EnergyBounds bounds() const;
  // soc + x * eff when charging, soc - |x| / eff when discharging, clamped
  // to [0, capacity].
  Battery after(double x_kwh) const;
};

struct Schedule {
  std::uint32_t slot = 0;
  TradeParams params;
  EnergyBounds bounds;
  double x_star_kwh = 0;
  Energy scheduled;  // x_star quantized to Wh
};

enum class MeterSource : std::uint8_t { Ev, Evcs };

struct MeterReading {
  MeterSource source = MeterSource::Ev;
  std::uint32_t slot = 0;
  Energy cumulative;
  std::uint64_t tick = 0;
};

enum class MeteringStatus { Ok, Violation, MissingReading };
std::string_view to_string(MeteringStatus s) noexcept;

// Compares paired cumulative readings each tick. The first non-OK status
// latches for the rest of the slot.
class MeteringMonitor {
 public:
  explicit MeteringMonitor(Energy tolerance) : tolerance_(tolerance) {}

  MeteringStatus check_tick(std::uint64_t tick, const std::optional<MeterReading>& ev,
                            const std::optional<MeterReading>& evcs);

  MeteringStatus status() const noexcept { return status_; }
  std::optional<Energy> last_ev() const noexcept { return last_ev_; }
  std::optional<Energy> last_evcs() const noexcept { return last_evcs_; }
  std::optional<std::uint64_t> violation_tick() const noexcept { return violation_tick_; }
  Energy tolerance() const noexcept { return tolerance_; }

 private:
  Energy tolerance_;
  MeteringStatus status_ = MeteringStatus::Ok;
  std::optional<Energy> last_ev_;
  std::optional<Energy> last_evcs_;
  std::optional<std::uint64_t> violation_tick_;
};

enum class Payer : std::uint8_t { Ev, Evcs };

struct Bill {
  std::uint32_t slot = 0;
  Energy energy;
  Money energy_amount;  // p_c * x when charging, p_d * |x| when discharging
  Money fee;
  Money total;  // |energy_amount| + fee
  Payer payer = Payer::Ev;
  bool operator==(const Bill&) const = default;
};

Bill generate_bill(std::uint32_t slot, Energy delivered, const TradeParams& params);

// Signed balance changes for one slot. Conservation: the three sum to zero.
struct Settlement {
  Money ev;
  Money evcs;
  Money operator_account;
};
Settlement settle(const Bill& bill);
// Voided slot: only the fee moves.
Settlement settle_fee_only(Money fee);

enum class Resolution : std::uint8_t { SettledMinimum, Voided };
std::string_view to_string(Resolution r) noexcept;

struct DisputeEvidence {
  std::optional<Energy> ev_reading;
  std::optional<Energy> evcs_reading;
  std::optional<Bill> proposed_bill;
};

struct DisputeCase {
  std::uint32_t slot = 0;
  DisputeCause cause = DisputeCause::MeterMismatch;
  DisputeEvidence evidence;
  std::optional<Resolution> resolution;
  std::optional<Bill> settled_bill;  // SettledMinimum only
  Money fee_owed;
};

struct ContractConfig {
  Energy tolerance = Energy::wh(50);
};

enum class SlotPhase { AwaitingUtilities, Scheduled, Ended, Finalized, Disputed, Resolved };

// One EV-station session's contract. Ledger writes go through the shared
// single-sequencer ledger.
class SmartContract {
 public:
  SmartContract(ledger::Ledger& ledger, ContractConfig config, std::string pid, std::string evcs_id,
                bool session_authenticated);

  // Errors: NoSession, InvalidParams.
  const Schedule& submit_utilities(std::uint32_t slot, const EvUtility& ev,
                                   const StationTerms& station, const EnergyBounds& bounds);

  MeteringStatus report_metering(std::uint64_t tick, const std::optional<MeterReading>& ev,
                                 const std::optional<MeterReading>& evcs);
  void end_slot();

  // The contract's own bill for the slot: the undisputed (smaller
  // magnitude) metered quantity at the agreed prices.
  // Errors: SlotNotEnded, MeteringUnresolved.
  Bill expected_bill() const;

  // Both acks: TransactionRecord on the ledger. Otherwise a dispute opens:
  // PaymentDefault when the bill matches the contract's and the EV refuses,
  // BillRejected otherwise. Errors: SlotNotEnded, MeteringUnresolved.
  std::variant<ledger::TransactionRecord, DisputeCase> finalize(const Bill& bill, bool ev_ack,
                                                               bool evcs_ack, SimTime now);

  // Appends the DisputeRecord.
  const DisputeCase& open_dispute(DisputeCause cause, DisputeEvidence evidence, SimTime now);
  // MeterMismatch settles at the smaller reading; PaymentDefault and
  // BillRejected are voided with the fee still owed. Idempotent.
  Resolution resolve_dispute();

  const Schedule& schedule() const;
  const std::optional<DisputeCase>& dispute() const noexcept { return dispute_; }
  const std::optional<ledger::TransactionRecord>& record() const noexcept { return record_; }
  std::optional<Settlement> settlement() const noexcept { return settlement_; }
  SlotPhase phase() const noexcept { return phase_; }
  const MeteringMonitor& monitor() const noexcept { return monitor_; }
  const std::string& pid() const noexcept { return pid_; }

 private:
  ledger::Ledger& ledger_;
  ContractConfig config_;
  std::string pid_;
  std::string evcs_id_;
  bool authenticated_;
  SlotPhase phase_ = SlotPhase::AwaitingUtilities;
  std::optional<Schedule> schedule_;
  MeteringMonitor monitor_;
  std::optional<ledger::TransactionRecord> record_;
  std::optional<DisputeCase> dispute_;
  std::optional<Settlement> settlement_;
};

// The EV's own append-only log of its settled slots.
struct EvLedgerEntry {
  std::uint32_t slot = 0;
  std::string pid;
  Energy energy;
  Money paid;
  bool disputed = false;
};

struct NextSlot {
  std::uint32_t slot = 0;
  Battery battery;
  EnergyBounds bounds;
};

// Appends the slot's outcome to the EV log and rolls the battery forward by
// the scheduled exchange. Errors: UnresolvedSlot.
NextSlot log_and_prepare_next(const SmartContract& contract, const Battery& battery,
                              std::vector<EvLedgerEntry>& ev_log);

}  // namespace v2g::contract
