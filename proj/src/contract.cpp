#include "v2g/contract.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "v2g/error.hpp"

namespace v2g::contract {

namespace {

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

Energy smaller_magnitude(Energy a, Energy b) { return a.abs() <= b.abs() ? a.abs() : b.abs(); }

}  // namespace

TradeParams TradeParams::merge(const EvUtility& ev, const StationTerms& station) {
  TradeParams p;
  p.alpha = ev.alpha;
  p.beta = ev.beta;
  p.gamma = ev.gamma;
  p.delta = ev.delta;
  p.p_c = station.p_c;
  p.p_d = station.p_d;
  p.c_g = station.c_g;
  p.v_g = station.v_g;
  p.fee = station.fee;
  return p;
}

void TradeParams::validate() const {
  if (!(std::isfinite(beta) && beta > 0)) throw Error(Errc::InvalidParams, "beta must be > 0");
  if (!(std::isfinite(delta) && delta > 0)) throw Error(Errc::InvalidParams, "delta must be > 0");
  for (double v : {alpha, gamma, p_c, p_d, c_g, v_g, fee}) {
    if (!finite_non_negative(v)) {
      throw Error(Errc::InvalidParams, "prices, costs and coefficients must be non-negative");
    }
  }
}

void EnergyBounds::validate() const {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && x_min <= 0.0 && x_max >= 0.0)) {
    throw Error(Errc::InvalidParams, "bounds must satisfy x_min <= 0 <= x_max");
  }
}

double user_utility(double x, const TradeParams& p) {
  if (x >= 0) return p.alpha * x - p.beta * x * x - p.p_c * x;
  const double s = -x;
  return p.p_d * s - p.gamma * s - p.delta * s * s;
}

double station_utility(double x, const TradeParams& p) {
  if (x >= 0) return (p.p_c - p.c_g) * x;
  return (p.v_g - p.p_d) * -x;
}

double joint_utility(double x, const TradeParams& p) {
  if (x >= 0) return (p.alpha - p.c_g) * x - p.beta * x * x;
  const double s = -x;
  return (p.v_g - p.gamma) * s - p.delta * s * s;
}

double compute_optimal_exchange(const TradeParams& params, const EnergyBounds& bounds) {
  std::array<double, 3> candidates{0.0, 0.0, 0.0};
  if (bounds.x_max > 0) {
    candidates[1] = std::clamp((params.alpha - params.c_g) / (2.0 * params.beta), 0.0, bounds.x_max);
  }
  if (bounds.x_min < 0) {
    candidates[2] = std::clamp(-(params.v_g - params.gamma) / (2.0 * params.delta), bounds.x_min, 0.0);
  }
  double best = 0.0;
  double best_value = joint_utility(0.0, params);
  for (double x : candidates) {
    const double value = joint_utility(x, params);
    if (value > best_value || (value == best_value && std::abs(x) < std::abs(best))) {
      best = x;
      best_value = value;
    }
  }
  return best;
}

EnergyBounds Battery::bounds() const {
  return EnergyBounds{-std::min(charger_limit_kwh, soc_kwh),
                      std::max(0.0, std::min(charger_limit_kwh, capacity_kwh - soc_kwh))};
}

Battery Battery::after(double x_kwh) const {
  Battery next = *this;
  if (x_kwh >= 0) {
    next.soc_kwh = soc_kwh + x_kwh * efficiency;
  } else {
    next.soc_kwh = soc_kwh - (-x_kwh) / efficiency;
  }
  next.soc_kwh = std::clamp(next.soc_kwh, 0.0, capacity_kwh);
  return next;
}

std::string_view to_string(MeteringStatus s) noexcept {
  switch (s) {
    case MeteringStatus::Ok: return "Ok";
    case MeteringStatus::Violation: return "Violation";
    case MeteringStatus::MissingReading: return "MissingReading";
  }
  return "Unknown";
}

std::string_view to_string(Resolution r) noexcept {
  return r == Resolution::SettledMinimum ? "SettledMinimum" : "Voided";
}

MeteringStatus MeteringMonitor::check_tick(std::uint64_t tick, const std::optional<MeterReading>& ev,
                                           const std::optional<MeterReading>& evcs) {
  if (ev) last_ev_ = ev->cumulative;
  if (evcs) last_evcs_ = evcs->cumulative;
  if (status_ != MeteringStatus::Ok) return status_;
  if (!ev || !evcs) {
    status_ = MeteringStatus::MissingReading;
    violation_tick_ = tick;
  } else if ((ev->cumulative - evcs->cumulative).abs() > tolerance_) {
    status_ = MeteringStatus::Violation;
    violation_tick_ = tick;
  }
  return status_;
}

Bill generate_bill(std::uint32_t slot, Energy delivered, const TradeParams& params) {
  Bill b;
  b.slot = slot;
  b.energy = delivered;
  if (delivered > Energy{}) {
    b.energy_amount = charge_for(params.p_c, delivered);
    b.payer = Payer::Ev;
  } else {
    b.energy_amount = charge_for(params.p_d, delivered);
    b.payer = Payer::Evcs;
  }
  b.fee = Money::from_units(params.fee);
  b.total = b.energy_amount.abs() + b.fee;
  return b;
}

Settlement settle(const Bill& bill) {
  Settlement s;
  if (bill.payer == Payer::Ev) {
    s.ev = -bill.energy_amount;
    s.evcs = bill.energy_amount;
  } else {
    s.ev = bill.energy_amount;
    s.evcs = -bill.energy_amount;
  }
  s.ev = s.ev - bill.fee;
  s.operator_account = bill.fee;
  return s;
}

Settlement settle_fee_only(Money fee) { return Settlement{-fee, Money{}, fee}; }

SmartContract::SmartContract(ledger::Ledger& ledger, ContractConfig config, std::string pid,
                             std::string evcs_id, bool session_authenticated)
    : ledger_(ledger),
      config_(config),
      pid_(std::move(pid)),
      evcs_id_(std::move(evcs_id)),
      authenticated_(session_authenticated),
      monitor_(config.tolerance) {}

const Schedule& SmartContract::submit_utilities(std::uint32_t slot, const EvUtility& ev,
                                                const StationTerms& station,
                                                const EnergyBounds& bounds) {
  if (!authenticated_) throw Error(Errc::NoSession, "no authenticated session");
  if (phase_ != SlotPhase::AwaitingUtilities) throw Error(Errc::InvalidParams, "slot already scheduled");
  auto params = TradeParams::merge(ev, station);
  params.validate();
  bounds.validate();
  Schedule s;
  s.slot = slot;
  s.params = params;
  s.bounds = bounds;
  s.x_star_kwh = compute_optimal_exchange(params, bounds);
  s.scheduled = Energy::from_kwh(s.x_star_kwh);
  schedule_ = s;
  phase_ = SlotPhase::Scheduled;
  return *schedule_;
}

const Schedule& SmartContract::schedule() const {
  if (!schedule_) throw Error(Errc::NoSchedule, "utilities not yet submitted");
  return *schedule_;
}

MeteringStatus SmartContract::report_metering(std::uint64_t tick, const std::optional<MeterReading>& ev,
                                              const std::optional<MeterReading>& evcs) {
  if (phase_ != SlotPhase::Scheduled) throw Error(Errc::NoSchedule, "metering outside a scheduled slot");
  return monitor_.check_tick(tick, ev, evcs);
}

void SmartContract::end_slot() {
  if (phase_ != SlotPhase::Scheduled) throw Error(Errc::NoSchedule, "no running slot to end");
  phase_ = SlotPhase::Ended;
}

Bill SmartContract::expected_bill() const {
  if (phase_ == SlotPhase::AwaitingUtilities || phase_ == SlotPhase::Scheduled) {
    throw Error(Errc::SlotNotEnded, "slot still running");
  }
  if (monitor_.status() != MeteringStatus::Ok || !monitor_.last_ev() || !monitor_.last_evcs()) {
    throw Error(Errc::MeteringUnresolved, "metering not within tolerance");
  }
  Energy qty = smaller_magnitude(*monitor_.last_ev(), *monitor_.last_evcs());
  if (schedule_->scheduled < Energy{}) qty = -qty;
  return generate_bill(schedule_->slot, qty, schedule_->params);
}

std::variant<ledger::TransactionRecord, DisputeCase> SmartContract::finalize(const Bill& bill,
                                                                            bool ev_ack,
                                                                            bool evcs_ack,
                                                                            SimTime now) {
  if (phase_ == SlotPhase::AwaitingUtilities || phase_ == SlotPhase::Scheduled) {
    throw Error(Errc::SlotNotEnded, "finalize before slot end");
  }
  if (phase_ != SlotPhase::Ended) throw Error(Errc::Rejected, "slot already closed");
  const Bill own = expected_bill();  // throws MeteringUnresolved after a latch

  if (ev_ack && evcs_ack && bill == own) {
    ledger::TransactionRecord rec;
    rec.pid = pid_;
    rec.evcs_id = evcs_id_;
    rec.slot = bill.slot;
    rec.energy = bill.energy;
    rec.amount = bill.total;
    rec.finalized_at = now;
    ledger_.append_entry({ledger::EntryKind::TransactionRecord, rec.encode(), now, "contract"});
    record_ = rec;
    settlement_ = settle(bill);
    phase_ = SlotPhase::Finalized;
    return rec;
  }
  const auto cause = (bill == own && !ev_ack) ? DisputeCause::PaymentDefault : DisputeCause::BillRejected;
  return open_dispute(cause, DisputeEvidence{monitor_.last_ev(), monitor_.last_evcs(), bill}, now);
}

const DisputeCase& SmartContract::open_dispute(DisputeCause cause, DisputeEvidence evidence,
                                               SimTime now) {
  if (dispute_) return *dispute_;
  if (!schedule_) throw Error(Errc::NoSchedule, "no slot to dispute");
  if (phase_ == SlotPhase::Finalized) throw Error(Errc::Rejected, "slot already finalized");
  DisputeCase c;
  c.slot = schedule_->slot;
  c.cause = cause;
  c.evidence = std::move(evidence);

  ledger::DisputeRecord rec;
  rec.pid = pid_;
  rec.evcs_id = evcs_id_;
  rec.slot = c.slot;
  rec.cause = cause;
  rec.ev_reading = c.evidence.ev_reading;
  rec.evcs_reading = c.evidence.evcs_reading;
  rec.proposed_total = c.evidence.proposed_bill ? c.evidence.proposed_bill->total : Money{};
  rec.opened_at = now;
  ledger_.append_entry({ledger::EntryKind::DisputeRecord, rec.encode(), now, "contract"});

  dispute_ = std::move(c);
  phase_ = SlotPhase::Disputed;
  return *dispute_;
}

Resolution SmartContract::resolve_dispute() {
  if (!dispute_) throw Error(Errc::Rejected, "no open dispute");
  if (dispute_->resolution) return *dispute_->resolution;
  const auto& params = schedule_->params;
  if (dispute_->cause == DisputeCause::MeterMismatch) {
    // A silent meter contributes nothing undisputed.
    const Energy ev = dispute_->evidence.ev_reading.value_or(Energy{});
    const Energy evcs = dispute_->evidence.evcs_reading.value_or(Energy{});
    Energy qty = (dispute_->evidence.ev_reading && dispute_->evidence.evcs_reading)
                     ? smaller_magnitude(ev, evcs)
                     : Energy{};
    if (schedule_->scheduled < Energy{}) qty = -qty;
    dispute_->settled_bill = generate_bill(dispute_->slot, qty, params);
    dispute_->fee_owed = dispute_->settled_bill->fee;
    dispute_->resolution = Resolution::SettledMinimum;
    settlement_ = settle(*dispute_->settled_bill);
  } else {
    dispute_->fee_owed = Money::from_units(params.fee);
    dispute_->resolution = Resolution::Voided;
    settlement_ = settle_fee_only(dispute_->fee_owed);
  }
  phase_ = SlotPhase::Resolved;
  return *dispute_->resolution;
}

NextSlot log_and_prepare_next(const SmartContract& contract, const Battery& battery,
                              std::vector<EvLedgerEntry>& ev_log) {
  if (contract.phase() != SlotPhase::Finalized && contract.phase() != SlotPhase::Resolved) {
    throw Error(Errc::UnresolvedSlot, "slot neither finalized nor resolved");
  }
  const auto& schedule = contract.schedule();
  EvLedgerEntry entry;
  entry.slot = schedule.slot;
  entry.pid = contract.pid();
  if (contract.record()) {
    entry.energy = contract.record()->energy;
  } else if (contract.dispute() && contract.dispute()->settled_bill) {
    entry.energy = contract.dispute()->settled_bill->energy;
  }
  entry.paid = -contract.settlement()->ev;
  entry.disputed = contract.dispute().has_value();
  ev_log.push_back(entry);

  NextSlot next;
  next.slot = schedule.slot + 1;
  next.battery = battery.after(schedule.scheduled.kwh());
  next.bounds = next.battery.bounds();
  return next;
}

}  // namespace v2g::contract
