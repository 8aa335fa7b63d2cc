#include "v2g/world.hpp"

#include <cmath>

namespace v2g::sim {

namespace {

Bytes encode_reading(const contract::MeterReading& r) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(r.source)).u32(r.slot).i64(r.cumulative.wh()).u64(r.tick);
  return std::move(w).take();
}

contract::MeterReading decode_reading(ByteView bytes) {
  ByteReader rd(bytes);
  contract::MeterReading r;
  const auto source = rd.u8();
  if (source > 1) throw Error(Errc::MalformedEntry, "unknown meter source");
  r.source = static_cast<contract::MeterSource>(source);
  r.slot = rd.u32();
  r.cumulative = Energy::wh(rd.i64());
  r.tick = rd.u64();
  rd.expect_end();
  return r;
}

// Sends one reading over the CAN bus sealed under the sender's session key
// and returns what the receiver opened, or nothing if it did not arrive intact.
std::optional<contract::MeterReading> exchange_reading(channels::ChannelFabric& fabric,
                                                       channels::EndpointId from,
                                                       channels::EndpointId to,
                                                       crypto::SessionCipher& sealer,
                                                       crypto::SessionCipher& opener,
                                                       std::uint8_t direction,
                                                       const contract::MeterReading& reading) {
  const auto nonce = crypto::counter_nonce(direction, reading.tick);
  channels::MeterFrame frame{reading.tick, sealer.seal(encode_reading(reading), nonce)};
  fabric.send(channels::Channel::CanBus, from, to, channels::encode_message(frame));
  auto env = fabric.recv(to);
  if (!env || env->channel != channels::Channel::CanBus) return std::nullopt;
  try {
    auto msg = channels::decode_message(env->body);
    auto* got = std::get_if<channels::MeterFrame>(&msg);
    if (!got) return std::nullopt;
    return decode_reading(
        opener.open(got->ciphertext, crypto::counter_nonce(direction, got->sequence)));
  } catch (const Error&) {
    return std::nullopt;
  }
}

Energy undisputed(Energy a, Energy b, bool discharging) {
  const Energy m = a.abs() <= b.abs() ? a.abs() : b.abs();
  return discharging ? -m : m;
}

Bytes to_blob(std::span<const std::uint8_t> bytes) { return Bytes(bytes.begin(), bytes.end()); }

}  // namespace

SlotTerms TermRanges::draw(crypto::Drbg& rng) const {
  SlotTerms t;
  t.ev = {alpha.draw(rng), beta.draw(rng), gamma.draw(rng), delta.draw(rng)};
  t.station = {p_c.draw(rng), p_d.draw(rng), c_g.draw(rng), v_g.draw(rng), fee.draw(rng)};
  return t;
}

contract::Battery BatteryRanges::draw(crypto::Drbg& rng) const {
  contract::Battery b;
  b.capacity_kwh = capacity_kwh.draw(rng);
  b.soc_kwh = b.capacity_kwh * soc_fraction.draw(rng);
  b.charger_limit_kwh = charger_limit_kwh.draw(rng);
  b.efficiency = efficiency.draw(rng);
  return b;
}

SlotTerms reference_terms() {
  SlotTerms t;
  t.ev = {0.5, 0.01, 0.1, 0.01};
  t.station = {0.2, 0.25, 0.1, 0.3, 0.5};
  return t;
}

std::string_view to_string(SlotStatus s) noexcept {
  switch (s) {
    case SlotStatus::AuthFailed: return "auth_failed";
    case SlotStatus::Finalized: return "finalized";
    case SlotStatus::Disputed: return "disputed";
  }
  return "unknown";
}

World::World(std::uint64_t seed, WorldConfig config)
    : config_(config),
      root_(crypto::Drbg::from_u64(seed)),
      scenario_rng_(root_.fork("scenario")),
      ledger_(std::make_unique<ledger::Ledger>()) {
  auto ca_rng = root_.fork("ca");
  ca_ = std::make_unique<pki::CertificateAuthority>(ca_rng.next_seed(), *ledger_, config_.pki);
  fabric_ = std::make_unique<channels::ChannelFabric>(root_.fork("fabric"));
  fabric_->enable_capture(config_.capture);
}

std::size_t World::add_user(contract::Battery battery, std::size_t pseudonyms, SimTime now) {
  const std::size_t index = users_.size();
  UserSlot u;
  u.name = "ev-" + std::to_string(index);
  u.endpoint = fabric_->add_endpoint(u.name);
  u.actor = std::make_unique<actors::EvActor>(u.name, pki::PkiDirectory(*ca_), *ledger_,
                                              root_.fork("actor/" + u.name), config_.auth);
  auto enrollment = ca_->register_user("user-" + std::to_string(index), now);
  u.actor->add_identities(ca_->issue_pseudo_batch(enrollment.root_pid, pseudonyms));
  u.actor->enroll(std::move(enrollment));
  u.battery = battery;
  users_.push_back(std::move(u));
  return index;
}

std::size_t World::add_station(SimTime now) {
  const std::size_t index = stations_.size();
  auto record = ca_->register_evcs(now);
  StationSlot s;
  s.endpoint = fabric_->add_endpoint(record.evcs_id);
  s.actor = std::make_unique<actors::EvcsActor>(std::move(record), pki::PkiDirectory(*ca_),
                                                root_.fork("station/" + std::to_string(index)),
                                                config_.auth);
  stations_.push_back(std::move(s));
  return index;
}

void World::seal_pending() {
  if (ledger_->pending() > 0) ledger_->seal_block();
}

void World::drain(channels::EndpointId endpoint) {
  while (fabric_->recv(endpoint)) {
  }
}

actors::HandshakeOutcome World::authenticate(std::size_t user, std::size_t station, SimTime now,
                                             std::optional<std::string> pid) {
  auto& u = users_.at(user);
  auto& s = stations_.at(station);
  fabric_->plug(u.endpoint, s.endpoint);
  u.actor->set_plugged(true);
  if (!pid) pid = u.actor->next_fresh_pid();
  if (!pid) {
    actors::HandshakeOutcome out;
    out.error = Errc::PidConsumed;
    out.failed_step = 1;
    out.failed_actor = u.name;
    return out;
  }
  drain(u.endpoint);
  drain(s.endpoint);
  actors::HandshakeDriver driver(*fabric_, *u.actor, u.endpoint, *s.actor, s.endpoint);
  auto out = driver.run(*pid, now);
  remember_secrets(u, s);
  return out;
}

void World::remember_secrets(const UserSlot& u, const StationSlot& s) {
  const auto& ev = u.actor->auth();
  const auto& evcs = s.actor->auth();
  const crypto::Challenge zero{};
  for (const auto* c : {&ev.c_physical, &evcs.c_cyber}) {
    if (*c != zero) session_secrets_.push_back(to_blob(c->view()));
  }
  if (ev.session_key) session_secrets_.push_back(to_blob(ev.session_key->view()));
  if (evcs.session_key) session_secrets_.push_back(to_blob(evcs.session_key->view()));
}

std::vector<Bytes> World::secrets() const {
  std::vector<Bytes> out = session_secrets_;
  ca_->for_each_private_key([&](const crypto::PrivateKey& k) { out.push_back(to_blob(k.view())); });
  return out;
}

SlotResult World::run_charging_slot(std::size_t user, std::size_t station, std::uint32_t slot,
                                    SimTime start, const SlotTerms& terms,
                                    const SessionBehavior& behavior,
                                    std::optional<std::string> pid) {
  SlotResult r;
  r.slot = slot;
  r.user = user;
  r.station = station;
  r.started_at = start;
  auto& u = users_.at(user);
  auto& s = stations_.at(station);

  r.auth = authenticate(user, station, start, std::move(pid));
  auto unplug = [&] {
    fabric_->unplug(u.endpoint, s.endpoint);
    u.actor->set_plugged(false);
  };
  if (!r.auth.authenticated) {
    unplug();
    return r;
  }

  contract::SmartContract sc(*ledger_, config_.contract, r.auth.pid, s.actor->evcs_id(), true);
  const auto& schedule = sc.submit_utilities(slot, terms.ev, terms.station, u.battery.bounds());
  r.schedule = schedule;
  const bool discharging = schedule.scheduled < Energy{};
  const double flow = discharging ? -1.0 : 1.0;
  const Energy ev_offset = Energy::from_kwh(flow * behavior.ev_meter_offset_kwh);
  const Energy evcs_offset = Energy::from_kwh(flow * behavior.evcs_meter_offset_kwh);

  crypto::SessionCipher ev_cipher(*r.auth.ev_key);
  crypto::SessionCipher evcs_cipher(*r.auth.evcs_key);
  std::optional<Energy> ev_own;
  std::optional<Energy> ev_view_of_station;
  const std::int64_t total_wh = schedule.scheduled.wh();
  const std::uint32_t ticks = config_.slot_ticks;

  for (std::uint32_t k = 1; k <= ticks; ++k) {
    fabric_->set_tick(static_cast<std::uint64_t>(slot) * ticks + k);
    const Energy delivered = Energy::wh(total_wh * static_cast<std::int64_t>(k) / ticks);

    std::optional<contract::MeterReading> ev_seen;
    if (!behavior.ev_silent_from_tick || k < *behavior.ev_silent_from_tick) {
      contract::MeterReading mine{contract::MeterSource::Ev, slot, delivered + ev_offset, k};
      ev_own = mine.cumulative;
      ev_seen = exchange_reading(*fabric_, u.endpoint, s.endpoint, ev_cipher, evcs_cipher, 0, mine);
      ++r.meter_frames;
    }
    contract::MeterReading theirs{contract::MeterSource::Evcs, slot, delivered + evcs_offset, k};
    if (auto seen = exchange_reading(*fabric_, s.endpoint, u.endpoint, evcs_cipher, ev_cipher, 1, theirs)) {
      ev_view_of_station = seen->cumulative;
    }
    ++r.meter_frames;
    sc.report_metering(k, ev_seen, theirs);
  }
  sc.end_slot();
  const SimTime end = start + config_.slot_length();
  r.metering = sc.monitor().status();
  r.violation_tick = sc.monitor().violation_tick();

  if (r.metering != contract::MeteringStatus::Ok) {
    sc.open_dispute(ledger::DisputeCause::MeterMismatch,
                    {sc.monitor().last_ev(), sc.monitor().last_evcs(), std::nullopt}, end);
  } else {
    const auto expected = sc.expected_bill();
    auto presented = expected;
    if (behavior.evcs_price_factor != 1.0) {
      auto inflated = schedule.params;
      inflated.p_c *= behavior.evcs_price_factor;
      inflated.p_d *= behavior.evcs_price_factor;
      presented = contract::generate_bill(slot, expected.energy, inflated);
    }
    // The EV recomputes the bill from the agreed schedule and the readings
    // it holds.
    const auto own = contract::generate_bill(
        slot, undisputed(ev_own.value_or(Energy{}), ev_view_of_station.value_or(Energy{}), discharging),
        schedule.params);
    r.presented_bill = presented;
    r.ev_ack = !behavior.ev_refuses_payment && presented == own;
    sc.finalize(presented, r.ev_ack, true, end);
  }
  if (sc.dispute()) sc.resolve_dispute();

  if (sc.record()) {
    r.status = SlotStatus::Finalized;
    r.bill_total = sc.record()->amount;
  } else {
    r.status = SlotStatus::Disputed;
    const auto& d = *sc.dispute();
    r.dispute_cause = d.cause;
    r.resolution = d.resolution;
    r.bill_total = d.settled_bill ? d.settled_bill->total : d.fee_owed;
  }
  r.settlement = sc.settlement();
  u.battery = contract::log_and_prepare_next(sc, u.battery, u.log).battery;
  unplug();
  return r;
}

std::size_t count_leaks(const std::vector<Bytes>& secrets, const std::vector<Bytes>& blobs) {
  std::size_t hits = 0;
  for (const auto& secret : secrets) {
    for (const auto& blob : blobs) {
      if (contains(blob, secret)) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

}  // namespace v2g::sim
