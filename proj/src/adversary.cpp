#include "v2g/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <set>

namespace v2g::adversary {

using actors::HandshakeOutcome;
using channels::InterceptedFrame;
using channels::MessageKind;
using sim::World;

std::string_view to_string(AttackKind kind) noexcept {
  switch (kind) {
    case AttackKind::MitmRelay: return "MitmRelay";
    case AttackKind::ReplayM1: return "ReplayM1";
    case AttackKind::LedgerCorrelation: return "LedgerCorrelation";
    case AttackKind::EvcsTamperParams: return "EvcsTamperParams";
    case AttackKind::EvcsCredentialExtract: return "EvcsCredentialExtract";
    case AttackKind::EvRefusePay: return "EvRefusePay";
    case AttackKind::EvFalseMeter: return "EvFalseMeter";
    case AttackKind::CrossSessionRelay: return "CrossSessionRelay";
  }
  return "Unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : {AttackKind::MitmRelay, AttackKind::ReplayM1, AttackKind::LedgerCorrelation,
                 AttackKind::EvcsTamperParams, AttackKind::EvcsCredentialExtract,
                 AttackKind::EvRefusePay, AttackKind::EvFalseMeter, AttackKind::CrossSessionRelay}) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::ConfigInvalid, "unknown attack kind '" + std::string(name) + "'");
}

const std::vector<std::string>& variants_of(AttackKind kind) {
  static const std::map<AttackKind, std::vector<std::string>> table{
      {AttackKind::MitmRelay, {"passive", "modify_m2", "forge"}},
      {AttackKind::ReplayM1, {"stale", "in_window", "transcript"}},
      {AttackKind::LedgerCorrelation, {"unique", "reused"}},
      {AttackKind::EvcsTamperParams, {"inflate_meter", "substitute_price"}},
      {AttackKind::EvcsCredentialExtract, {"capture"}},
      {AttackKind::EvRefusePay, {"refuse"}},
      {AttackKind::EvFalseMeter, {"under_report", "silent"}},
      {AttackKind::CrossSessionRelay, {"relay", "after_use"}},
  };
  return table.at(kind);
}

double OutcomeReport::metric(std::string_view name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

namespace {

// Counts outcome labels and renders them as "A x3, B x1".
class Tally {
 public:
  void add(const std::string& key) { ++counts_[key]; }
  std::size_t count(const std::string& key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : counts_) n += v;
    return n;
  }
  std::string summary() const {
    std::string out;
    for (const auto& [k, v] : counts_) {
      if (!out.empty()) out += ", ";
      out += k + " x" + std::to_string(v);
    }
    return out.empty() ? "nothing" : out;
  }

 private:
  std::map<std::string, std::size_t> counts_;
};

std::string label(Errc code, int step) {
  return std::string(to_string(code)) + "@step" + std::to_string(step);
}

std::string label(const HandshakeOutcome& o) {
  return o.authenticated ? "Authenticated" : label(o.error.value_or(Errc::Rejected), o.failed_step);
}

struct Prepared {
  AttackScenario s;
  std::string variant;
  std::size_t trials;
};

Prepared prepare(const AttackScenario& s, std::size_t default_trials) {
  const auto& names = variants_of(s.kind);
  Prepared p{s, s.variant.empty() ? names.front() : s.variant, s.trials ? s.trials : default_trials};
  if (std::find(names.begin(), names.end(), p.variant) == names.end()) {
    throw Error(Errc::ConfigInvalid,
                "unknown variant '" + p.variant + "' for " + std::string(to_string(s.kind)));
  }
  return p;
}

OutcomeReport make_report(const Prepared& p, std::string expected) {
  OutcomeReport r;
  r.kind = p.s.kind;
  r.variant = p.variant;
  r.seed = p.s.seed;
  r.expected = std::move(expected);
  return r;
}

sim::WorldConfig world_config(const HarnessConfig& h, bool capture = false) {
  sim::WorldConfig c;
  c.auth.fresh_window = h.fresh_window;
  c.contract.tolerance = h.meter_tolerance;
  c.tick = kSecond;
  c.slot_ticks = 60;
  c.capture = capture;
  // Trials are spread minutes apart and large runs span days. Expiry is not
  // under test here, so credentials outlive any run.
  c.pki.credential_lifetime = 365 * 24 * kHour;
  return c;
}

// 20 of 60 kWh with a 22 kWh charger: the reference terms schedule 20 kWh.
contract::Battery reference_battery() { return contract::Battery{20.0, 60.0, 22.0, 1.0}; }

std::unique_ptr<World> make_world(std::uint64_t seed, const sim::WorldConfig& cfg, std::size_t users,
                                  std::size_t stations, std::size_t pseudonyms) {
  auto w = std::make_unique<World>(seed, cfg);
  for (std::size_t i = 0; i < stations; ++i) w->add_station(0);
  for (std::size_t i = 0; i < users; ++i) w->add_user(reference_battery(), pseudonyms, 0);
  w->seal_pending();
  return w;
}

// Terminates every transport handshake and keeps a copy of each body it
// relays.
class Tap : public channels::Interceptor {
 public:
  bool terminates_transport() const override { return true; }
  std::vector<InterceptedFrame> on_wireless(InterceptedFrame frame) override {
    if (frame.body) bodies.push_back(*frame.body);
    return handle(std::move(frame));
  }
  virtual std::vector<InterceptedFrame> handle(InterceptedFrame frame) { return {std::move(frame)}; }

  std::optional<channels::MessageM1> last_m1() const {
    for (auto it = bodies.rbegin(); it != bodies.rend(); ++it) {
      try {
        auto msg = channels::decode_message(*it);
        if (auto* m1 = std::get_if<channels::MessageM1>(&msg)) return *m1;
      } catch (const Error&) {
      }
    }
    return std::nullopt;
  }

  std::vector<Bytes> bodies;
};

std::optional<channels::Message> try_decode(const std::optional<Bytes>& body) {
  if (!body) return std::nullopt;
  try {
    return channels::decode_message(*body);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Flips one byte of every M2 ciphertext it relays.
class M2Modifier : public Tap {
 public:
  explicit M2Modifier(crypto::Drbg rng) : rng_(std::move(rng)) {}
  std::vector<InterceptedFrame> handle(InterceptedFrame frame) override {
    auto msg = try_decode(frame.body);
    if (msg) {
      if (auto* m2 = std::get_if<channels::MessageM2>(&*msg)) {
        m2->ciphertext[rng_.below(m2->ciphertext.size())] ^= 0x01;
        frame.body = channels::encode_message(*m2);
        ++modified;
      }
    }
    return {std::move(frame)};
  }
  std::size_t modified = 0;

 private:
  crypto::Drbg rng_;
};

enum class ForgeMode { ForgeM2, ForgeM4, InjectM3 };

// Active attacker with full wireless control and public knowledge only: the
// pid and T1 from M1, public keys from the directory.
class Forger : public Tap {
 public:
  Forger(ForgeMode mode, pki::PkiDirectory directory, std::string evcs_id, crypto::Drbg rng)
      : mode_(mode), directory_(directory), evcs_id_(std::move(evcs_id)), rng_(std::move(rng)) {}

  std::vector<InterceptedFrame> handle(InterceptedFrame frame) override {
    auto msg = try_decode(frame.body);
    if (!msg) return {std::move(frame)};
    if (auto* m1 = std::get_if<channels::MessageM1>(&*msg)) {
      pid_ = m1->pid;
      t1_ = m1->t1;
      return {std::move(frame)};
    }
    const auto t2 = actors::chain_t2(t1_);
    const auto t3 = actors::chain_next(t2);
    const auto user_key = directory_.lookup_user_pubkey(pid_);
    if (std::holds_alternative<channels::MessageM2>(*msg)) {
      if (mode_ == ForgeMode::ForgeM2) {
        channels::M2Payload fake{crypto::random_challenge(rng_), evcs_id_, t2};
        frame.body = channels::encode_message(
            channels::MessageM2{crypto::pk_encrypt(user_key, fake.encode(), rng_)});
        return {std::move(frame)};
      }
      if (mode_ == ForgeMode::InjectM3) {
        // Answer M2 over the radio without its plaintext: guessed C_cyber.
        channels::M3Payload guess{crypto::random_challenge(rng_), crypto::random_challenge(rng_), t3};
        const auto station_key = directory_.lookup_evcs_pubkey(evcs_id_);
        InterceptedFrame injected = frame;
        std::swap(injected.envelope.sender, injected.envelope.receiver);
        injected.body = channels::encode_message(
            channels::MessageM3{crypto::pk_encrypt(station_key, guess.encode(), rng_)});
        return {std::move(frame), std::move(injected)};
      }
    }
    if (std::holds_alternative<channels::MessageM4>(*msg) && mode_ == ForgeMode::ForgeM4) {
      channels::M4Payload fake{crypto::random_challenge(rng_), actors::chain_next(t3)};
      frame.body = channels::encode_message(
          channels::MessageM4{crypto::pk_encrypt(user_key, fake.encode(), rng_)});
    }
    return {std::move(frame)};
  }

 private:
  ForgeMode mode_;
  pki::PkiDirectory directory_;
  std::string evcs_id_;
  crypto::Drbg rng_;
  std::string pid_;
  SimTime t1_ = 0;
};

std::vector<Bytes> capture_wires(World& w) {
  std::vector<Bytes> out;
  for (const auto& rec : w.fabric().capture()) out.push_back(rec.wire);
  return out;
}

// Feeds raw M1 bytes from an attacker radio to a station and runs step 2.
// Returns the rejection code, or nothing if the station answered.
std::optional<Errc> station_step2(World& w, channels::EndpointId attacker, std::size_t station,
                                  ByteView m1_bytes, SimTime now,
                                  std::optional<channels::MessageM2>* m2_out = nullptr) {
  auto& st = w.station(station);
  w.drain(st.endpoint);
  if (!w.fabric().has_transport(attacker, st.endpoint)) {
    w.fabric().transport_handshake(attacker, st.endpoint);
  }
  w.fabric().send(channels::Channel::Wireless, attacker, st.endpoint, m1_bytes);
  auto env = w.fabric().recv(st.endpoint);
  if (!env) return Errc::NoResponse;
  try {
    auto msg = channels::decode_message(env->body);
    auto m2 = st.actor->handle_m1(std::get<channels::MessageM1>(msg), now);
    if (m2_out) *m2_out = m2;
    return std::nullopt;
  } catch (const Error& e) {
    return e.code();
  }
}

// ---------------------------------------------------------------------------
// MitM

struct ForgeCounts {
  std::size_t attempts = 0;
  std::size_t successes = 0;
  Tally codes;
};

// Actor-level Monte Carlo: one honest exchange up to each forgery point,
// then fresh copies of the attacked actor receive forged messages. Modes
// rotate: forged M4 to the EV, forged M2 whose M3 reaches the real station,
// and a guessed M3 answering M2 without the pid's private key (delivered to
// the station as if the attacker also held the CAN link).
void forge_batch(World& w, std::size_t count, SimTime now, crypto::Drbg& rng, ForgeCounts& out) {
  auto& ev = *w.user(0).actor;
  auto& evcs = *w.station(0).actor;
  pki::PkiDirectory directory(w.ca());
  const auto pid = *ev.next_fresh_pid();
  ev.set_plugged(true);
  auto m1 = ev.start_auth(pid, now);
  auto m2 = evcs.handle_m1(m1, now);
  const actors::EvActor ev_at_m1 = ev;
  const actors::EvcsActor evcs_at_m2 = evcs;
  ev.handle_m2(m2, now);
  const actors::EvActor ev_at_m3 = ev;
  ev.reset();
  evcs.reset();

  const auto user_key = directory.lookup_user_pubkey(pid);
  const auto station_key = directory.lookup_evcs_pubkey(evcs.evcs_id());
  const auto t2 = actors::chain_t2(m1.t1);
  const auto t3 = actors::chain_next(t2);
  const auto t4 = actors::chain_next(t3);

  for (std::size_t i = 0; i < count; ++i) {
    ++out.attempts;
    try {
      switch (i % 3) {
        case 0: {
          auto victim = ev_at_m3;
          channels::M4Payload fake{crypto::random_challenge(rng), t4};
          victim.handle_m4({crypto::pk_encrypt(user_key, fake.encode(), rng)}, now);
          if (victim.auth().state == actors::EvState::Authenticated) ++out.successes;
          break;
        }
        case 1: {
          auto victim = ev_at_m1;
          auto station = evcs_at_m2;
          channels::M2Payload fake{crypto::random_challenge(rng), evcs.evcs_id(), t2};
          auto m3 = victim.handle_m2({crypto::pk_encrypt(user_key, fake.encode(), rng)}, now);
          station.handle_m3(m3, now);
          ++out.successes;
          break;
        }
        default: {
          auto station = evcs_at_m2;
          channels::M3Payload guess{crypto::random_challenge(rng), crypto::random_challenge(rng), t3};
          station.handle_m3({crypto::pk_encrypt(station_key, guess.encode(), rng)}, now);
          ++out.successes;
          break;
        }
      }
    } catch (const Error& e) {
      out.codes.add(std::string(to_string(e.code())));
    }
  }
}

}  // namespace

OutcomeReport run_mitm(const AttackScenario& scenario, const HarnessConfig& config) {
  const auto p = prepare(scenario, scenario.variant == "forge" ? 3000 : 10);
  const SimTime spacing = 3 * config.fresh_window;

  if (p.variant == "passive") {
    auto report = make_report(p, "all sessions Authenticated; 0 secrets in tap log or capture");
    auto w = make_world(p.s.seed, world_config(config, true), 1, 1, p.trials);
    auto tap = std::make_shared<Tap>();
    w->fabric().install_interceptor(tap);
    Tally outcomes;
    std::set<MessageKind> kinds;
    for (std::size_t i = 0; i < p.trials; ++i) {
      w->user(0).battery = reference_battery();
      auto r = w->run_charging_slot(0, 0, static_cast<std::uint32_t>(i), i * spacing,
                                    sim::reference_terms());
      outcomes.add(label(r.auth));
      w->seal_pending();
    }
    for (const auto& b : tap->bodies) {
      if (auto m = try_decode(b)) kinds.insert(channels::kind_of(*m));
    }
    auto blobs = tap->bodies;
    for (auto& wire : capture_wires(*w)) blobs.push_back(std::move(wire));
    const auto secrets = w->secrets();
    const std::size_t leaks = sim::count_leaks(secrets, blobs);
    const std::size_t ok = outcomes.count("Authenticated");
    report.observed = outcomes.summary() + "; " + std::to_string(leaks) + " secrets exposed";
    report.pass = ok == p.trials && leaks == 0 && !kinds.contains(MessageKind::Meter);
    report.metrics = {{"sessions", double(p.trials)},
                      {"authenticated", double(ok)},
                      {"tap_frames", double(tap->bodies.size())},
                      {"capture_frames", double(w->fabric().capture().size())},
                      {"secrets_checked", double(secrets.size())},
                      {"leaks", double(leaks)}};
    return report;
  }

  if (p.variant == "modify_m2") {
    auto report = make_report(p, "DecryptFailed@step3 on every session; 0 Authenticated");
    auto w = make_world(p.s.seed, world_config(config), 1, 1, p.trials);
    auto tamper = std::make_shared<M2Modifier>(crypto::Drbg::from_u64(p.s.seed).fork("mitm"));
    w->fabric().install_interceptor(tamper);
    Tally outcomes;
    for (std::size_t i = 0; i < p.trials; ++i) {
      outcomes.add(label(w->authenticate(0, 0, i * spacing)));
    }
    report.observed = outcomes.summary();
    report.pass = outcomes.count(label(Errc::DecryptFailed, 3)) == p.trials;
    report.metrics = {{"sessions", double(p.trials)},
                      {"authenticated", double(outcomes.count("Authenticated"))},
                      {"modified_frames", double(tamper->modified)}};
    return report;
  }

  // forge
  auto report = make_report(p, "0 Authenticated over all forgery attempts");
  auto w = make_world(p.s.seed, world_config(config), 1, 1, 4);
  auto rng = crypto::Drbg::from_u64(p.s.seed).fork("forge");
  ForgeCounts counts;
  constexpr std::size_t kBatch = 1000;
  SimTime now = 0;
  for (std::size_t done = 0; done < p.trials; done += kBatch, now += spacing) {
    forge_batch(*w, std::min(kBatch, p.trials - done), now, rng, counts);
  }

  // The same three attacks end to end through the radio fabric.
  const std::size_t fabric_attempts = std::min<std::size_t>(p.trials, 300);
  Tally fabric_outcomes;
  for (std::size_t i = 0; i < fabric_attempts; ++i) {
    const auto mode = static_cast<ForgeMode>(i % 3);
    auto forger = std::make_shared<Forger>(mode, pki::PkiDirectory(w->ca()), w->station(0).actor->evcs_id(),
                                           rng.fork("fabric/" + std::to_string(i)));
    w->fabric().install_interceptor(forger);
    now += spacing;
    fabric_outcomes.add(label(w->authenticate(0, 0, now)));
    w->fabric().remove_interceptor();
  }
  const std::size_t fabric_successes = fabric_outcomes.count("Authenticated");
  report.observed = std::to_string(counts.successes) + " of " + std::to_string(counts.attempts) +
                    " actor-level forgeries accepted (" + counts.codes.summary() + "); " +
                    std::to_string(fabric_successes) + " of " + std::to_string(fabric_attempts) +
                    " fabric forgeries Authenticated (" + fabric_outcomes.summary() + ")";
  report.pass = counts.successes == 0 && fabric_successes == 0 && counts.attempts == p.trials;
  report.metrics = {{"attempts", double(counts.attempts)},
                    {"successes", double(counts.successes)},
                    {"fabric_attempts", double(fabric_attempts)},
                    {"fabric_successes", double(fabric_successes)}};
  return report;
}

// ---------------------------------------------------------------------------
// Replay

OutcomeReport run_replay(const AttackScenario& scenario, const HarnessConfig& config) {
  const auto p = prepare(scenario, 20);
  const Errc want = p.variant == "stale"       ? Errc::StaleTimestamp
                    : p.variant == "in_window" ? Errc::ReusedPid
                                               : Errc::ConsumedPid;
  auto report = make_report(p, "every replay rejected with " + label(want, 2));
  auto w = make_world(p.s.seed, world_config(config), 1, 1, p.trials);
  auto tap = std::make_shared<Tap>();
  w->fabric().install_interceptor(tap);
  const auto attacker = w->fabric().add_endpoint("replayer");
  const SimTime window = config.fresh_window;

  Tally outcomes;
  std::size_t honest_ok = 0;
  for (std::size_t i = 0; i < p.trials; ++i) {
    const SimTime base = static_cast<SimTime>(i) * 4 * window;
    auto honest = w->authenticate(0, 0, base);
    if (honest.authenticated) ++honest_ok;
    auto m1 = tap->last_m1();
    if (!m1) {
      outcomes.add("no M1 captured");
      continue;
    }
    SimTime at = base + kSecond;
    if (p.variant == "stale") at = base + 2 * window;
    if (p.variant == "transcript") {
      // After the pid was spent, with T1 rewritten to look fresh.
      at = base + 3 * window;
      m1->t1 = at;
    }
    auto code = station_step2(*w, attacker, 0, channels::encode_message(*m1), at);
    outcomes.add(code ? label(*code, 2) : "accepted");
  }
  report.observed = outcomes.summary();
  report.pass = honest_ok == p.trials && outcomes.count(label(want, 2)) == p.trials;
  report.metrics = {{"trials", double(p.trials)},
                    {"honest_authenticated", double(honest_ok)},
                    {"rejected", double(outcomes.count(label(want, 2)))}};
  return report;
}

// ---------------------------------------------------------------------------
// Ledger correlation

std::vector<std::size_t> assign_sessions(const LinkageInput& in) {
  const auto& recs = in.records;
  const std::size_t users = in.reference.size();
  std::vector<std::size_t> owner(recs.size(), users);
  std::vector<std::vector<std::size_t>> clusters(users);
  for (std::size_t u = 0; u < users; ++u) {
    owner[in.reference[u]] = u;
    clusters[u].push_back(in.reference[u]);
  }

  auto span_of = [&](auto get) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : recs) {
      lo = std::min(lo, get(r));
      hi = std::max(hi, get(r));
    }
    return hi > lo ? hi - lo : 1.0;
  };
  auto amount = [](const ledger::TransactionRecord& r) { return r.amount.units(); };
  auto energy = [](const ledger::TransactionRecord& r) { return r.energy.kwh(); };
  const SimTime slot_len = in.slot_length > 0 ? in.slot_length : 1;
  auto time_of_slot = [&](const ledger::TransactionRecord& r) {
    return static_cast<double>(r.finalized_at % slot_len);
  };
  const double a_span = span_of(amount), e_span = span_of(energy);
  const double t_span = static_cast<double>(slot_len);

  auto distance = [&](const ledger::TransactionRecord& x, const ledger::TransactionRecord& y) {
    return std::abs(amount(x) - amount(y)) / a_span + std::abs(energy(x) - energy(y)) / e_span +
           std::abs(time_of_slot(x) - time_of_slot(y)) / t_span;
  };

  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (owner[i] != users) continue;
    std::size_t pick = users;
    for (std::size_t u = 0; u < users && pick == users; ++u) {
      for (auto j : clusters[u]) {
        if (recs[j].pid == recs[i].pid) {
          pick = u;
          break;
        }
      }
    }
    if (pick == users) {
      double best = std::numeric_limits<double>::infinity();
      double best_any = best;
      std::size_t pick_any = 0;
      for (std::size_t u = 0; u < users; ++u) {
        double d = std::numeric_limits<double>::infinity();
        bool same_slot = false;
        for (auto j : clusters[u]) {
          d = std::min(d, distance(recs[i], recs[j]));
          same_slot = same_slot || recs[j].slot == recs[i].slot;
        }
        if (d < best_any) best_any = d, pick_any = u;
        if (!same_slot && d < best) best = d, pick = u;
      }
      if (pick == users) pick = pick_any;
    }
    owner[i] = pick;
    clusters[pick].push_back(i);
  }
  return owner;
}

CorrelationResult measure_linkage(std::uint64_t seed, std::size_t users, std::size_t sessions,
                                  std::size_t seeds, bool reuse_pids, const HarnessConfig& config) {
  if (users == 0 || sessions == 0 || seeds == 0) {
    throw Error(Errc::ConfigInvalid, "correlation needs users, sessions and seeds >= 1");
  }
  CorrelationResult out;
  out.chance = 1.0 / static_cast<double>(users);
  const auto seeder = crypto::Drbg::from_u64(seed).fork("linkage");
  const sim::TermRanges terms;
  const sim::BatteryRanges batteries;

  for (std::size_t s = 0; s < seeds; ++s) {
    auto cfg = world_config(config);
    cfg.auth.single_use_pseudonyms = !reuse_pids;
    cfg.tick = 10 * kSecond;
    // Sessions of one pid must be further apart than the replay window.
    cfg.slot_ticks = static_cast<std::uint32_t>(2 * config.fresh_window / cfg.tick + 6);
    const SimTime slot_len = cfg.slot_length();
    auto seed_s = seeder.fork("seed/" + std::to_string(s)).next_u64();
    World w(seed_s, cfg);
    w.add_station(0);
    w.add_station(0);
    auto& rng = w.rng();
    for (std::size_t u = 0; u < users; ++u) w.add_user(batteries.draw(rng), sessions, 0);
    w.seal_pending();

    std::map<std::string, std::size_t> truth;
    std::vector<std::size_t> order(users);
    for (std::size_t slot = 0; slot < sessions; ++slot) {
      for (std::size_t u = 0; u < users; ++u) order[u] = u;
      std::shuffle(order.begin(), order.end(), rng);
      for (auto u : order) {
        // Each arrival: own SoC, own preferences, the station's current prices.
        w.user(u).battery = batteries.draw(rng);
        const auto station = rng.below(w.station_count());
        const SimTime start = static_cast<SimTime>(slot) * slot_len +
                              static_cast<SimTime>(rng.below(static_cast<std::uint64_t>(slot_len / 4)));
        auto r = w.run_charging_slot(u, station, static_cast<std::uint32_t>(slot), start,
                                     terms.draw(rng));
        if (r.auth.authenticated) truth[r.auth.pid] = u;
      }
      w.seal_pending();
    }

    ledger::Query q;
    q.kind = ledger::EntryKind::TransactionRecord;
    LinkageInput in;
    in.slot_length = slot_len;
    for (const auto& e : w.ledger().query(q)) in.records.push_back(ledger::TransactionRecord::decode(e.payload));
    std::vector<std::size_t> actual;
    for (const auto& r : in.records) actual.push_back(truth.at(r.pid));
    in.reference.assign(users, in.records.size());
    for (std::size_t i = 0; i < in.records.size(); ++i) {
      if (in.reference[actual[i]] == in.records.size()) in.reference[actual[i]] = i;
    }
    if (std::count(in.reference.begin(), in.reference.end(), in.records.size()) > 0) {
      throw Error(Errc::Rejected, "a user finalized no session");
    }
    const auto assigned = assign_sessions(in);
    std::size_t targets = 0, correct = 0;
    for (std::size_t i = 0; i < in.records.size(); ++i) {
      if (std::find(in.reference.begin(), in.reference.end(), i) != in.reference.end()) continue;
      ++targets;
      if (assigned[i] == actual[i]) ++correct;
    }
    out.per_seed.push_back(targets ? double(correct) / double(targets) : 1.0);
  }
  double sum = 0;
  for (double a : out.per_seed) sum += a;
  out.mean_accuracy = sum / static_cast<double>(out.per_seed.size());
  return out;
}

OutcomeReport run_ledger_correlation(const AttackScenario& scenario, const HarnessConfig& config) {
  const auto p = prepare(scenario, 1);
  const bool reused = p.variant == "reused";
  const double chance = 1.0 / static_cast<double>(std::max<std::size_t>(p.s.users, 1));
  auto report = make_report(p, reused ? "accuracy > 0.9 with pids reused"
                                      : "accuracy <= chance + 0.1 with single-use pids");
  const auto res = measure_linkage(p.s.seed, p.s.users, p.s.sessions_per_user, p.s.seeds, reused, config);
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean accuracy %.4f (chance %.4f) over %zu seeds", res.mean_accuracy,
                res.chance, res.per_seed.size());
  report.observed = buf;
  report.pass = reused ? res.mean_accuracy > 0.9 : res.mean_accuracy <= chance + 0.1;
  report.metrics = {{"users", double(p.s.users)},
                    {"sessions_per_user", double(p.s.sessions_per_user)},
                    {"seeds", double(p.s.seeds)},
                    {"mean_accuracy", res.mean_accuracy},
                    {"chance", res.chance}};
  return report;
}

// ---------------------------------------------------------------------------
// Misbehaving parties inside a session

namespace {

struct LedgerView {
  std::size_t transactions = 0;
  std::size_t disputes = 0;
  std::optional<ledger::DisputeRecord> dispute;
};

LedgerView ledger_for(World& w, const std::string& pid, std::uint32_t slot) {
  LedgerView v;
  ledger::Query q;
  q.pid = pid;
  q.slots = std::pair{slot, slot};
  for (const auto& e : w.ledger().query(q)) {
    if (e.kind == ledger::EntryKind::TransactionRecord) ++v.transactions;
    if (e.kind == ledger::EntryKind::DisputeRecord) {
      ++v.disputes;
      v.dispute = ledger::DisputeRecord::decode(e.payload);
    }
  }
  return v;
}

// Runs `trials` reference slots under a behavior and checks each one with
// `check`, which returns an empty string on success or a reason.
template <class Check>
void run_slots(World& w, std::size_t trials, const sim::SessionBehavior& behavior, Tally& outcomes,
               std::size_t& passed, Check check) {
  const SimTime spacing = std::max(w.config().slot_length(), 3 * w.config().auth.fresh_window);
  for (std::size_t i = 0; i < trials; ++i) {
    w.user(0).battery = reference_battery();
    const auto slot = static_cast<std::uint32_t>(i);
    auto r = w.run_charging_slot(0, 0, slot, static_cast<SimTime>(i) * spacing, sim::reference_terms(),
                                 behavior);
    w.seal_pending();
    const auto view = ledger_for(w, r.auth.pid, slot);
    std::string why = check(r, view);
    std::string lbl = r.auth.authenticated ? std::string(sim::to_string(r.status)) : label(r.auth);
    if (r.dispute_cause) lbl += "/" + std::string(ledger::to_string(*r.dispute_cause));
    if (r.resolution) lbl += "/" + std::string(contract::to_string(*r.resolution));
    outcomes.add(why.empty() ? lbl : lbl + " (" + why + ")");
    if (why.empty()) ++passed;
  }
}

std::string check_dispute(const sim::SlotResult& r, const LedgerView& v, ledger::DisputeCause cause,
                          contract::Resolution resolution) {
  if (!r.auth.authenticated) return "not authenticated";
  if (r.status != sim::SlotStatus::Disputed || r.dispute_cause != cause) return "wrong outcome";
  if (r.resolution != resolution) return "wrong resolution";
  if (v.transactions != 0) return "transaction recorded";
  if (v.disputes != 1 || !v.dispute || v.dispute->pid != r.auth.pid) return "dispute record missing";
  return {};
}

}  // namespace

OutcomeReport run_malicious_evcs(const AttackScenario& scenario, const HarnessConfig& config) {
  const auto p = prepare(scenario, 5);
  Tally outcomes;
  std::size_t passed = 0;

  if (p.s.kind == AttackKind::EvcsCredentialExtract) {
    auto report = make_report(p, "station obtains pids, user credentials and public keys only; 0 private keys");
    auto w = make_world(p.s.seed, world_config(config, true), 3, 1, p.trials);
    auto tap = std::make_shared<Tap>();  // the station's view of its radio traffic
    w->fabric().install_interceptor(tap);
    for (std::size_t i = 0; i < p.trials; ++i) {
      for (std::size_t u = 0; u < w->user_count(); ++u) {
        w->user(u).battery = reference_battery();
        auto r = w->run_charging_slot(u, 0, static_cast<std::uint32_t>(i),
                                      static_cast<SimTime>(i * 3 + u) * 3 * config.fresh_window,
                                      sim::reference_terms());
        outcomes.add(label(r.auth));
      }
      w->seal_pending();
    }
    // Everything the station can read: radio bodies, CAN frames, and the M3
    // plaintexts it decrypts with its own key.
    const auto& own = w->station(0).actor->record().keypair;
    std::vector<Bytes> blobs = tap->bodies;
    std::set<std::string> pids;
    std::size_t credentials = 0;
    for (const auto& rec : w->fabric().capture()) {
      blobs.push_back(rec.wire);
      if (rec.channel != channels::Channel::CanBus) continue;
      if (auto m = try_decode(rec.wire)) {
        if (auto* m3 = std::get_if<channels::MessageM3>(&*m)) {
          try {
            blobs.push_back(crypto::pk_decrypt(own, m3->ciphertext));
          } catch (const Error&) {
          }
        }
      }
    }
    for (const auto& b : tap->bodies) {
      if (auto m = try_decode(b)) {
        if (auto* m1 = std::get_if<channels::MessageM1>(&*m)) pids.insert(m1->pid);
        if (std::holds_alternative<channels::CredentialPresentation>(*m)) ++credentials;
      }
    }
    std::vector<Bytes> keys;
    const Bytes own_key(own.private_key.view().begin(), own.private_key.view().end());
    w->ca().for_each_private_key([&](const crypto::PrivateKey& k) {
      Bytes b(k.view().begin(), k.view().end());
      if (b != own_key) keys.push_back(std::move(b));
    });
    const std::size_t leaks = sim::count_leaks(keys, blobs);
    report.observed = std::to_string(pids.size()) + " pids, " + std::to_string(credentials) +
                      " credential presentations seen; " + std::to_string(leaks) + " private keys recovered";
    report.pass = leaks == 0 && outcomes.count("Authenticated") == p.trials * w->user_count();
    report.metrics = {{"pids_seen", double(pids.size())},
                      {"credentials_seen", double(credentials)},
                      {"private_keys_checked", double(keys.size())},
                      {"private_keys_recovered", double(leaks)}};
    return report;
  }

  auto w = make_world(p.s.seed, world_config(config), 1, 1, p.trials);
  sim::SessionBehavior behavior;
  if (p.variant == "inflate_meter") {
    auto report = make_report(p, "MeterMismatch dispute settled at the smaller reading; no TransactionRecord");
    behavior.evcs_meter_offset_kwh = p.s.magnitude != 0 ? p.s.magnitude : 0.2;
    run_slots(*w, p.trials, behavior, outcomes, passed, [&](const sim::SlotResult& r, const LedgerView& v) {
      auto why = check_dispute(r, v, ledger::DisputeCause::MeterMismatch, contract::Resolution::SettledMinimum);
      if (!why.empty()) return why;
      // The EV meter is honest here, so the undisputed quantity is the schedule.
      const auto fair = contract::generate_bill(r.slot, r.schedule->scheduled, r.schedule->params);
      return r.bill_total == fair.total ? std::string{} : std::string("overbilled");
    });
    report.observed = outcomes.summary();
    report.pass = passed == p.trials;
    report.metrics = {{"trials", double(p.trials)}, {"as_expected", double(passed)}};
    return report;
  }

  auto report = make_report(p, "BillRejected dispute, voided with fee owed; no TransactionRecord");
  behavior.evcs_price_factor = p.s.magnitude != 0 ? p.s.magnitude : 1.5;
  run_slots(*w, p.trials, behavior, outcomes, passed, [&](const sim::SlotResult& r, const LedgerView& v) {
    auto why = check_dispute(r, v, ledger::DisputeCause::BillRejected, contract::Resolution::Voided);
    if (!why.empty()) return why;
    return r.bill_total == Money::from_units(r.schedule->params.fee) ? std::string{}
                                                                      : std::string("wrong amount owed");
  });
  report.observed = outcomes.summary();
  report.pass = passed == p.trials;
  report.metrics = {{"trials", double(p.trials)}, {"as_expected", double(passed)}};
  return report;
}

OutcomeReport run_malicious_ev(const AttackScenario& scenario, const HarnessConfig& config) {
  const auto p = prepare(scenario, scenario.kind == AttackKind::CrossSessionRelay ? 10 : 5);
  Tally outcomes;
  std::size_t passed = 0;

  if (p.s.kind == AttackKind::EvRefusePay) {
    auto report = make_report(p, "PaymentDefault DisputeRecord bound to the pid; no TransactionRecord");
    auto w = make_world(p.s.seed, world_config(config), 1, 1, p.trials);
    sim::SessionBehavior behavior;
    behavior.ev_refuses_payment = true;
    run_slots(*w, p.trials, behavior, outcomes, passed, [&](const sim::SlotResult& r, const LedgerView& v) {
      auto why = check_dispute(r, v, ledger::DisputeCause::PaymentDefault, contract::Resolution::Voided);
      if (!why.empty()) return why;
      return v.dispute->cause == ledger::DisputeCause::PaymentDefault ? std::string{}
                                                                      : std::string("wrong recorded cause");
    });
    report.observed = outcomes.summary();
    report.pass = passed == p.trials;
    report.metrics = {{"trials", double(p.trials)}, {"as_expected", double(passed)}};
    return report;
  }

  if (p.s.kind == AttackKind::EvFalseMeter) {
    auto w = make_world(p.s.seed, world_config(config), 1, 1, p.trials);
    sim::SessionBehavior behavior;
    if (p.variant == "silent") {
      behavior.ev_silent_from_tick = w->config().slot_ticks / 2;
    } else {
      behavior.ev_meter_offset_kwh = p.s.magnitude != 0 ? p.s.magnitude : -1.0;
    }
    auto report = make_report(p, "MeterMismatch dispute settled at the smaller reading; no TransactionRecord");
    run_slots(*w, p.trials, behavior, outcomes, passed, [&](const sim::SlotResult& r, const LedgerView& v) {
      auto why = check_dispute(r, v, ledger::DisputeCause::MeterMismatch, contract::Resolution::SettledMinimum);
      if (!why.empty()) return why;
      const auto& d = *v.dispute;
      if (!d.ev_reading || !d.evcs_reading) return std::string("readings missing from record");
      const Energy low = d.ev_reading->abs() <= d.evcs_reading->abs() ? d.ev_reading->abs() : d.evcs_reading->abs();
      const auto fair = contract::generate_bill(r.slot, r.schedule->scheduled < Energy{} ? -low : low,
                                                r.schedule->params);
      return r.bill_total == fair.total ? std::string{} : std::string("not settled at the minimum");
    });
    report.observed = outcomes.summary();
    report.pass = passed == p.trials;
    report.metrics = {{"trials", double(p.trials)}, {"as_expected", double(passed)}};
    return report;
  }

  // CrossSessionRelay: vehicle 1 relays vehicle 0's M1 to the station it is
  // plugged into.
  const bool after_use = p.variant == "after_use";
  const Errc want = after_use ? Errc::ConsumedPid : Errc::ChallengeMismatch;
  const int want_step = after_use ? 2 : 4;
  auto report = make_report(p, "every relay rejected with " + label(want, want_step));
  auto w = make_world(p.s.seed, world_config(config), 2, 2, p.trials);
  auto tap = std::make_shared<Tap>();
  w->fabric().install_interceptor(tap);
  auto rng = crypto::Drbg::from_u64(p.s.seed).fork("relay");
  auto& victim = w->user(0);
  auto& thief = w->user(1);
  auto& target = w->station(1);
  pki::PkiDirectory directory(w->ca());
  std::size_t thief_decrypts = 0;

  for (std::size_t i = 0; i < p.trials; ++i) {
    const SimTime base = static_cast<SimTime>(i) * 4 * config.fresh_window;
    std::optional<channels::MessageM1> m1;
    if (after_use) {
      if (w->authenticate(0, 0, base).authenticated) m1 = tap->last_m1();
    } else {
      // Victim's M1 is on the air; the thief relays it before the victim's
      // own station answers.
      w->fabric().plug(victim.endpoint, w->station(0).endpoint);
      victim.actor->set_plugged(true);
      if (!w->fabric().has_transport(victim.endpoint, w->station(0).endpoint)) {
        w->fabric().transport_handshake(victim.endpoint, w->station(0).endpoint);
      }
      auto sent = victim.actor->start_auth(*victim.actor->next_fresh_pid(), base);
      w->fabric().send(channels::Channel::Wireless, victim.endpoint, w->station(0).endpoint,
                       channels::encode_message(sent));
      m1 = tap->last_m1();
      victim.actor->reset();
      w->drain(w->station(0).endpoint);
    }
    if (!m1) {
      outcomes.add("victim M1 not observed");
      continue;
    }
    const SimTime at = base + kSecond;
    w->fabric().plug(thief.endpoint, target.endpoint);
    std::optional<channels::MessageM2> m2;
    auto code = station_step2(*w, thief.endpoint, 1, channels::encode_message(*m1), at, &m2);
    if (code) {
      outcomes.add(label(*code, 2));
    } else {
      w->drain(thief.endpoint);
      // The thief holds only its own keys.
      for (const auto& candidate : {thief.actor->next_fresh_pid()}) {
        if (!candidate) continue;
        try {
          crypto::pk_decrypt(thief.actor->identity(*candidate).keypair, m2->ciphertext);
          ++thief_decrypts;
        } catch (const Error&) {
        }
      }
      const auto t3 = actors::chain_next(actors::chain_t2(m1->t1));
      channels::M3Payload guess{crypto::random_challenge(rng), crypto::random_challenge(rng), t3};
      const auto m3 = channels::MessageM3{
          crypto::pk_encrypt(directory.lookup_evcs_pubkey(target.actor->evcs_id()), guess.encode(), rng)};
      w->fabric().send(channels::Channel::CanBus, thief.endpoint, target.endpoint,
                       channels::encode_message(m3));
      auto env = w->fabric().recv(target.endpoint);
      try {
        target.actor->handle_m3(std::get<channels::MessageM3>(channels::decode_message(env->body)), at);
        outcomes.add("accepted");
      } catch (const Error& e) {
        outcomes.add(label(e.code(), 4));
      }
    }
    w->fabric().unplug(thief.endpoint, target.endpoint);
    w->fabric().unplug(victim.endpoint, w->station(0).endpoint);
    victim.actor->set_plugged(false);
  }
  report.observed = outcomes.summary();
  report.pass = outcomes.count(label(want, want_step)) == p.trials && thief_decrypts == 0;
  report.metrics = {{"trials", double(p.trials)},
                    {"rejected", double(outcomes.count(label(want, want_step)))},
                    {"thief_decrypts", double(thief_decrypts)}};
  return report;
}

OutcomeReport run_scenario(const AttackScenario& scenario, const HarnessConfig& config) {
  switch (scenario.kind) {
    case AttackKind::MitmRelay: return run_mitm(scenario, config);
    case AttackKind::ReplayM1: return run_replay(scenario, config);
    case AttackKind::LedgerCorrelation: return run_ledger_correlation(scenario, config);
    case AttackKind::EvcsTamperParams:
    case AttackKind::EvcsCredentialExtract: return run_malicious_evcs(scenario, config);
    case AttackKind::EvRefusePay:
    case AttackKind::EvFalseMeter:
    case AttackKind::CrossSessionRelay: return run_malicious_ev(scenario, config);
  }
  throw Error(Errc::ConfigInvalid, "unhandled attack kind");
}

}  // namespace v2g::adversary
