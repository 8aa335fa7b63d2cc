#include <gtest/gtest.h>

#include <set>

#include "oracle.hpp"
#include "v2g/world.hpp"

using namespace v2g;
using namespace v2g::actors;

namespace {

constexpr SimTime kNow = 60 * kSecond;

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoFailure;
}

contract::Battery battery() { return {20, 60, 22, 1.0}; }

struct Rig {
  explicit Rig(std::uint64_t seed = 1) : w(seed, sim::WorldConfig{}) {
    w.add_station(0);
    w.add_station(0);
    w.add_user(battery(), 5, 0);
    w.add_user(battery(), 5, 0);
    w.seal_pending();
    ev().set_plugged(true);
  }
  EvActor& ev(std::size_t i = 0) { return *w.user(i).actor; }
  EvcsActor& st(std::size_t j = 0) { return *w.station(j).actor; }
  pki::PseudoIdentity pid(std::size_t i = 0) { return ev(i).identity(*ev(i).next_fresh_pid()); }

  sim::World w;
};

// Runs steps 1-4 directly between ev(0) and st(0).
struct Steps {
  MessageM1 m1;
  MessageM2 m2;
  MessageM3 m3;
  MessageM4 m4;
};

Steps run_to_m4(Rig& r, SimTime now = kNow) {
  Steps s;
  s.m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), now);
  s.m2 = r.st().handle_m1(s.m1, now);
  s.m3 = r.ev().handle_m2(s.m2, now);
  s.m4 = r.st().handle_m3(s.m3, now);
  return s;
}

void complete(Rig& r, Steps& s, SimTime now = kNow) {
  r.ev().handle_m4(s.m4, now);
  ASSERT_TRUE(r.st().verify_peer_credentials(r.ev().present_credential(), now));
  ASSERT_TRUE(r.ev().verify_peer_credentials(r.st().present_credential(), now));
}

}  // namespace

TEST(Actors, StartAuthCarriesPidAndTime) {
  Rig r;
  const auto pid = *r.ev().next_fresh_pid();
  auto m1 = r.ev().start_auth(pid, kNow);
  EXPECT_EQ(m1.pid, pid);
  EXPECT_EQ(m1.t1, kNow);
  EXPECT_EQ(r.ev().auth().state, EvState::SentM1);
}

TEST(Actors, StartAuthErrors) {
  Rig r;
  r.ev().set_plugged(false);
  EXPECT_EQ(error_of([&] { r.ev().start_auth(*r.ev().next_fresh_pid(), kNow); }), Errc::NotPlugged);
  r.ev().set_plugged(true);
  auto s = run_to_m4(r);
  complete(r, s);
  r.ev().establish_session(kNow);
  r.st().establish_session(kNow);
  EXPECT_EQ(error_of([&] { r.ev().start_auth(s.m1.pid, kNow); }), Errc::PidConsumed);
  EXPECT_EQ(error_of([&] { r.ev().start_auth("not-mine", kNow); }), Errc::UnknownPid);
}

TEST(Actors, StationAnswersM1WithDecryptableM2) {
  Rig r;
  const auto id = r.pid();
  auto m1 = r.ev().start_auth(id.pid, kNow);
  auto m2 = r.st().handle_m1(m1, kNow);
  auto payload = channels::M2Payload::decode(crypto::pk_decrypt(id.keypair, m2.ciphertext));
  EXPECT_EQ(payload.evcs_id, r.st().evcs_id());
  EXPECT_EQ(payload.c_cyber, r.st().auth().c_cyber);
  oracle::Bytes t1;
  oracle::put_be(t1, static_cast<std::uint64_t>(kNow), 8);
  EXPECT_EQ(payload.t2.hex(), oracle::hex(oracle::sha256(t1)));
  EXPECT_EQ(r.st().auth().state, EvcsState::SentM2);
}

TEST(Actors, FreshnessBoundary) {
  const SimTime delta = 120 * kSecond;
  {
    Rig r;
    auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
    EXPECT_EQ(error_of([&] { r.st().handle_m1(m1, kNow + delta + 1); }), Errc::StaleTimestamp);
  }
  {
    Rig r;
    auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
    EXPECT_NO_THROW(r.st().handle_m1(m1, kNow + delta));
  }
  {
    Rig r;
    auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow + delta + 1);
    EXPECT_EQ(error_of([&] { r.st().handle_m1(m1, kNow); }), Errc::StaleTimestamp);
  }
}

TEST(Actors, DuplicateM1InsideWindowIsReusedPid) {
  Rig r;
  auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
  r.st().handle_m1(m1, kNow);
  EXPECT_EQ(error_of([&] { r.st().handle_m1(m1, kNow + kSecond); }), Errc::ReusedPid);
}

TEST(Actors, UnknownPidAtStation) {
  Rig r;
  EXPECT_EQ(error_of([&] { r.st().handle_m1({"no-such-pid", kNow}, kNow); }), Errc::UnknownPid);
}

TEST(Actors, HonestM2YieldsM3CarryingStationChallenge) {
  Rig r;
  auto s = run_to_m4(r);
  auto payload = channels::M3Payload::decode(crypto::pk_decrypt(r.st().record().keypair, s.m3.ciphertext));
  EXPECT_EQ(payload.c_cyber, r.st().auth().c_cyber);
  EXPECT_EQ(payload.c_physical, r.ev().auth().c_physical);
  EXPECT_EQ(payload.t3, crypto::hash(actors::chain_t2(kNow).view()));
}

TEST(Actors, AnyM2ByteFlipIsDecryptFailed) {
  Rig r;
  auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
  auto m2 = r.st().handle_m1(m1, kNow);
  const EvActor snapshot = r.ev();
  for (std::size_t pos = 0; pos < m2.ciphertext.size(); ++pos) {
    EvActor ev = snapshot;
    auto bad = m2;
    bad.ciphertext[pos] ^= 0x20;
    EXPECT_EQ(error_of([&] { ev.handle_m2(bad, kNow); }), Errc::DecryptFailed) << "byte " << pos;
    EXPECT_EQ(ev.auth().state, EvState::Failed);
  }
}

TEST(Actors, M2WithShiftedT2IsHashChainMismatch) {
  Rig r;
  const auto id = r.pid();
  auto m1 = r.ev().start_auth(id.pid, kNow);
  r.st().handle_m1(m1, kNow);
  auto rng = crypto::Drbg::from_u64(99);
  channels::M2Payload forged{r.st().auth().c_cyber, r.st().evcs_id(), actors::chain_t2(kNow + 1)};
  MessageM2 m2{crypto::pk_encrypt(id.keypair.public_key, forged.encode(), rng)};
  EXPECT_EQ(error_of([&] { r.ev().handle_m2(m2, kNow); }), Errc::HashChainMismatch);
}

TEST(Actors, HonestM3YieldsM4CarryingPhysicalChallenge) {
  Rig r;
  const auto id = r.pid();
  auto s = run_to_m4(r);
  auto payload = channels::M4Payload::decode(crypto::pk_decrypt(id.keypair, s.m4.ciphertext));
  EXPECT_EQ(payload.c_physical, r.ev().auth().c_physical);
  EXPECT_EQ(r.st().auth().state, EvcsState::SentM4);
}

TEST(Actors, M3WithRandomChallengeIsChallengeMismatch) {
  Rig r;
  auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
  r.st().handle_m1(m1, kNow);
  auto rng = crypto::Drbg::from_u64(98);
  channels::M3Payload guess{crypto::random_challenge(rng), crypto::random_challenge(rng),
                            actors::chain_next(actors::chain_t2(kNow))};
  MessageM3 m3{crypto::pk_encrypt(r.st().record().keypair.public_key, guess.encode(), rng)};
  EXPECT_EQ(error_of([&] { r.st().handle_m3(m3, kNow); }), Errc::ChallengeMismatch);
}

TEST(Actors, M3FromAnotherSessionIsChallengeMismatch) {
  Rig r;
  // Session A gets as far as M3, then the station starts session B.
  auto a = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
  auto a_m2 = r.st().handle_m1(a, kNow);
  auto a_m3 = r.ev().handle_m2(a_m2, kNow);
  r.ev(1).set_plugged(true);
  auto b = r.ev(1).start_auth(*r.ev(1).next_fresh_pid(), kNow);
  r.st().handle_m1(b, kNow);
  EXPECT_EQ(error_of([&] { r.st().handle_m3(a_m3, kNow); }), Errc::ChallengeMismatch);
}

TEST(Actors, M3WithShiftedT3IsHashChainMismatch) {
  Rig r;
  auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), kNow);
  r.st().handle_m1(m1, kNow);
  auto rng = crypto::Drbg::from_u64(97);
  channels::M3Payload m{r.st().auth().c_cyber, crypto::random_challenge(rng),
                        actors::chain_next(actors::chain_t2(kNow + 1))};
  MessageM3 m3{crypto::pk_encrypt(r.st().record().keypair.public_key, m.encode(), rng)};
  EXPECT_EQ(error_of([&] { r.st().handle_m3(m3, kNow); }), Errc::HashChainMismatch);
}

TEST(Actors, M4Checks) {
  Rig r;
  const auto id = r.pid();
  auto s = run_to_m4(r);
  const EvActor snapshot = r.ev();
  auto rng = crypto::Drbg::from_u64(96);
  const auto t4 = actors::chain_next(r.ev().auth().t3);
  {
    EvActor ev = snapshot;
    channels::M4Payload guess{crypto::random_challenge(rng), t4};
    MessageM4 m4{crypto::pk_encrypt(id.keypair.public_key, guess.encode(), rng)};
    EXPECT_EQ(error_of([&] { ev.handle_m4(m4, kNow); }), Errc::ChallengeMismatch);
  }
  {
    EvActor ev = snapshot;
    channels::M4Payload shifted{snapshot.auth().c_physical, actors::chain_next(t4)};
    MessageM4 m4{crypto::pk_encrypt(id.keypair.public_key, shifted.encode(), rng)};
    EXPECT_EQ(error_of([&] { ev.handle_m4(m4, kNow); }), Errc::HashChainMismatch);
  }
  {
    EvActor ev = snapshot;
    ev.handle_m4(s.m4, kNow);
    EXPECT_EQ(ev.auth().state, EvState::Authenticated);
  }
}

TEST(Actors, StaleM4FromEarlierSessionRejected) {
  Rig r;
  auto first = run_to_m4(r);
  complete(r, first);
  r.ev().establish_session(kNow);
  r.st().establish_session(kNow);
  r.ev().reset();
  r.st().reset();
  const SimTime later = kNow + 10 * kSecond;
  auto m1 = r.ev().start_auth(*r.ev().next_fresh_pid(), later);
  r.ev().handle_m2(r.st().handle_m1(m1, later), later);
  auto code = error_of([&] { r.ev().handle_m4(first.m4, later); });
  EXPECT_TRUE(code == Errc::DecryptFailed || code == Errc::ChallengeMismatch) << to_string(code);
}

TEST(Actors, CredentialsAndSessionKeys) {
  Rig r;
  auto s = run_to_m4(r);
  complete(r, s);
  EXPECT_EQ(r.st().auth().state, EvcsState::Authenticated);
  auto k1 = r.ev().establish_session(kNow);
  auto k2 = r.st().establish_session(kNow);
  EXPECT_EQ(k1, k2);
  EXPECT_EQ(k1, crypto::derive_session_key(r.st().auth().c_cyber, r.ev().auth().c_physical,
                                           channels::session_context(s.m1.pid, r.st().evcs_id())));
  EXPECT_FALSE(r.w.ca().pid_hash_set().contains(pki::pid_digest(s.m1.pid)));
}

TEST(Actors, EstablishWithoutAuthenticationFails) {
  Rig r;
  EXPECT_EQ(error_of([&] { r.ev().establish_session(kNow); }), Errc::NotAuthenticated);
  EXPECT_EQ(error_of([&] { r.st().establish_session(kNow); }), Errc::NotAuthenticated);
  auto s = run_to_m4(r);
  r.ev().handle_m4(s.m4, kNow);
  // Step 4 passed but step 5 has not run yet.
  EXPECT_EQ(error_of([&] { r.ev().establish_session(kNow); }), Errc::NotAuthenticated);
}

TEST(Actors, StationRejectsPidOutsideHashSet) {
  Rig r;
  auto s = run_to_m4(r);
  r.ev().handle_m4(s.m4, kNow);
  r.w.ca().mark_pid_consumed(s.m1.pid);
  EXPECT_FALSE(r.st().verify_peer_credentials(r.ev().present_credential(), kNow));
  EXPECT_EQ(r.st().auth().state, EvcsState::Failed);
}

TEST(Actors, EvRejectsRotatedOutStationCredential) {
  Rig r;
  const auto old_vc = r.st().record().credential;
  r.st().adopt(r.w.ca().rotate_evcs_credentials(r.st().evcs_id(), kNow));
  r.w.seal_pending();
  r.st().override_presented_credential(old_vc);
  auto s = run_to_m4(r);
  r.ev().handle_m4(s.m4, kNow);
  ASSERT_TRUE(r.st().verify_peer_credentials(r.ev().present_credential(), kNow));
  EXPECT_FALSE(r.ev().verify_peer_credentials(r.st().present_credential(), kNow));
  EXPECT_EQ(error_of([&] { r.ev().establish_session(kNow); }), Errc::NotAuthenticated);
}

TEST(Actors, StationStillUsingRotatedKeysFailsHandshake) {
  Rig r;
  r.w.ca().rotate_evcs_credentials(r.st().evcs_id(), 0);
  r.w.seal_pending();
  auto out = r.w.authenticate(0, 0, kNow);
  EXPECT_FALSE(out.authenticated);
  EXPECT_EQ(out.error, Errc::StaleEpoch);
  EXPECT_EQ(out.failed_step, 3);
}

TEST(Actors, EventLogFollowsTransitions) {
  Rig r;
  auto out = r.w.authenticate(0, 0, kNow);
  ASSERT_TRUE(out.authenticated);
  std::vector<std::string> to;
  for (const auto& e : r.ev().events()) to.push_back(e.to);
  EXPECT_EQ(to, (std::vector<std::string>{"SentM1", "SentM3", "Authenticated", "SessionEstablished"}));
  to.clear();
  for (const auto& e : r.st().events()) to.push_back(e.to);
  EXPECT_EQ(to, (std::vector<std::string>{"SentM2", "SentM4", "Authenticated", "SessionEstablished"}));
}

TEST(Driver, CompletenessAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rig r(seed);
    auto out = r.w.authenticate(0, seed % 2, kNow);
    ASSERT_TRUE(out.authenticated) << "seed " << seed;
    EXPECT_EQ(out.ev_key, out.evcs_key);
    EXPECT_EQ(out.failed_step, 0);
  }
}

TEST(Driver, PidIsSingleUseAcrossSessions) {
  Rig r;
  std::set<std::string> used;
  for (int i = 0; i < 5; ++i) {
    auto out = r.w.authenticate(0, i % 2, kNow + i * 10 * kSecond);
    ASSERT_TRUE(out.authenticated);
    EXPECT_TRUE(used.insert(out.pid).second);
    r.w.fabric().unplug(r.w.user(0).endpoint, r.w.station(i % 2).endpoint);
  }
  auto out = r.w.authenticate(0, 0, kNow + 100 * kSecond);
  EXPECT_FALSE(out.authenticated);
  EXPECT_EQ(out.error, Errc::PidConsumed);
  auto forced = r.w.authenticate(0, 0, kNow + 110 * kSecond, *used.begin());
  EXPECT_EQ(forced.error, Errc::PidConsumed);
  EXPECT_EQ(forced.failed_step, 1);
}
