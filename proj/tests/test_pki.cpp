#include <gtest/gtest.h>

#include <set>

#include "oracle.hpp"
#include "v2g/pki.hpp"

using namespace v2g;
using namespace v2g::pki;

namespace {

class PkiTest : public ::testing::Test {
 protected:
  PkiTest() : ca(crypto::Drbg::from_u64(1).next_seed(), ledger) {}

  std::size_t anchors_for(const VerifiableCredential& vc) {
    if (ledger.pending() > 0) ledger.seal_block();
    ledger::Query q;
    q.kind = ledger::EntryKind::CredentialAnchor;
    q.credential_id = vc.id();
    return ledger.query(q).size();
  }

  ledger::Ledger ledger;
  CertificateAuthority ca;
};

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoFailure;
}

}  // namespace

TEST_F(PkiTest, DistinctUsersGetDistinctRootPids) {
  auto a = ca.register_user("alice", 0);
  auto b = ca.register_user("bob", 0);
  EXPECT_NE(a.root_pid, b.root_pid);
  EXPECT_NE(a.wallet_key.public_key, b.wallet_key.public_key);
}

TEST_F(PkiTest, DuplicateIdentityRejected) {
  ca.register_user("alice", 0);
  EXPECT_EQ(error_of([&] { ca.register_user("alice", 0); }), Errc::DuplicateIdentity);
}

TEST_F(PkiTest, UserCredentialSignedAndAnchoredOnce) {
  auto e = ca.register_user("alice", 0);
  EXPECT_TRUE(ca.verify_signature(e.credential));
  EXPECT_TRUE(crypto::verify(ca.ca_public_key(), e.credential.signed_bytes(), e.credential.signature));
  EXPECT_EQ(anchors_for(e.credential), 1u);

  // The anchor key is the hash of the credential's canonical bytes.
  const auto enc = e.credential.encode();
  EXPECT_EQ(e.credential.id().hex(), oracle::hex(oracle::sha256(oracle::Bytes(enc.begin(), enc.end()))));
  // Bound to the wallet key, not to the root pseudonym.
  EXPECT_EQ(e.credential.subject, crypto::hash(e.wallet_key.public_key.view()).hex());
  EXPECT_EQ(e.credential.payload_hash, crypto::hash(e.wallet_key.public_key.view()));
}

TEST_F(PkiTest, PseudoBatchDistinctAndFresh) {
  auto e = ca.register_user("alice", 0);
  auto batch = ca.issue_pseudo_batch(e.root_pid, 10);
  ASSERT_EQ(batch.size(), 10u);
  std::set<std::string> pids;
  for (const auto& p : batch) {
    EXPECT_FALSE(p.consumed);
    EXPECT_EQ(p.pid.find(e.root_pid), std::string::npos);
    EXPECT_EQ(ca.lookup_user_pubkey(p.pid), p.keypair.public_key);
    pids.insert(p.pid);
  }
  EXPECT_EQ(pids.size(), 10u);
  auto more = ca.issue_pseudo_batch(e.root_pid, 10);
  for (const auto& p : more) EXPECT_FALSE(pids.contains(p.pid));
}

TEST_F(PkiTest, PseudoBatchBoundaries) {
  auto e = ca.register_user("alice", 0);
  EXPECT_EQ(error_of([&] { ca.issue_pseudo_batch(e.root_pid, 0); }), Errc::InvalidCount);
  EXPECT_EQ(error_of([&] { ca.issue_pseudo_batch("rpid-unknown", 3); }), Errc::UnknownUser);
}

TEST_F(PkiTest, PidsAreNotPlainHashesOfRootAndIndex) {
  // Without the CA salt an observer cannot recompute a user's pseudonyms.
  auto e = ca.register_user("alice", 0);
  auto batch = ca.issue_pseudo_batch(e.root_pid, 3);
  for (std::uint64_t i = 0; i < 3; ++i) {
    oracle::Bytes guess;
    oracle::put_be(guess, e.root_pid.size(), 2);
    oracle::put(guess, std::string_view(e.root_pid));
    oracle::put_be(guess, i, 8);
    EXPECT_NE(batch[i].pid, oracle::hex(oracle::sha256(guess)));
  }
}

TEST_F(PkiTest, StationRegistrationAndRotation) {
  auto rec = ca.register_evcs(0);
  EXPECT_TRUE(ca.verify_station_credential(rec.credential, 1));
  EXPECT_EQ(ca.lookup_evcs_pubkey(rec.evcs_id), rec.keypair.public_key);
  EXPECT_EQ(anchors_for(rec.credential), 1u);

  auto next = ca.rotate_evcs_credentials(rec.evcs_id, 10);
  EXPECT_NE(next.evcs_id, rec.evcs_id);
  EXPECT_NE(next.keypair.public_key, rec.keypair.public_key);
  EXPECT_EQ(next.station_serial, rec.station_serial);
  EXPECT_FALSE(ca.verify_station_credential(rec.credential, 11));
  EXPECT_TRUE(ca.verify_station_credential(next.credential, 11));
  EXPECT_EQ(anchors_for(rec.credential), 1u);
  EXPECT_EQ(anchors_for(next.credential), 1u);
  EXPECT_EQ(error_of([&] { ca.lookup_evcs_pubkey(rec.evcs_id); }), Errc::StaleEpoch);
  EXPECT_EQ(error_of([&] { ca.rotate_evcs_credentials(rec.evcs_id, 12); }), Errc::StaleEpoch);
  EXPECT_EQ(error_of([&] { ca.rotate_evcs_credentials("evcs-none", 12); }), Errc::UnknownStation);
}

TEST_F(PkiTest, EpochIncrementsOncePerRotation) {
  auto rec = ca.register_evcs(0);
  EXPECT_EQ(rec.epoch, 0u);
  for (std::uint32_t i = 1; i <= 100; ++i) {
    rec = ca.rotate_evcs_credentials(rec.evcs_id, i);
    EXPECT_EQ(rec.epoch, i);
  }
}

TEST_F(PkiTest, StationLookups) {
  auto a = ca.register_evcs(0);
  auto b = ca.register_evcs(0);
  EXPECT_NE(ca.lookup_evcs_pubkey(a.evcs_id), ca.lookup_evcs_pubkey(b.evcs_id));
  EXPECT_EQ(error_of([&] { ca.lookup_evcs_pubkey("evcs-none"); }), Errc::UnknownStation);
}

TEST_F(PkiTest, UserLookupErrors) {
  auto e = ca.register_user("alice", 0);
  auto batch = ca.issue_pseudo_batch(e.root_pid, 1);
  EXPECT_EQ(error_of([&] { ca.lookup_user_pubkey("nope"); }), Errc::UnknownPid);
  ca.mark_pid_consumed(batch[0].pid);
  EXPECT_EQ(error_of([&] { ca.lookup_user_pubkey(batch[0].pid); }), Errc::ConsumedPid);
}

TEST_F(PkiTest, HashSetTracksUnconsumedPids) {
  auto e = ca.register_user("alice", 0);
  auto batch = ca.issue_pseudo_batch(e.root_pid, 5);
  ASSERT_EQ(ca.pid_hash_set().size(), 5u);
  for (const auto& p : batch) {
    auto digest = oracle::sha256(oracle::Bytes(p.pid.begin(), p.pid.end()));
    EXPECT_TRUE(ca.pid_hash_set().contains(crypto::Digest32(digest)));
  }
  ca.mark_pid_consumed(batch[2].pid);
  EXPECT_EQ(ca.pid_hash_set().size(), 4u);
  EXPECT_FALSE(ca.pid_hash_set().contains(pid_digest(batch[2].pid)));
  EXPECT_EQ(error_of([&] { ca.mark_pid_consumed(batch[2].pid); }), Errc::AlreadyConsumed);
  EXPECT_EQ(error_of([&] { ca.mark_pid_consumed("nope"); }), Errc::UnknownPid);
  EXPECT_EQ(ca.pid_hash_set().size(), 4u);
}

TEST_F(PkiTest, VerifyUserCredential) {
  auto e = ca.register_user("alice", 0);
  auto batch = ca.issue_pseudo_batch(e.root_pid, 2);
  EXPECT_TRUE(ca.verify_user_credential(batch[0].pid, e.credential, 1));

  auto rng = crypto::Drbg::from_u64(77);
  Bytes random_pid(32);
  rng.fill(random_pid);
  EXPECT_FALSE(ca.verify_user_credential(to_hex(random_pid), e.credential, 1));

  for (std::size_t i = 0; i < crypto::Signature::size(); ++i) {
    auto bad = e.credential;
    bad.signature.mutable_view()[i] ^= 0x01;
    EXPECT_FALSE(ca.verify_user_credential(batch[0].pid, bad, 1)) << "signature byte " << i;
  }
  EXPECT_FALSE(ca.verify_user_credential(batch[0].pid, e.credential, e.credential.expiry));
  ca.mark_pid_consumed(batch[0].pid);
  EXPECT_FALSE(ca.verify_user_credential(batch[0].pid, e.credential, 1));
  EXPECT_TRUE(ca.verify_user_credential(batch[1].pid, e.credential, 1));
}

TEST_F(PkiTest, CredentialLifetimeConfigurable) {
  ledger::Ledger l;
  PkiConfig cfg;
  cfg.credential_lifetime = 2 * kHour;
  CertificateAuthority short_ca(crypto::Drbg::from_u64(2).next_seed(), l, cfg);
  auto e = short_ca.register_user("alice", 1000);
  EXPECT_EQ(e.credential.expiry, 1000 + 2 * kHour);
  auto e2 = ca.register_user("alice", 1000);
  EXPECT_EQ(e2.credential.expiry, 1000 + 24 * kHour);
}

TEST_F(PkiTest, EveryIssuedCredentialHasExactlyOneAnchor) {
  std::vector<VerifiableCredential> vcs;
  for (int i = 0; i < 5; ++i) vcs.push_back(ca.register_user("u" + std::to_string(i), 0).credential);
  auto s = ca.register_evcs(0);
  vcs.push_back(s.credential);
  for (int i = 0; i < 3; ++i) {
    s = ca.rotate_evcs_credentials(s.evcs_id, i + 1);
    vcs.push_back(s.credential);
  }
  for (const auto& vc : vcs) EXPECT_EQ(anchors_for(vc), 1u);
  ledger::Query q;
  q.kind = ledger::EntryKind::CredentialAnchor;
  EXPECT_EQ(ledger.query(q).size(), vcs.size());
}

TEST_F(PkiTest, DeterministicUnderSeed) {
  ledger::Ledger l2;
  CertificateAuthority ca2(crypto::Drbg::from_u64(1).next_seed(), l2);
  auto a = ca.register_user("alice", 0);
  auto b = ca2.register_user("alice", 0);
  EXPECT_EQ(a.root_pid, b.root_pid);
  EXPECT_EQ(ca.issue_pseudo_batch(a.root_pid, 1)[0].pid, ca2.issue_pseudo_batch(b.root_pid, 1)[0].pid);
}
