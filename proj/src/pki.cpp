#include "v2g/pki.hpp"

#include "v2g/error.hpp"

namespace v2g::pki {

namespace {

ByteView as_view(std::string_view text) {
  return ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
}

std::string short_hex(const Digest32& d, std::size_t bytes) {
  return to_hex(d.view().first(bytes));
}

}  // namespace

Bytes VerifiableCredential::signed_bytes() const {
  ByteWriter w;
  w.raw(as_view("V2G-VC/v1")).str16(subject).str16(issuer).raw(payload_hash.view()).i64(expiry);
  return std::move(w).take();
}

Bytes VerifiableCredential::encode() const {
  ByteWriter w;
  w.str16(subject).str16(issuer).raw(payload_hash.view()).i64(expiry).raw(signature.view());
  return std::move(w).take();
}

VerifiableCredential VerifiableCredential::decode(ByteView bytes) {
  ByteReader r(bytes);
  VerifiableCredential vc;
  vc.subject = r.str16();
  vc.issuer = r.str16();
  r.raw_into<32>(vc.payload_hash.mutable_view());
  vc.expiry = r.i64();
  r.raw_into<64>(vc.signature.mutable_view());
  r.expect_end();
  return vc;
}

Digest32 VerifiableCredential::id() const { return crypto::hash(encode()); }

Digest32 pid_digest(std::string_view pid) { return crypto::hash(as_view(pid)); }

bool check_user_credential(std::string_view pid, const VerifiableCredential& vc,
                           const std::set<Digest32>& pid_hashes,
                           const crypto::VerifyKey& ca_key, SimTime now) {
  if (!pid_hashes.contains(pid_digest(pid))) return false;
  if (now >= vc.expiry) return false;
  return crypto::verify(ca_key, vc.signed_bytes(), vc.signature);
}

CertificateAuthority::CertificateAuthority(const crypto::Seed32& master_seed,
                                           ledger::Ledger& ledger, PkiConfig config)
    : ledger_(ledger), config_(std::move(config)), master_(master_seed) {
  signing_ = crypto::generate_signing_keypair(derive_seed("ca-signing", 0));
  issued_private_keys_.push_back(signing_.private_key);
  pid_salt_ = derive_seed("pid-salt", 0).array();
}

crypto::Seed32 CertificateAuthority::derive_seed(std::string_view label, std::uint64_t index) const {
  ByteWriter w;
  w.raw(as_view("V2G-PKI/seed")).raw(master_.view()).str16(label).u64(index);
  return crypto::Seed32(crypto::hash(w.view()).array());
}

VerifiableCredential CertificateAuthority::issue_credential(std::string subject, ByteView payload,
                                                            SimTime now) {
  VerifiableCredential vc;
  vc.subject = std::move(subject);
  vc.issuer = config_.ca_id;
  vc.payload_hash = crypto::hash(payload);
  vc.expiry = now + config_.credential_lifetime;
  vc.signature = crypto::sign(signing_, vc.signed_bytes());
  return vc;
}

void CertificateAuthority::anchor(const VerifiableCredential& vc, ledger::SubjectKind kind,
                                  std::uint32_t serial, std::uint32_t epoch, SimTime now) {
  ledger::CredentialAnchor a;
  a.credential_id = vc.id();
  a.subject = vc.subject;
  a.subject_kind = kind;
  a.station_serial = serial;
  a.epoch = epoch;
  a.expiry = vc.expiry;
  ledger_.append_entry({ledger::EntryKind::CredentialAnchor, a.encode(), now, config_.ca_id});
}

Enrollment CertificateAuthority::register_user(std::string_view real_id, SimTime now) {
  if (real_ids_.contains(std::string(real_id))) {
    throw Error(Errc::DuplicateIdentity, std::string(real_id));
  }
  const auto index = user_counter_++;
  ByteWriter w;
  w.raw(as_view("root-pid")).raw(pid_salt_).u64(index);
  std::string root_pid = "rpid-" + short_hex(crypto::hash(w.view()), 16);

  KeyPair wallet = crypto::generate_keypair(derive_seed("wallet", index));
  issued_private_keys_.push_back(wallet.private_key);
  // Bound to the wallet key digest, not to the root pid, so presenting the
  // credential never reveals the root pseudonym.
  auto vc = issue_credential(crypto::hash(wallet.public_key.view()).hex(),
                             wallet.public_key.view(), now);
  anchor(vc, ledger::SubjectKind::User, 0, 0, now);

  real_ids_.insert(std::string(real_id));
  users_.emplace(root_pid, UserEntry{std::string(real_id), wallet, 0});
  return Enrollment{std::move(root_pid), std::move(wallet), std::move(vc)};
}

std::vector<PseudoIdentity> CertificateAuthority::issue_pseudo_batch(std::string_view root_pid,
                                                                     std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidCount, "batch size must be at least 1");
  auto it = users_.find(root_pid);
  if (it == users_.end()) throw Error(Errc::UnknownUser, std::string(root_pid));

  std::vector<PseudoIdentity> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto index = it->second.next_index++;
    ByteWriter w;
    w.str16(root_pid).u64(index).raw(pid_salt_);
    std::string pid = crypto::hash(w.view()).hex();
    KeyPair kp = crypto::generate_keypair(derive_seed("pid:" + pid, 0));
    issued_private_keys_.push_back(kp.private_key);
    pids_.emplace(pid, PidEntry{std::string(root_pid), kp.public_key, false});
    active_hashes_.insert(pid_digest(pid));
    out.push_back(PseudoIdentity{std::move(pid), std::move(kp), false});
  }
  return out;
}

EvcsRecord CertificateAuthority::make_station_record(std::uint32_t serial, std::uint32_t epoch,
                                                     SimTime now) {
  ByteWriter w;
  w.raw(as_view("evcs-id")).raw(pid_salt_).u32(serial).u32(epoch);
  EvcsRecord rec;
  rec.evcs_id = "evcs-" + short_hex(crypto::hash(w.view()), 8);
  rec.keypair = crypto::generate_keypair(
      derive_seed("station", (static_cast<std::uint64_t>(serial) << 32) | epoch));
  issued_private_keys_.push_back(rec.keypair.private_key);
  rec.credential = issue_credential(rec.evcs_id, rec.keypair.public_key.view(), now);
  rec.epoch = epoch;
  rec.station_serial = serial;
  anchor(rec.credential, ledger::SubjectKind::Station, serial, epoch, now);
  stations_[rec.evcs_id] = StationEntry{serial, epoch, true, rec.keypair.public_key};
  return rec;
}

EvcsRecord CertificateAuthority::register_evcs(SimTime now) {
  return make_station_record(next_station_serial_++, 0, now);
}

EvcsRecord CertificateAuthority::rotate_evcs_credentials(std::string_view evcs_id, SimTime now) {
  auto it = stations_.find(evcs_id);
  if (it == stations_.end()) throw Error(Errc::UnknownStation, std::string(evcs_id));
  if (!it->second.current) throw Error(Errc::StaleEpoch, std::string(evcs_id));
  it->second.current = false;
  const auto serial = it->second.serial;
  const auto epoch = it->second.epoch + 1;
  return make_station_record(serial, epoch, now);
}

PublicKey CertificateAuthority::lookup_user_pubkey(std::string_view pid) const {
  auto it = pids_.find(pid);
  if (it == pids_.end()) throw Error(Errc::UnknownPid, std::string(pid));
  if (it->second.consumed) throw Error(Errc::ConsumedPid, std::string(pid));
  return it->second.public_key;
}

PublicKey CertificateAuthority::lookup_evcs_pubkey(std::string_view evcs_id) const {
  auto it = stations_.find(evcs_id);
  if (it == stations_.end()) throw Error(Errc::UnknownStation, std::string(evcs_id));
  if (!it->second.current) throw Error(Errc::StaleEpoch, std::string(evcs_id));
  return it->second.public_key;
}

bool CertificateAuthority::is_current_station(std::string_view evcs_id) const {
  auto it = stations_.find(evcs_id);
  return it != stations_.end() && it->second.current;
}

bool CertificateAuthority::verify_user_credential(std::string_view pid,
                                                  const VerifiableCredential& vc,
                                                  SimTime now) const {
  return vc.issuer == config_.ca_id &&
         check_user_credential(pid, vc, active_hashes_, signing_.public_key, now);
}

bool CertificateAuthority::verify_signature(const VerifiableCredential& vc) const {
  return vc.issuer == config_.ca_id &&
         crypto::verify(signing_.public_key, vc.signed_bytes(), vc.signature);
}

bool CertificateAuthority::verify_station_credential(const VerifiableCredential& vc,
                                                     SimTime now) const {
  auto it = stations_.find(vc.subject);
  if (it == stations_.end() || !it->second.current || now >= vc.expiry) return false;
  return vc.payload_hash == crypto::hash(it->second.public_key.view()) && verify_signature(vc);
}

void CertificateAuthority::mark_pid_consumed(std::string_view pid) {
  auto it = pids_.find(pid);
  if (it == pids_.end()) throw Error(Errc::UnknownPid, std::string(pid));
  if (it->second.consumed) throw Error(Errc::AlreadyConsumed, std::string(pid));
  it->second.consumed = true;
  active_hashes_.erase(pid_digest(pid));
}

void CertificateAuthority::for_each_private_key(
    const std::function<void(const crypto::PrivateKey&)>& fn) const {
  for (const auto& k : issued_private_keys_) fn(k);
}

}  // namespace v2g::pki
