#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "v2g/crypto.hpp"
#include "v2g/ledger.hpp"
#include "v2g/units.hpp"

namespace v2g::pki {

using crypto::Digest32;
using crypto::KeyPair;
using crypto::PublicKey;

struct VerifiableCredential {
  std::string subject;  // wallet-key digest (users) or station id
  std::string issuer;
  Digest32 payload_hash;
  crypto::Signature signature;
  SimTime expiry = 0;

  // Bytes covered by the CA signature.
  Bytes signed_bytes() const;
  Bytes encode() const;
  static VerifiableCredential decode(ByteView bytes);
  // Ledger anchor key.
  Digest32 id() const;
  bool operator==(const VerifiableCredential&) const = default;
};

// A single-use pseudonym and its key pair, as handed to the user's wallet.
// The link back to the root pseudonym stays inside the CA.
struct PseudoIdentity {
  std::string pid;
  KeyPair keypair;
  bool consumed = false;
};

struct Enrollment {
  std::string root_pid;
  KeyPair wallet_key;
  VerifiableCredential credential;
};

struct EvcsRecord {
  std::string evcs_id;
  KeyPair keypair;
  VerifiableCredential credential;
  std::uint32_t epoch = 0;
  std::uint32_t station_serial = 0;
};

struct PkiConfig {
  std::string ca_id = "v2g-ca";
  SimTime credential_lifetime = 24 * kHour;
};

// The set-membership and signature check shared by the CA and by stations
// that pulled the PID hash set.
bool check_user_credential(std::string_view pid, const VerifiableCredential& vc,
                           const std::set<Digest32>& pid_hashes,
                           const crypto::VerifyKey& ca_key, SimTime now);

Digest32 pid_digest(std::string_view pid);

class CertificateAuthority {
 public:
  CertificateAuthority(const crypto::Seed32& master_seed, ledger::Ledger& ledger,
                       PkiConfig config = {});

  Enrollment register_user(std::string_view real_id, SimTime now);
  std::vector<PseudoIdentity> issue_pseudo_batch(std::string_view root_pid, std::size_t n);

  EvcsRecord register_evcs(SimTime now);
  EvcsRecord rotate_evcs_credentials(std::string_view evcs_id, SimTime now);

  PublicKey lookup_user_pubkey(std::string_view pid) const;
  PublicKey lookup_evcs_pubkey(std::string_view evcs_id) const;
  bool is_current_station(std::string_view evcs_id) const;

  const std::set<Digest32>& pid_hash_set() const noexcept { return active_hashes_; }
  bool verify_user_credential(std::string_view pid, const VerifiableCredential& vc,
                              SimTime now) const;
  bool verify_signature(const VerifiableCredential& vc) const;
  // Signed, unexpired, and issued for the station's current key; false for
  // a credential rotated out.
  bool verify_station_credential(const VerifiableCredential& vc, SimTime now) const;
  void mark_pid_consumed(std::string_view pid);

  const crypto::VerifyKey& ca_public_key() const noexcept { return signing_.public_key; }
  const PkiConfig& config() const noexcept { return config_; }

  // Enumerates every private key the CA has generated. Test and audit
  // harnesses use it to scan artifacts for key leakage; it is not part of
  // the directory surface exposed to stations or vehicles.
  void for_each_private_key(const std::function<void(const crypto::PrivateKey&)>& fn) const;

 private:
  struct PidEntry {
    std::string parent;  // root pid; never leaves the CA
    PublicKey public_key;
    bool consumed = false;
  };
  struct UserEntry {
    std::string real_id;
    KeyPair wallet_key;
    std::size_t next_index = 0;
  };
  struct StationEntry {
    std::uint32_t serial = 0;
    std::uint32_t epoch = 0;
    bool current = false;
    PublicKey public_key;
  };

  VerifiableCredential issue_credential(std::string subject, ByteView payload, SimTime now);
  void anchor(const VerifiableCredential& vc, ledger::SubjectKind kind, std::uint32_t serial,
              std::uint32_t epoch, SimTime now);
  crypto::Seed32 derive_seed(std::string_view label, std::uint64_t index) const;
  EvcsRecord make_station_record(std::uint32_t serial, std::uint32_t epoch, SimTime now);

  ledger::Ledger& ledger_;
  PkiConfig config_;
  crypto::Seed32 master_;
  crypto::SigningKeyPair signing_;
  std::array<std::uint8_t, 32> pid_salt_{};

  std::set<std::string> real_ids_;
  std::map<std::string, UserEntry, std::less<>> users_;  // by root pid
  std::map<std::string, PidEntry, std::less<>> pids_;
  std::set<Digest32> active_hashes_;
  std::map<std::string, StationEntry, std::less<>> stations_;  // by evcs id, all epochs
  std::uint32_t next_station_serial_ = 1;
  std::uint64_t user_counter_ = 0;
  std::vector<crypto::PrivateKey> issued_private_keys_;
};

// What stations and vehicles are allowed to see of the CA: public-key
// lookups, the PID hash set, and credential checks. No call here can reveal
// which root pseudonym a session pid belongs to.
class PkiDirectory {
 public:
  explicit PkiDirectory(CertificateAuthority& ca) : ca_(&ca) {}

  PublicKey lookup_user_pubkey(std::string_view pid) const { return ca_->lookup_user_pubkey(pid); }
  PublicKey lookup_evcs_pubkey(std::string_view evcs_id) const {
    return ca_->lookup_evcs_pubkey(evcs_id);
  }
  const std::set<Digest32>& pid_hash_set() const noexcept { return ca_->pid_hash_set(); }
  bool verify_signature(const VerifiableCredential& vc) const { return ca_->verify_signature(vc); }
  const crypto::VerifyKey& ca_public_key() const noexcept { return ca_->ca_public_key(); }
  void mark_pid_consumed(std::string_view pid) { ca_->mark_pid_consumed(pid); }

 private:
  CertificateAuthority* ca_;
};

}  // namespace v2g::pki
