#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "v2g/channels.hpp"
#include "v2g/crypto.hpp"
#include "v2g/error.hpp"
#include "v2g/ledger.hpp"
#include "v2g/pki.hpp"

// EV (EVCC) and station (SECC) sides of the cyber-physical challenge-response
// handshake. Each actor is a single-owner state machine with at most one
// authentication in flight; any error moves it to Failed.
namespace v2g::actors {

using channels::CredentialPresentation;
using channels::MessageM1;
using channels::MessageM2;
using channels::MessageM3;
using channels::MessageM4;
using crypto::Challenge;
using crypto::Digest32;
using crypto::SessionKey;

struct AuthConfig {
  SimTime fresh_window = 120 * kSecond;
  // Ablation switch for the privacy experiments only. When false, pids are
  // not retired after a session and may be reused.
  bool single_use_pseudonyms = true;
};

enum class EvState { Idle, SentM1, SentM3, Authenticated, Failed };
enum class EvcsState { Idle, SentM2, SentM4, Authenticated, Failed };
std::string_view to_string(EvState s) noexcept;
std::string_view to_string(EvcsState s) noexcept;

struct SessionEvent {
  SimTime at = 0;
  std::string actor;
  std::string from;
  std::string to;
  std::optional<Errc> error;
};

struct EvAuthState {
  EvState state = EvState::Idle;
  std::string pid;
  SimTime t1 = 0;
  Challenge c_physical;
  Digest32 t3;
  struct {
    Challenge c_cyber;
    std::string evcs_id;
    Digest32 t2;
    Challenge c_physical;
    Digest32 t4;
  } recovered;
  bool peer_verified = false;
  std::optional<SessionKey> session_key;
};

struct EvcsAuthState {
  EvcsState state = EvcsState::Idle;
  std::string pid;
  crypto::PublicKey user_key;
  SimTime t1 = 0;
  Challenge c_cyber;
  Digest32 t2;
  Digest32 t4;
  struct {
    Challenge c_cyber;
    Challenge c_physical;
    Digest32 t3;
  } recovered;
  bool peer_verified = false;
  std::optional<SessionKey> session_key;
};

// T(n+1) = H(T(n)); T2 = H(encode(T1)).
Digest32 chain_t2(SimTime t1);
Digest32 chain_next(const Digest32& t);

class EvActor {
 public:
  EvActor(std::string name, pki::PkiDirectory directory, const ledger::Ledger& ledger,
          crypto::Drbg rng, AuthConfig config = {});

  void enroll(pki::Enrollment enrollment);
  void add_identities(std::vector<pki::PseudoIdentity> identities);
  // First identity not yet used in an established session.
  std::optional<std::string> next_fresh_pid() const;
  const pki::PseudoIdentity& identity(std::string_view pid) const;
  void set_plugged(bool plugged) noexcept { plugged_ = plugged; }
  bool plugged() const noexcept { return plugged_; }

  // Step 1. Errors: PidConsumed, NotPlugged, UnknownPid (not in the wallet).
  MessageM1 start_auth(std::string_view pid, SimTime now);
  // Step 3. Errors: DecryptFailed, HashChainMismatch, UnknownStation/StaleEpoch.
  MessageM3 handle_m2(const MessageM2& m2, SimTime now);
  // Step 4, EV side. Errors: DecryptFailed, ChallengeMismatch, HashChainMismatch.
  void handle_m4(const MessageM4& m4, SimTime now);

  CredentialPresentation present_credential() const;
  // Step 5: the station's credential must be CA-signed, unexpired, anchored
  // on the ledger, and the latest anchor for its physical station.
  bool verify_peer_credentials(const CredentialPresentation& presentation, SimTime now);
  SessionKey establish_session(SimTime now);

  // Back to Idle, keeping the wallet.
  void reset();
  // Marks the in-flight session Failed for an error raised outside the actor.
  void abort(Errc code, SimTime now);

  const EvAuthState& auth() const noexcept { return auth_; }
  const std::vector<SessionEvent>& events() const noexcept { return events_; }
  const std::string& name() const noexcept { return name_; }

 private:
  void transition(EvState next, SimTime now, std::optional<Errc> error = std::nullopt);
  [[noreturn]] void fail(Errc code, const std::string& detail, SimTime now);
  pki::PseudoIdentity& wallet_entry(std::string_view pid);

  std::string name_;
  pki::PkiDirectory directory_;
  const ledger::Ledger* ledger_;
  crypto::Drbg rng_;
  AuthConfig config_;
  std::optional<pki::Enrollment> enrollment_;
  std::vector<pki::PseudoIdentity> wallet_;
  bool plugged_ = false;
  EvAuthState auth_;
  std::vector<SessionEvent> events_;
};

class EvcsActor {
 public:
  EvcsActor(pki::EvcsRecord record, pki::PkiDirectory directory, crypto::Drbg rng,
            AuthConfig config = {});

  // Install a rotated record; the actor then answers as the new station id.
  void adopt(pki::EvcsRecord record);
  const pki::EvcsRecord& record() const noexcept { return record_; }
  const std::string& evcs_id() const noexcept { return record_.evcs_id; }

  // Step 2. Errors: StaleTimestamp, ReusedPid, UnknownPid, ConsumedPid.
  MessageM2 handle_m1(const MessageM1& m1, SimTime now);
  // Step 4, station side. Errors: DecryptFailed, ChallengeMismatch, HashChainMismatch.
  MessageM4 handle_m3(const MessageM3& m3, SimTime now);

  CredentialPresentation present_credential() const;
  // Step 5: pulls the PID hash set and checks membership, CA signature and
  // expiry of the presented user credential.
  bool verify_peer_credentials(const CredentialPresentation& presentation, SimTime now);
  SessionKey establish_session(SimTime now);

  void reset();
  void abort(Errc code, SimTime now);
  // Lets a scenario present a different (e.g. rotated-out) credential.
  void override_presented_credential(pki::VerifiableCredential vc) { presented_ = std::move(vc); }

  const EvcsAuthState& auth() const noexcept { return auth_; }
  const std::vector<SessionEvent>& events() const noexcept { return events_; }

 private:
  void transition(EvcsState next, SimTime now, std::optional<Errc> error = std::nullopt);
  [[noreturn]] void fail(Errc code, const std::string& detail, SimTime now);

  pki::EvcsRecord record_;
  pki::PkiDirectory directory_;
  crypto::Drbg rng_;
  AuthConfig config_;
  std::optional<pki::VerifiableCredential> presented_;
  std::map<std::string, SimTime, std::less<>> replay_cache_;  // pid -> first seen
  EvcsAuthState auth_;
  std::vector<SessionEvent> events_;
};

struct HandshakeOutcome {
  bool authenticated = false;
  std::optional<Errc> error;
  int failed_step = 0;  // 1..5, 0 when authenticated
  std::string failed_actor;
  std::string pid;
  std::optional<SessionKey> ev_key;
  std::optional<SessionKey> evcs_key;
};

// Runs steps 1-5 between one EV and one station over the channel fabric:
// M1, M2, M4 and the credential presentations on Wireless, M3 on CanBus.
class HandshakeDriver {
 public:
  HandshakeDriver(channels::ChannelFabric& fabric, EvActor& ev, channels::EndpointId ev_endpoint,
                  EvcsActor& evcs, channels::EndpointId evcs_endpoint);

  HandshakeOutcome run(std::string_view pid, SimTime now);

 private:
  std::optional<channels::Message> next_message(channels::EndpointId endpoint,
                                                channels::Channel expected);

  channels::ChannelFabric& fabric_;
  EvActor& ev_;
  EvcsActor& evcs_;
  channels::EndpointId ev_ep_;
  channels::EndpointId evcs_ep_;
};

}  // namespace v2g::actors
