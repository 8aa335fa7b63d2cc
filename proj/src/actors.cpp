#include "v2g/actors.hpp"

#include <algorithm>

namespace v2g::actors {

std::string_view to_string(EvState s) noexcept {
  switch (s) {
    case EvState::Idle: return "Idle";
    case EvState::SentM1: return "SentM1";
    case EvState::SentM3: return "SentM3";
    case EvState::Authenticated: return "Authenticated";
    case EvState::Failed: return "Failed";
  }
  return "Unknown";
}

std::string_view to_string(EvcsState s) noexcept {
  switch (s) {
    case EvcsState::Idle: return "Idle";
    case EvcsState::SentM2: return "SentM2";
    case EvcsState::SentM4: return "SentM4";
    case EvcsState::Authenticated: return "Authenticated";
    case EvcsState::Failed: return "Failed";
  }
  return "Unknown";
}

Digest32 chain_t2(SimTime t1) { return crypto::hash(crypto::encode_timestamp(t1)); }

Digest32 chain_next(const Digest32& t) { return crypto::hash(t.view()); }

// ---------------------------------------------------------------------------
// EV

EvActor::EvActor(std::string name, pki::PkiDirectory directory, const ledger::Ledger& ledger,
                 crypto::Drbg rng, AuthConfig config)
    : name_(std::move(name)),
      directory_(directory),
      ledger_(&ledger),
      rng_(std::move(rng)),
      config_(config) {}

void EvActor::enroll(pki::Enrollment enrollment) { enrollment_ = std::move(enrollment); }

void EvActor::add_identities(std::vector<pki::PseudoIdentity> identities) {
  for (auto& id : identities) wallet_.push_back(std::move(id));
}

std::optional<std::string> EvActor::next_fresh_pid() const {
  for (const auto& id : wallet_) {
    if (!id.consumed) return id.pid;
  }
  return std::nullopt;
}

const pki::PseudoIdentity& EvActor::identity(std::string_view pid) const {
  auto it = std::find_if(wallet_.begin(), wallet_.end(), [&](const auto& id) { return id.pid == pid; });
  if (it == wallet_.end()) throw Error(Errc::UnknownPid, "pid not in wallet");
  return *it;
}

pki::PseudoIdentity& EvActor::wallet_entry(std::string_view pid) {
  return const_cast<pki::PseudoIdentity&>(std::as_const(*this).identity(pid));
}

void EvActor::transition(EvState next, SimTime now, std::optional<Errc> error) {
  events_.push_back(SessionEvent{now, name_, std::string(to_string(auth_.state)),
                                 std::string(to_string(next)), error});
  auth_.state = next;
}

void EvActor::fail(Errc code, const std::string& detail, SimTime now) {
  transition(EvState::Failed, now, code);
  auth_.session_key.reset();
  throw Error(code, detail);
}

void EvActor::reset() { auth_ = EvAuthState{}; }

void EvActor::abort(Errc code, SimTime now) {
  if (auth_.state != EvState::Failed) transition(EvState::Failed, now, code);
  auth_.session_key.reset();
}

MessageM1 EvActor::start_auth(std::string_view pid, SimTime now) {
  const auto& id = identity(pid);
  if (id.consumed) throw Error(Errc::PidConsumed, "pseudonym already used");
  if (!plugged_) throw Error(Errc::NotPlugged, "EV is not plugged into a station");
  auth_ = EvAuthState{};
  auth_.pid = std::string(pid);
  auth_.t1 = now;
  transition(EvState::SentM1, now);
  return MessageM1{auth_.pid, now};
}

MessageM3 EvActor::handle_m2(const MessageM2& m2, SimTime now) {
  if (auth_.state != EvState::SentM1) fail(Errc::UnexpectedMessage, "M2 outside SentM1", now);
  channels::M2Payload payload;
  try {
    payload = channels::M2Payload::decode(crypto::pk_decrypt(identity(auth_.pid).keypair, m2.ciphertext));
  } catch (const Error& e) {
    fail(Errc::DecryptFailed, e.what(), now);
  }
  auth_.recovered.c_cyber = payload.c_cyber;
  auth_.recovered.evcs_id = payload.evcs_id;
  auth_.recovered.t2 = payload.t2;
  if (payload.t2 != chain_t2(auth_.t1)) fail(Errc::HashChainMismatch, "T2' != H(T1)", now);

  crypto::PublicKey station_key;
  try {
    station_key = directory_.lookup_evcs_pubkey(payload.evcs_id);
  } catch (const Error& e) {
    fail(e.code(), e.what(), now);
  }
  auth_.c_physical = crypto::random_challenge(rng_);
  auth_.t3 = chain_next(payload.t2);
  channels::M3Payload out{payload.c_cyber, auth_.c_physical, auth_.t3};
  MessageM3 m3{crypto::pk_encrypt(station_key, out.encode(), rng_)};
  transition(EvState::SentM3, now);
  return m3;
}

void EvActor::handle_m4(const MessageM4& m4, SimTime now) {
  if (auth_.state != EvState::SentM3) fail(Errc::UnexpectedMessage, "M4 outside SentM3", now);
  channels::M4Payload payload;
  try {
    payload = channels::M4Payload::decode(crypto::pk_decrypt(identity(auth_.pid).keypair, m4.ciphertext));
  } catch (const Error& e) {
    fail(Errc::DecryptFailed, e.what(), now);
  }
  auth_.recovered.c_physical = payload.c_physical;
  auth_.recovered.t4 = payload.t4;
  if (payload.c_physical != auth_.c_physical) fail(Errc::ChallengeMismatch, "C''_physical", now);
  if (payload.t4 != chain_next(auth_.t3)) fail(Errc::HashChainMismatch, "T4' != H(T3)", now);
  transition(EvState::Authenticated, now);
}

CredentialPresentation EvActor::present_credential() const {
  if (!enrollment_) throw Error(Errc::NotAuthenticated, "EV holds no credential");
  return CredentialPresentation{auth_.pid, enrollment_->credential.encode()};
}

bool EvActor::verify_peer_credentials(const CredentialPresentation& presentation, SimTime now) {
  auth_.peer_verified = false;
  if (auth_.state != EvState::Authenticated) return false;
  if (presentation.subject_id != auth_.recovered.evcs_id) return false;
  pki::VerifiableCredential vc;
  try {
    vc = pki::VerifiableCredential::decode(presentation.credential);
  } catch (const Error&) {
    return false;
  }
  if (vc.subject != auth_.recovered.evcs_id || now >= vc.expiry) return false;
  if (!directory_.verify_signature(vc)) return false;

  ledger::Query by_id;
  by_id.kind = ledger::EntryKind::CredentialAnchor;
  by_id.credential_id = vc.id();
  auto anchors = ledger_->query(by_id);
  if (anchors.size() != 1) return false;
  auto anchor = ledger::CredentialAnchor::decode(anchors.front().payload);
  if (anchor.subject_kind != ledger::SubjectKind::Station) return false;

  // A later epoch for the same physical station means this credential was
  // rotated out.
  ledger::Query by_station;
  by_station.kind = ledger::EntryKind::CredentialAnchor;
  by_station.station_serial = anchor.station_serial;
  for (const auto& e : ledger_->query(by_station)) {
    if (ledger::CredentialAnchor::decode(e.payload).epoch > anchor.epoch) return false;
  }
  auth_.peer_verified = true;
  return true;
}

SessionKey EvActor::establish_session(SimTime now) {
  if (auth_.state != EvState::Authenticated || !auth_.peer_verified) {
    throw Error(Errc::NotAuthenticated, "EV handshake incomplete");
  }
  auth_.session_key = crypto::derive_session_key(
      auth_.recovered.c_cyber, auth_.c_physical,
      channels::session_context(auth_.pid, auth_.recovered.evcs_id));
  if (config_.single_use_pseudonyms) wallet_entry(auth_.pid).consumed = true;
  events_.push_back(SessionEvent{now, name_, "Authenticated", "SessionEstablished", std::nullopt});
  return *auth_.session_key;
}

// ---------------------------------------------------------------------------
// Station

EvcsActor::EvcsActor(pki::EvcsRecord record, pki::PkiDirectory directory, crypto::Drbg rng,
                     AuthConfig config)
    : record_(std::move(record)), directory_(directory), rng_(std::move(rng)), config_(config) {}

void EvcsActor::adopt(pki::EvcsRecord record) {
  record_ = std::move(record);
  presented_.reset();
}

void EvcsActor::transition(EvcsState next, SimTime now, std::optional<Errc> error) {
  events_.push_back(SessionEvent{now, record_.evcs_id, std::string(to_string(auth_.state)),
                                 std::string(to_string(next)), error});
  auth_.state = next;
}

void EvcsActor::fail(Errc code, const std::string& detail, SimTime now) {
  transition(EvcsState::Failed, now, code);
  auth_.session_key.reset();
  throw Error(code, detail);
}

void EvcsActor::reset() { auth_ = EvcsAuthState{}; }

void EvcsActor::abort(Errc code, SimTime now) {
  if (auth_.state != EvcsState::Failed) transition(EvcsState::Failed, now, code);
  auth_.session_key.reset();
}

MessageM2 EvcsActor::handle_m1(const MessageM1& m1, SimTime now) {
  auth_ = EvcsAuthState{};
  const SimTime skew = now >= m1.t1 ? now - m1.t1 : m1.t1 - now;
  if (skew > config_.fresh_window) fail(Errc::StaleTimestamp, "T1 outside freshness window", now);

  std::erase_if(replay_cache_,
                [&](const auto& kv) { return now - kv.second > 2 * config_.fresh_window; });
  if (replay_cache_.contains(m1.pid)) fail(Errc::ReusedPid, "pid seen inside replay window", now);
  replay_cache_.emplace(m1.pid, now);

  try {
    auth_.user_key = directory_.lookup_user_pubkey(m1.pid);
  } catch (const Error& e) {
    fail(e.code(), e.what(), now);
  }
  auth_.pid = m1.pid;
  auth_.t1 = m1.t1;
  auth_.c_cyber = crypto::random_challenge(rng_);
  auth_.t2 = chain_t2(m1.t1);
  channels::M2Payload payload{auth_.c_cyber, record_.evcs_id, auth_.t2};
  MessageM2 m2{crypto::pk_encrypt(auth_.user_key, payload.encode(), rng_)};
  transition(EvcsState::SentM2, now);
  return m2;
}

MessageM4 EvcsActor::handle_m3(const MessageM3& m3, SimTime now) {
  if (auth_.state != EvcsState::SentM2) fail(Errc::UnexpectedMessage, "M3 outside SentM2", now);
  channels::M3Payload payload;
  try {
    payload = channels::M3Payload::decode(crypto::pk_decrypt(record_.keypair, m3.ciphertext));
  } catch (const Error& e) {
    fail(Errc::DecryptFailed, e.what(), now);
  }
  auth_.recovered.c_cyber = payload.c_cyber;
  auth_.recovered.c_physical = payload.c_physical;
  auth_.recovered.t3 = payload.t3;
  if (payload.c_cyber != auth_.c_cyber) fail(Errc::ChallengeMismatch, "C''_cyber", now);
  if (payload.t3 != chain_next(auth_.t2)) fail(Errc::HashChainMismatch, "T3' != H(T2)", now);
  auth_.t4 = chain_next(payload.t3);
  channels::M4Payload out{payload.c_physical, auth_.t4};
  MessageM4 m4{crypto::pk_encrypt(auth_.user_key, out.encode(), rng_)};
  transition(EvcsState::SentM4, now);
  return m4;
}

CredentialPresentation EvcsActor::present_credential() const {
  const auto& vc = presented_ ? *presented_ : record_.credential;
  return CredentialPresentation{record_.evcs_id, vc.encode()};
}

bool EvcsActor::verify_peer_credentials(const CredentialPresentation& presentation, SimTime now) {
  auth_.peer_verified = false;
  if (auth_.state != EvcsState::SentM4) return false;
  bool ok = presentation.subject_id == auth_.pid;
  if (ok) {
    try {
      auto vc = pki::VerifiableCredential::decode(presentation.credential);
      ok = pki::check_user_credential(auth_.pid, vc, directory_.pid_hash_set(),
                                      directory_.ca_public_key(), now);
    } catch (const Error&) {
      ok = false;
    }
  }
  if (!ok) {
    transition(EvcsState::Failed, now, Errc::CredentialRejected);
    return false;
  }
  auth_.peer_verified = true;
  transition(EvcsState::Authenticated, now);
  return true;
}

SessionKey EvcsActor::establish_session(SimTime now) {
  if (auth_.state != EvcsState::Authenticated || !auth_.peer_verified) {
    throw Error(Errc::NotAuthenticated, "station handshake incomplete");
  }
  auth_.session_key = crypto::derive_session_key(
      auth_.c_cyber, auth_.recovered.c_physical, channels::session_context(auth_.pid, record_.evcs_id));
  if (config_.single_use_pseudonyms) directory_.mark_pid_consumed(auth_.pid);
  events_.push_back(SessionEvent{now, record_.evcs_id, "Authenticated", "SessionEstablished", std::nullopt});
  return *auth_.session_key;
}

// ---------------------------------------------------------------------------
// Driver

HandshakeDriver::HandshakeDriver(channels::ChannelFabric& fabric, EvActor& ev,
                                 channels::EndpointId ev_endpoint, EvcsActor& evcs,
                                 channels::EndpointId evcs_endpoint)
    : fabric_(fabric), ev_(ev), evcs_(evcs), ev_ep_(ev_endpoint), evcs_ep_(evcs_endpoint) {}

std::optional<channels::Message> HandshakeDriver::next_message(channels::EndpointId endpoint,
                                                                channels::Channel expected) {
  auto env = fabric_.recv(endpoint);
  if (!env) return std::nullopt;
  // M3 proves the physical connection; anything arriving over the other
  // medium for a step is out of protocol.
  if (env->channel != expected) throw Error(Errc::UnexpectedMessage, "frame on the wrong channel");
  return channels::decode_message(env->body);
}

namespace {

template <class T>
T expect(std::optional<channels::Message> msg) {
  if (!msg) throw Error(Errc::NoResponse, "no frame delivered");
  if (auto* m = std::get_if<T>(&*msg)) return std::move(*m);
  throw Error(Errc::UnexpectedMessage, "unexpected message kind");
}

}  // namespace

HandshakeOutcome HandshakeDriver::run(std::string_view pid, SimTime now) {
  using channels::Channel;
  using channels::encode_message;

  HandshakeOutcome out;
  out.pid = std::string(pid);
  int step = 1;
  bool at_ev = true;
  try {
    if (!fabric_.has_transport(ev_ep_, evcs_ep_)) fabric_.transport_handshake(ev_ep_, evcs_ep_);

    auto m1 = ev_.start_auth(pid, now);
    fabric_.send(Channel::Wireless, ev_ep_, evcs_ep_, encode_message(m1));

    step = 2, at_ev = false;
    auto m2 = evcs_.handle_m1(expect<MessageM1>(next_message(evcs_ep_, Channel::Wireless)), now);
    fabric_.send(Channel::Wireless, evcs_ep_, ev_ep_, encode_message(m2));

    step = 3, at_ev = true;
    auto m3 = ev_.handle_m2(expect<MessageM2>(next_message(ev_ep_, Channel::Wireless)), now);
    fabric_.send(Channel::CanBus, ev_ep_, evcs_ep_, encode_message(m3));

    step = 4, at_ev = false;
    auto m4 = evcs_.handle_m3(expect<MessageM3>(next_message(evcs_ep_, Channel::CanBus)), now);
    fabric_.send(Channel::Wireless, evcs_ep_, ev_ep_, encode_message(m4));

    at_ev = true;
    ev_.handle_m4(expect<MessageM4>(next_message(ev_ep_, Channel::Wireless)), now);

    step = 5;
    fabric_.send(Channel::Wireless, ev_ep_, evcs_ep_, encode_message(ev_.present_credential()));
    fabric_.send(Channel::Wireless, evcs_ep_, ev_ep_, encode_message(evcs_.present_credential()));

    at_ev = false;
    auto from_ev = expect<CredentialPresentation>(next_message(evcs_ep_, Channel::Wireless));
    if (!evcs_.verify_peer_credentials(from_ev, now)) {
      throw Error(Errc::CredentialRejected, "station rejected user credential");
    }
    at_ev = true;
    auto from_evcs = expect<CredentialPresentation>(next_message(ev_ep_, Channel::Wireless));
    if (!ev_.verify_peer_credentials(from_evcs, now)) {
      throw Error(Errc::CredentialRejected, "EV rejected station credential");
    }
    out.ev_key = ev_.establish_session(now);
    out.evcs_key = evcs_.establish_session(now);
    out.authenticated = out.ev_key == out.evcs_key;
  } catch (const Error& e) {
    out.error = e.code();
    out.failed_step = step;
    out.failed_actor = at_ev ? ev_.name() : evcs_.evcs_id();
    ev_.abort(e.code(), now);
    evcs_.abort(e.code(), now);
  }
  return out;
}

}  // namespace v2g::actors
