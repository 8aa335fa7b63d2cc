#include "v2g/channels.hpp"

#include "v2g/error.hpp"

namespace v2g::channels {

namespace {

ByteView as_view(std::string_view text) {
  return ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
}

std::uint8_t direction(EndpointId from, EndpointId to) { return from.value < to.value ? 0 : 1; }

crypto::SessionKey transport_key(const std::array<std::uint8_t, 32>& shared,
                                 const crypto::PublicKey& lower, const crypto::PublicKey& upper) {
  return crypto::SessionKey(
      crypto::hash_concat({as_view("V2G-TLS/v1"), shared, lower.view(), upper.view()}).array());
}

template <class T>
Bytes encode_ct(MessageKind kind, const T& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind)).bytes32(m.ciphertext);
  return std::move(w).take();
}

}  // namespace

std::string_view to_string(MessageKind kind) noexcept {
  switch (kind) {
    case MessageKind::M1: return "M1";
    case MessageKind::M2: return "M2";
    case MessageKind::M3: return "M3";
    case MessageKind::M4: return "M4";
    case MessageKind::Credential: return "Credential";
    case MessageKind::Meter: return "Meter";
  }
  return "Unknown";
}

std::string_view to_string(Channel channel) noexcept {
  return channel == Channel::Wireless ? "Wireless" : "CanBus";
}

MessageKind kind_of(const Message& msg) noexcept {
  struct Visitor {
    MessageKind operator()(const MessageM1&) const { return MessageKind::M1; }
    MessageKind operator()(const MessageM2&) const { return MessageKind::M2; }
    MessageKind operator()(const MessageM3&) const { return MessageKind::M3; }
    MessageKind operator()(const MessageM4&) const { return MessageKind::M4; }
    MessageKind operator()(const CredentialPresentation&) const { return MessageKind::Credential; }
    MessageKind operator()(const MeterFrame&) const { return MessageKind::Meter; }
  };
  return std::visit(Visitor{}, msg);
}

Bytes encode_message(const Message& msg) {
  struct Visitor {
    Bytes operator()(const MessageM1& m) const {
      ByteWriter w;
      w.u8(static_cast<std::uint8_t>(MessageKind::M1))
          .str16(m.pid)
          .raw(kReqAuthEv)
          .i64(m.t1);
      return std::move(w).take();
    }
    Bytes operator()(const MessageM2& m) const { return encode_ct(MessageKind::M2, m); }
    Bytes operator()(const MessageM3& m) const { return encode_ct(MessageKind::M3, m); }
    Bytes operator()(const MessageM4& m) const { return encode_ct(MessageKind::M4, m); }
    Bytes operator()(const CredentialPresentation& m) const {
      ByteWriter w;
      w.u8(static_cast<std::uint8_t>(MessageKind::Credential)).str16(m.subject_id).bytes16(m.credential);
      return std::move(w).take();
    }
    Bytes operator()(const MeterFrame& m) const {
      ByteWriter w;
      w.u8(static_cast<std::uint8_t>(MessageKind::Meter)).u64(m.sequence).bytes32(m.ciphertext);
      return std::move(w).take();
    }
  };
  return std::visit(Visitor{}, msg);
}

Message decode_message(ByteView bytes) {
  ByteReader r(bytes);
  const auto kind = r.u8();
  Message out;
  switch (static_cast<MessageKind>(kind)) {
    case MessageKind::M1: {
      MessageM1 m;
      m.pid = r.str16();
      auto tag = r.raw(kReqAuthEv.size());
      if (!std::equal(tag.begin(), tag.end(), kReqAuthEv.begin())) {
        throw Error(Errc::BadLength, "M1 request tag mismatch");
      }
      m.t1 = r.i64();
      out = std::move(m);
      break;
    }
    case MessageKind::M2: out = MessageM2{r.bytes32()}; break;
    case MessageKind::M3: out = MessageM3{r.bytes32()}; break;
    case MessageKind::M4: out = MessageM4{r.bytes32()}; break;
    case MessageKind::Credential: {
      CredentialPresentation m;
      m.subject_id = r.str16();
      m.credential = r.bytes16();
      out = std::move(m);
      break;
    }
    case MessageKind::Meter: {
      MeterFrame m;
      m.sequence = r.u64();
      m.ciphertext = r.bytes32();
      out = std::move(m);
      break;
    }
    default:
      throw Error(Errc::UnknownKind, "message kind " + std::to_string(kind));
  }
  r.expect_end();
  return out;
}

Bytes M2Payload::encode() const {
  ByteWriter w;
  w.raw(c_cyber.view()).str16(evcs_id).raw(t2.view());
  return std::move(w).take();
}

M2Payload M2Payload::decode(ByteView bytes) {
  ByteReader r(bytes);
  M2Payload p;
  r.raw_into<32>(p.c_cyber.mutable_view());
  p.evcs_id = r.str16();
  r.raw_into<32>(p.t2.mutable_view());
  r.expect_end();
  return p;
}

Bytes M3Payload::encode() const {
  ByteWriter w;
  w.raw(c_cyber.view()).raw(c_physical.view()).raw(t3.view());
  return std::move(w).take();
}

M3Payload M3Payload::decode(ByteView bytes) {
  if (bytes.size() != 96) throw Error(Errc::BadLength, "M3 payload must be 96 bytes");
  ByteReader r(bytes);
  M3Payload p;
  r.raw_into<32>(p.c_cyber.mutable_view());
  r.raw_into<32>(p.c_physical.mutable_view());
  r.raw_into<32>(p.t3.mutable_view());
  return p;
}

Bytes M4Payload::encode() const {
  ByteWriter w;
  w.raw(c_physical.view()).raw(t4.view());
  return std::move(w).take();
}

M4Payload M4Payload::decode(ByteView bytes) {
  if (bytes.size() != 64) throw Error(Errc::BadLength, "M4 payload must be 64 bytes");
  ByteReader r(bytes);
  M4Payload p;
  r.raw_into<32>(p.c_physical.mutable_view());
  r.raw_into<32>(p.t4.mutable_view());
  return p;
}

Bytes session_context(std::string_view pid, std::string_view evcs_id) {
  ByteWriter w;
  w.str16(pid).str16(evcs_id);
  return std::move(w).take();
}

ChannelFabric::ChannelFabric(crypto::Drbg rng) : rng_(std::move(rng)) {}

EndpointId ChannelFabric::add_endpoint(std::string name) {
  names_.push_back(std::move(name));
  return EndpointId{static_cast<std::uint32_t>(names_.size() - 1)};
}

const std::string& ChannelFabric::name_of(EndpointId id) const { return names_.at(id.value); }

void ChannelFabric::set_reachable(EndpointId id, bool reachable) {
  if (reachable) {
    offline_.erase(id.value);
  } else {
    offline_.insert(id.value);
  }
}

void ChannelFabric::plug(EndpointId a, EndpointId b) {
  plugs_.insert({std::min(a.value, b.value), std::max(a.value, b.value)});
}

void ChannelFabric::unplug(EndpointId a, EndpointId b) {
  plugs_.erase({std::min(a.value, b.value), std::max(a.value, b.value)});
}

bool ChannelFabric::is_plugged(EndpointId a, EndpointId b) const {
  return plugs_.contains({std::min(a.value, b.value), std::max(a.value, b.value)});
}

void ChannelFabric::install_interceptor(std::shared_ptr<Interceptor> interceptor) {
  interceptor_ = std::move(interceptor);
}

void ChannelFabric::remove_interceptor() { interceptor_.reset(); }

std::pair<crypto::SessionKey, crypto::SessionKey> ChannelFabric::transport_handshake(EndpointId a,
                                                                                     EndpointId b) {
  if (a.value >= names_.size() || b.value >= names_.size() || offline_.contains(a.value) ||
      offline_.contains(b.value)) {
    throw Error(Errc::Unreachable, "endpoint not reachable on the wireless medium");
  }
  auto eph_a = crypto::generate_keypair(rng_.next_seed());
  auto eph_b = crypto::generate_keypair(rng_.next_seed());

  // Keys are bound to the public shares in endpoint-id order.
  auto ordered_key = [](const std::array<std::uint8_t, 32>& shared, EndpointId x,
                        const crypto::PublicKey& px, EndpointId y, const crypto::PublicKey& py) {
    return x.value < y.value ? transport_key(shared, px, py) : transport_key(shared, py, px);
  };

  crypto::SessionKey key_a, key_b;
  if (interceptor_ && interceptor_->terminates_transport()) {
    auto mitm_a = crypto::generate_keypair(rng_.next_seed());
    auto mitm_b = crypto::generate_keypair(rng_.next_seed());
    key_a = ordered_key(crypto::agree(eph_a.private_key, mitm_a.public_key), a, eph_a.public_key, b,
                        mitm_a.public_key);
    key_b = ordered_key(crypto::agree(eph_b.private_key, mitm_b.public_key), a, mitm_b.public_key, b,
                        eph_b.public_key);
    interceptor_links_[{a.value, b.value}] = Link{key_a, 0, {}};
    interceptor_links_[{b.value, a.value}] = Link{key_b, 0, {}};
  } else {
    key_a = ordered_key(crypto::agree(eph_a.private_key, eph_b.public_key), a, eph_a.public_key, b,
                        eph_b.public_key);
    key_b = key_a;
    interceptor_links_.erase({a.value, b.value});
    interceptor_links_.erase({b.value, a.value});
  }
  links_[{a.value, b.value}] = Link{key_a, 0, {}};
  links_[{b.value, a.value}] = Link{key_b, 0, {}};
  return {key_a, key_b};
}

bool ChannelFabric::has_transport(EndpointId a, EndpointId b) const {
  return links_.contains({a.value, b.value}) && links_.contains({b.value, a.value});
}

void ChannelFabric::record(Channel ch, EndpointId from, EndpointId to, std::string hop,
                           ByteView wire) {
  if (!capture_enabled_) return;
  capture_.push_back(CaptureRecord{tick_, ch, from, to, std::move(hop), Bytes(wire.begin(), wire.end())});
}

Bytes ChannelFabric::seal_for(Link& link, std::uint8_t dir, ByteView body, std::uint64_t& seq) {
  seq = link.send_seq++;
  return crypto::sym_encrypt(link.key, body, crypto::counter_nonce(dir, seq));
}

void ChannelFabric::send(Channel channel, EndpointId from, EndpointId to, ByteView body) {
  if (channel == Channel::CanBus) {
    if (!is_plugged(from, to)) throw Error(Errc::NotConnected, "no CAN-bus link between endpoints");
    Envelope env{Channel::CanBus, from, to, Bytes(body.begin(), body.end()), {}, 0};
    record(Channel::CanBus, from, to, "send", body);
    inbox_[to.value].push_back(std::move(env));
    return;
  }

  auto link = links_.find({from.value, to.value});
  if (link == links_.end() || offline_.contains(to.value)) {
    throw Error(Errc::Unreachable, "no transport session between endpoints");
  }
  Envelope env{Channel::Wireless, from, to, {}, {}, 0};
  env.transport_ct = seal_for(link->second, direction(from, to), body, env.transport_seq);
  record(Channel::Wireless, from, to, "send", env.transport_ct);

  if (!interceptor_) {
    deliver_wireless(std::move(env));
    return;
  }

  InterceptedFrame frame{env, std::nullopt};
  auto tap = interceptor_links_.find({from.value, to.value});
  if (tap != interceptor_links_.end()) {
    try {
      frame.body = crypto::sym_decrypt(tap->second.key, env.transport_ct,
                                       crypto::counter_nonce(direction(from, to), env.transport_seq));
    } catch (const Error&) {
      frame.body.reset();
    }
  }
  for (auto& out : interceptor_->on_wireless(std::move(frame))) {
    Envelope fwd = std::move(out.envelope);
    fwd.channel = Channel::Wireless;
    fwd.body.clear();
    const bool injected = fwd.sender != from || fwd.receiver != to;
    if (out.body) {
      // Re-seal toward the receiver with the interceptor's key for that leg.
      auto leg = interceptor_links_.find({fwd.receiver.value, fwd.sender.value});
      if (leg == interceptor_links_.end()) continue;
      fwd.transport_ct =
          seal_for(leg->second, direction(fwd.sender, fwd.receiver), *out.body, fwd.transport_seq);
    }
    record(Channel::Wireless, fwd.sender, fwd.receiver, injected ? "inject" : "relay",
           fwd.transport_ct);
    deliver_wireless(std::move(fwd));
  }
}

void ChannelFabric::deliver_wireless(Envelope env) {
  auto link = links_.find({env.receiver.value, env.sender.value});
  if (link == links_.end()) {
    ++transport_rejects_;
    return;
  }
  if (link->second.seen.contains(env.transport_seq)) {
    ++transport_rejects_;
    return;
  }
  try {
    env.body = crypto::sym_decrypt(link->second.key, env.transport_ct,
                                   crypto::counter_nonce(direction(env.sender, env.receiver),
                                                         env.transport_seq));
  } catch (const Error&) {
    ++transport_rejects_;
    return;
  }
  link->second.seen.insert(env.transport_seq);
  inbox_[env.receiver.value].push_back(std::move(env));
}

std::optional<Envelope> ChannelFabric::recv(EndpointId endpoint) {
  auto it = inbox_.find(endpoint.value);
  if (it == inbox_.end() || it->second.empty()) return std::nullopt;
  Envelope env = std::move(it->second.front());
  it->second.pop_front();
  return env;
}

std::size_t ChannelFabric::queued(EndpointId endpoint) const {
  auto it = inbox_.find(endpoint.value);
  return it == inbox_.end() ? 0 : it->second.size();
}

}  // namespace v2g::channels
