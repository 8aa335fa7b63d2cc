#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "v2g/bytes.hpp"
#include "v2g/crypto.hpp"
#include "v2g/units.hpp"

namespace v2g::channels {

using crypto::Challenge;
using crypto::Digest32;

// Fixed request constant carried in M1.
inline constexpr std::array<std::uint8_t, 4> kReqAuthEv{'R', 'Q', 'A', 'E'};

enum class MessageKind : std::uint8_t {
  M1 = 0x01,
  M2 = 0x02,
  M3 = 0x03,
  M4 = 0x04,
  Credential = 0x05,
  Meter = 0x06,
};

// pid | Req(Auth,EV) | T1, sent in the clear.
struct MessageM1 {
  std::string pid;
  SimTime t1 = 0;
  bool operator==(const MessageM1&) const = default;
};

// M2..M4 are public-key ciphertexts; their plaintext layouts follow below.
struct MessageM2 {
  Bytes ciphertext;
  bool operator==(const MessageM2&) const = default;
};
struct MessageM3 {
  Bytes ciphertext;
  bool operator==(const MessageM3&) const = default;
};
struct MessageM4 {
  Bytes ciphertext;
  bool operator==(const MessageM4&) const = default;
};

// Step-5 credential presentation: the presenter's session identifier (pid or
// station id) plus its encoded verifiable credential.
struct CredentialPresentation {
  std::string subject_id;
  Bytes credential;
  bool operator==(const CredentialPresentation&) const = default;
};

// Transaction-phase metering frame, sealed under the session key.
struct MeterFrame {
  std::uint64_t sequence = 0;
  Bytes ciphertext;
  bool operator==(const MeterFrame&) const = default;
};

using Message =
    std::variant<MessageM1, MessageM2, MessageM3, MessageM4, CredentialPresentation, MeterFrame>;

// Layout: kind byte, then the fields in declared order. Strings and byte
// fields carry a u16 length prefix (ciphertexts u32), timestamps are 8-byte
// big-endian. Throws Error(Truncated / UnknownKind / BadLength).
Bytes encode_message(const Message& msg);
Message decode_message(ByteView bytes);
MessageKind kind_of(const Message& msg) noexcept;
std::string_view to_string(MessageKind kind) noexcept;

// C_cyber | ID_EVCS | T2
struct M2Payload {
  Challenge c_cyber;
  std::string evcs_id;
  Digest32 t2;
  Bytes encode() const;
  static M2Payload decode(ByteView bytes);
};

// C'_cyber | C_physical | T3
struct M3Payload {
  Challenge c_cyber;
  Challenge c_physical;
  Digest32 t3;
  Bytes encode() const;
  static M3Payload decode(ByteView bytes);
};

// C'_physical | T4
struct M4Payload {
  Challenge c_physical;
  Digest32 t4;
  Bytes encode() const;
  static M4Payload decode(ByteView bytes);
};

// pid | evcs_id with length prefixes; the session-key context.
Bytes session_context(std::string_view pid, std::string_view evcs_id);

enum class Channel : std::uint8_t { Wireless, CanBus };
std::string_view to_string(Channel channel) noexcept;

struct EndpointId {
  std::uint32_t value = 0;
  auto operator<=>(const EndpointId&) const = default;
};

struct Envelope {
  Channel channel = Channel::Wireless;
  EndpointId sender;
  EndpointId receiver;
  Bytes body;          // encoded message; empty while in transit on Wireless
  Bytes transport_ct;  // body sealed under K_TLS (Wireless only)
  std::uint64_t transport_seq = 0;
};

struct CaptureRecord {
  std::uint64_t tick = 0;
  Channel channel = Channel::Wireless;
  EndpointId from;
  EndpointId to;
  std::string hop;  // "send", "relay", or "inject"
  Bytes wire;
};

// What an interceptor sees and may do on the wireless medium.
struct InterceptedFrame {
  Envelope envelope;
  // Decrypted application body; only present when the interceptor terminated
  // the transport handshake between the two endpoints.
  std::optional<Bytes> body;
};

// Wireless interceptor. For each frame it returns the frames to deliver
// onward: nothing (drop), the frame itself (forward), modified bodies, or
// extras (inject). It never sees CanBus traffic.
class Interceptor {
 public:
  virtual ~Interceptor() = default;
  // When true, the interceptor answers both sides of transport handshakes
  // and so holds two K_TLS keys per link.
  virtual bool terminates_transport() const { return false; }
  virtual std::vector<InterceptedFrame> on_wireless(InterceptedFrame frame) = 0;
};

class ChannelFabric {
 public:
  explicit ChannelFabric(crypto::Drbg rng);

  EndpointId add_endpoint(std::string name);
  const std::string& name_of(EndpointId id) const;
  void set_reachable(EndpointId id, bool reachable);

  void plug(EndpointId a, EndpointId b);
  void unplug(EndpointId a, EndpointId b);
  bool is_plugged(EndpointId a, EndpointId b) const;

  void install_interceptor(std::shared_ptr<Interceptor> interceptor);
  void remove_interceptor();

  // Unauthenticated ephemeral key agreement on the wireless medium. Returns
  // the K_TLS held by (a, b). With a terminating interceptor the two differ.
  std::pair<crypto::SessionKey, crypto::SessionKey> transport_handshake(EndpointId a, EndpointId b);
  bool has_transport(EndpointId a, EndpointId b) const;

  // Wireless requires a completed transport handshake (Error(Unreachable));
  // CanBus requires a plug connection (Error(NotConnected)).
  void send(Channel channel, EndpointId from, EndpointId to, ByteView body);
  // Next delivered envelope for the endpoint, body already transport-opened.
  std::optional<Envelope> recv(EndpointId endpoint);
  std::size_t queued(EndpointId endpoint) const;

  void set_tick(std::uint64_t tick) noexcept { tick_ = tick; }
  void enable_capture(bool on) noexcept { capture_enabled_ = on; }
  const std::vector<CaptureRecord>& capture() const noexcept { return capture_; }
  std::size_t transport_rejects() const noexcept { return transport_rejects_; }

 private:
  struct Link {
    crypto::SessionKey key;
    std::uint64_t send_seq = 0;
    std::set<std::uint64_t> seen;
  };
  using LinkKey = std::pair<std::uint32_t, std::uint32_t>;  // (self, peer)

  void record(Channel ch, EndpointId from, EndpointId to, std::string hop, ByteView wire);
  Bytes seal_for(Link& link, std::uint8_t direction, ByteView body, std::uint64_t& seq);
  void deliver_wireless(Envelope env);

  crypto::Drbg rng_;
  std::vector<std::string> names_;
  std::set<std::uint32_t> offline_;
  std::set<std::pair<std::uint32_t, std::uint32_t>> plugs_;
  std::shared_ptr<Interceptor> interceptor_;
  std::map<LinkKey, Link> links_;              // endpoint-side transport state
  std::map<LinkKey, Link> interceptor_links_;  // interceptor-side, when terminating
  std::map<std::uint32_t, std::deque<Envelope>> inbox_;
  std::vector<CaptureRecord> capture_;
  bool capture_enabled_ = false;
  std::uint64_t tick_ = 0;
  std::size_t transport_rejects_ = 0;
};

}  // namespace v2g::channels
