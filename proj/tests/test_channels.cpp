#include <gtest/gtest.h>

#include <functional>

#include "oracle.hpp"
#include "v2g/channels.hpp"

using namespace v2g;
using namespace v2g::channels;

namespace {

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoFailure;
}

class FnInterceptor : public Interceptor {
 public:
  using Fn = std::function<std::vector<InterceptedFrame>(InterceptedFrame)>;
  FnInterceptor(bool terminate, Fn fn) : terminate_(terminate), fn_(std::move(fn)) {}
  bool terminates_transport() const override { return terminate_; }
  std::vector<InterceptedFrame> on_wireless(InterceptedFrame f) override {
    seen.push_back(f);
    return fn_(std::move(f));
  }
  std::vector<InterceptedFrame> seen;

 private:
  bool terminate_;
  Fn fn_;
};

std::vector<InterceptedFrame> forward(InterceptedFrame f) { return {std::move(f)}; }

Message random_message(crypto::Drbg& rng, int kind) {
  auto blob = [&](std::size_t max) {
    Bytes b(rng.below(max));
    rng.fill(b);
    return b;
  };
  auto text = [&] {
    std::string s(rng.below(80), 'x');
    for (auto& c : s) c = static_cast<char>('a' + rng.below(26));
    return s;
  };
  switch (kind) {
    case 0: return MessageM1{text(), static_cast<SimTime>(rng.next_u64() >> 1)};
    case 1: return MessageM2{blob(400)};
    case 2: return MessageM3{blob(400)};
    case 3: return MessageM4{blob(400)};
    case 4: return CredentialPresentation{text(), blob(300)};
    default: return MeterFrame{rng.next_u64(), blob(200)};
  }
}

struct Pair {
  ChannelFabric fabric{crypto::Drbg::from_u64(5)};
  EndpointId ev = fabric.add_endpoint("ev");
  EndpointId evcs = fabric.add_endpoint("evcs");
};

}  // namespace

TEST(Codec, M1MatchesHandComputedBytes) {
  const auto bytes = encode_message(MessageM1{"ab", 1'700'000'000'000});
  // kind | u16 len | "ab" | "RQAE" | 8-byte big-endian t1
  oracle::Bytes expected{0x01, 0x00, 0x02, 'a', 'b', 'R', 'Q', 'A', 'E'};
  oracle::put_be(expected, 1'700'000'000'000ULL, 8);
  EXPECT_EQ(oracle::hex(bytes), oracle::hex(expected));
  EXPECT_EQ(to_hex(bytes), "0100026162525141450000018bcfe56800");
}

TEST(Codec, RoundtripThousandPerKind) {
  auto rng = crypto::Drbg::from_u64(41);
  for (int kind = 0; kind < 6; ++kind) {
    for (int i = 0; i < 1000; ++i) {
      auto m = random_message(rng, kind);
      EXPECT_EQ(decode_message(encode_message(m)), m);
      EXPECT_EQ(static_cast<int>(kind_of(m)), kind + 1);
    }
  }
}

TEST(Codec, TruncationDetectedForEveryKind) {
  auto rng = crypto::Drbg::from_u64(42);
  for (int kind = 0; kind < 6; ++kind) {
    auto bytes = encode_message(random_message(rng, kind));
    bytes.pop_back();
    EXPECT_EQ(error_of([&] { decode_message(bytes); }), Errc::Truncated) << "kind " << kind;
  }
  EXPECT_EQ(error_of([&] { decode_message(Bytes{}); }), Errc::Truncated);
}

TEST(Codec, UnknownKindAndTrailingBytes) {
  EXPECT_EQ(error_of([&] { decode_message(Bytes{0x09, 0x00}); }), Errc::UnknownKind);
  EXPECT_EQ(error_of([&] { decode_message(Bytes{0x00}); }), Errc::UnknownKind);
  auto bytes = encode_message(MessageM1{"ab", 5});
  bytes.push_back(0);
  EXPECT_EQ(error_of([&] { decode_message(bytes); }), Errc::BadLength);
}

TEST(Codec, PayloadLayoutsHaveFixedLengths) {
  auto rng = crypto::Drbg::from_u64(43);
  M3Payload m3{crypto::random_challenge(rng), crypto::random_challenge(rng), crypto::hash({})};
  EXPECT_EQ(m3.encode().size(), 96u);
  auto back3 = M3Payload::decode(m3.encode());
  EXPECT_EQ(back3.c_cyber, m3.c_cyber);
  EXPECT_EQ(back3.c_physical, m3.c_physical);
  M4Payload m4{crypto::random_challenge(rng), crypto::hash({})};
  EXPECT_EQ(m4.encode().size(), 64u);
  M2Payload m2{crypto::random_challenge(rng), "evcs-12", crypto::hash({})};
  EXPECT_EQ(m2.encode().size(), 32u + 2 + 7 + 32);
  auto back2 = M2Payload::decode(m2.encode());
  EXPECT_EQ(back2.evcs_id, "evcs-12");
  EXPECT_EQ(error_of([&] { M3Payload::decode(m4.encode()); }), Errc::BadLength);
}

TEST(Transport, HonestHandshakeAgrees) {
  Pair p;
  auto [a, b] = p.fabric.transport_handshake(p.ev, p.evcs);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(p.fabric.has_transport(p.ev, p.evcs));
}

TEST(Transport, UnreachableEndpoint) {
  Pair p;
  p.fabric.set_reachable(p.evcs, false);
  EXPECT_EQ(error_of([&] { p.fabric.transport_handshake(p.ev, p.evcs); }), Errc::Unreachable);
  EXPECT_EQ(error_of([&] { p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{1}); }), Errc::Unreachable);
}

TEST(Transport, TerminatingInterceptorHoldsTwoKeysAndReadsFrames) {
  Pair p;
  auto mitm = std::make_shared<FnInterceptor>(true, forward);
  p.fabric.install_interceptor(mitm);
  auto [a, b] = p.fabric.transport_handshake(p.ev, p.evcs);
  EXPECT_NE(a, b);
  const auto body = encode_message(MessageM1{"pid", 7});
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, body);
  ASSERT_EQ(mitm->seen.size(), 1u);
  ASSERT_TRUE(mitm->seen[0].body.has_value());
  EXPECT_EQ(*mitm->seen[0].body, body);
  auto got = p.fabric.recv(p.evcs);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->body, body);
}

TEST(Transport, PassiveInterceptorSeesOnlyTransportCiphertext) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  auto tap = std::make_shared<FnInterceptor>(false, forward);
  p.fabric.install_interceptor(tap);
  const auto body = encode_message(MessageM1{"pseudonym-xyz", 7});
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, body);
  ASSERT_EQ(tap->seen.size(), 1u);
  EXPECT_FALSE(tap->seen[0].body.has_value());
  EXPECT_FALSE(contains(tap->seen[0].envelope.transport_ct, to_bytes("pseudonym-xyz")));
  EXPECT_EQ(p.fabric.recv(p.evcs)->body, body);
}

TEST(Channels, CanBusRequiresPlugAndNeedsNoHandshake) {
  Pair p;
  EXPECT_EQ(error_of([&] { p.fabric.send(Channel::CanBus, p.ev, p.evcs, Bytes{3}); }), Errc::NotConnected);
  p.fabric.plug(p.ev, p.evcs);
  p.fabric.send(Channel::CanBus, p.ev, p.evcs, Bytes{3});
  EXPECT_FALSE(p.fabric.has_transport(p.ev, p.evcs));
  auto got = p.fabric.recv(p.evcs);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->channel, Channel::CanBus);
  EXPECT_EQ(got->body, Bytes{3});
  p.fabric.unplug(p.ev, p.evcs);
  EXPECT_EQ(error_of([&] { p.fabric.send(Channel::CanBus, p.evcs, p.ev, Bytes{4}); }), Errc::NotConnected);
}

TEST(Channels, InterceptorNeverSeesCanBus) {
  Pair p;
  auto mitm = std::make_shared<FnInterceptor>(true, forward);
  p.fabric.install_interceptor(mitm);
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.plug(p.ev, p.evcs);
  for (int i = 0; i < 20; ++i) p.fabric.send(Channel::CanBus, p.ev, p.evcs, Bytes{static_cast<std::uint8_t>(i)});
  EXPECT_TRUE(mitm->seen.empty());
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{99});
  EXPECT_EQ(mitm->seen.size(), 1u);
}

TEST(Channels, DropRule) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.install_interceptor(
      std::make_shared<FnInterceptor>(false, [](InterceptedFrame) { return std::vector<InterceptedFrame>{}; }));
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{1, 2});
  EXPECT_FALSE(p.fabric.recv(p.evcs));
}

TEST(Channels, ModifiedTransportCiphertextIsRejected) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.install_interceptor(std::make_shared<FnInterceptor>(false, [](InterceptedFrame f) {
    f.envelope.transport_ct.back() ^= 1;
    return std::vector<InterceptedFrame>{std::move(f)};
  }));
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{1, 2});
  EXPECT_FALSE(p.fabric.recv(p.evcs));
  EXPECT_EQ(p.fabric.transport_rejects(), 1u);
}

TEST(Channels, DuplicatedFrameDeliveredOnce) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.install_interceptor(std::make_shared<FnInterceptor>(
      false, [](InterceptedFrame f) { return std::vector<InterceptedFrame>{f, f}; }));
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{1});
  EXPECT_TRUE(p.fabric.recv(p.evcs));
  EXPECT_FALSE(p.fabric.recv(p.evcs));
}

TEST(Channels, FifoPerChannel) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.plug(p.ev, p.evcs);
  for (std::uint8_t i = 0; i < 50; ++i) {
    p.fabric.send(i % 3 == 0 ? Channel::CanBus : Channel::Wireless, p.ev, p.evcs, Bytes{i});
  }
  for (std::uint8_t i = 0; i < 50; ++i) {
    auto got = p.fabric.recv(p.evcs);
    ASSERT_TRUE(got);
    EXPECT_EQ(got->body, Bytes{i});
  }
}

TEST(Channels, CaptureRecordsBothMediaWhenEnabled) {
  Pair p;
  p.fabric.transport_handshake(p.ev, p.evcs);
  p.fabric.plug(p.ev, p.evcs);
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{1});
  EXPECT_TRUE(p.fabric.capture().empty());
  p.fabric.enable_capture(true);
  p.fabric.set_tick(9);
  p.fabric.send(Channel::Wireless, p.ev, p.evcs, Bytes{2});
  p.fabric.send(Channel::CanBus, p.evcs, p.ev, Bytes{3});
  ASSERT_EQ(p.fabric.capture().size(), 2u);
  EXPECT_EQ(p.fabric.capture()[0].tick, 9u);
  EXPECT_EQ(p.fabric.capture()[0].channel, Channel::Wireless);
  EXPECT_NE(p.fabric.capture()[0].wire, Bytes{2});
  EXPECT_EQ(p.fabric.capture()[1].wire, Bytes{3});
}
