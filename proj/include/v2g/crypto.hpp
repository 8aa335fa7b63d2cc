#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "v2g/bytes.hpp"
#include "v2g/error.hpp"
#include "v2g/units.hpp"

// Deterministic primitives used by every protocol participant. Nothing in
// this namespace reads OS entropy: all randomness flows from a Drbg that is
// seeded explicitly.
namespace v2g::crypto {

// Fixed-width byte value. Tag keeps e.g. a Challenge from being passed where
// a SessionKey is expected.
template <std::size_t N, class Tag>
class FixedBytes {
 public:
  static constexpr std::size_t size() noexcept { return N; }

  constexpr FixedBytes() = default;
  explicit FixedBytes(const std::array<std::uint8_t, N>& bytes) : data_(bytes) {}

  // Throws Error(BadLength) unless bytes.size() == N.
  static FixedBytes from(ByteView bytes);

  std::span<const std::uint8_t, N> view() const noexcept { return data_; }
  std::span<std::uint8_t, N> mutable_view() noexcept { return data_; }
  const std::array<std::uint8_t, N>& array() const noexcept { return data_; }
  std::string hex() const { return to_hex(data_); }

  auto operator<=>(const FixedBytes&) const = default;

 private:
  std::array<std::uint8_t, N> data_{};
};

template <std::size_t N, class Tag>
FixedBytes<N, Tag> FixedBytes<N, Tag>::from(ByteView bytes) {
  if (bytes.size() != N) {
    throw Error(Errc::BadLength,
                "expected " + std::to_string(N) + " bytes, got " + std::to_string(bytes.size()));
  }
  FixedBytes out;
  std::copy(bytes.begin(), bytes.end(), out.data_.begin());
  return out;
}

struct DigestTag;
struct ChallengeTag;
struct SessionKeyTag;
struct PublicKeyTag;
struct VerifyKeyTag;
struct SignatureTag;
struct SeedTag;
struct NonceTag;

using Digest32 = FixedBytes<32, DigestTag>;
using Challenge = FixedBytes<32, ChallengeTag>;
using SessionKey = FixedBytes<32, SessionKeyTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using VerifyKey = FixedBytes<32, VerifyKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;
using Seed32 = FixedBytes<32, SeedTag>;
using Nonce = FixedBytes<12, NonceTag>;

// 32 secret bytes, wiped on destruction.
class PrivateKey {
 public:
  PrivateKey() = default;
  explicit PrivateKey(std::span<const std::uint8_t, 32> bytes);
  PrivateKey(const PrivateKey& other) = default;
  PrivateKey& operator=(const PrivateKey& other) = default;
  ~PrivateKey();

  std::span<const std::uint8_t, 32> view() const noexcept { return bytes_; }

 private:
  std::array<std::uint8_t, 32> bytes_{};
};

// X25519 encryption key pair.
struct KeyPair {
  PublicKey public_key;
  PrivateKey private_key;
};

// Ed25519 signing key pair; private_key holds the 32-byte seed.
struct SigningKeyPair {
  VerifyKey public_key;
  PrivateKey private_key;
};

// ChaCha20-based deterministic generator. Draw i under seed s is the same on
// every platform.
class Drbg {
 public:
  using result_type = std::uint64_t;

  explicit Drbg(const Seed32& seed);
  static Drbg from_u64(std::uint64_t seed);

  void fill(std::span<std::uint8_t> out);
  std::uint64_t next_u64();
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  Seed32 next_seed();
  // Independent child stream keyed by label; does not advance this stream.
  Drbg fork(std::string_view label) const;
  std::uint64_t draws() const noexcept { return counter_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

 private:
  std::array<std::uint8_t, 32> key_{};
  std::uint64_t counter_ = 0;
};

// SHA-256.
Digest32 hash(ByteView input);
Digest32 hash_concat(std::initializer_list<ByteView> parts);

// 8-byte big-endian milliseconds; the form timestamps take before hashing.
std::array<std::uint8_t, 8> encode_timestamp(SimTime ms);

KeyPair generate_keypair(const Seed32& seed);
SigningKeyPair generate_signing_keypair(const Seed32& seed);
PublicKey public_key_of(const PrivateKey& private_key);
// Raw X25519 agreement. Throws Error(WrongKey) for low-order peer keys.
std::array<std::uint8_t, 32> agree(const PrivateKey& own, const PublicKey& peer);

inline constexpr std::size_t kMaxPkPlaintext = 1024;

// Hybrid encryption: ephemeral X25519 agreement with the recipient, then
// ChaCha20-Poly1305 over the plaintext. The ephemeral scalar comes from rng.
// Layout: version(1) | key hint(8) | ephemeral pk(32) | aead ciphertext.
Bytes pk_encrypt(const PublicKey& recipient, ByteView plaintext, Drbg& rng);
// Throws Error(WrongKey) when the ciphertext was addressed to another key,
// Error(Tampered) when it was modified.
Bytes pk_decrypt(const KeyPair& recipient, ByteView ciphertext);
Bytes pk_decrypt(const PrivateKey& recipient, ByteView ciphertext);

Signature sign(const SigningKeyPair& signer, ByteView message);
bool verify(const VerifyKey& key, ByteView message, const Signature& signature);

Challenge random_challenge(Drbg& rng);

// hash(domain tag | c_cyber | c_physical | context).
SessionKey derive_session_key(const Challenge& c_cyber, const Challenge& c_physical,
                              ByteView context);
inline constexpr std::string_view kSessionKeyDomain = "V2G-PNC/session-key/v1";

// Authenticated symmetric encryption under a 32-byte key.
// Layout: key hint(8) | aead ciphertext.
Bytes sym_encrypt(const SessionKey& key, ByteView plaintext, const Nonce& nonce);
Bytes sym_decrypt(const SessionKey& key, ByteView ciphertext, const Nonce& nonce);

Nonce counter_nonce(std::uint8_t direction, std::uint64_t counter);

// One party's view of a symmetric session: rejects nonce reuse on both the
// sealing and the opening side (Error(NonceReuse)).
class SessionCipher {
 public:
  explicit SessionCipher(const SessionKey& key) : key_(key) {}

  Bytes seal(ByteView plaintext, const Nonce& nonce);
  Bytes open(ByteView ciphertext, const Nonce& nonce);
  const SessionKey& key() const noexcept { return key_; }

 private:
  SessionKey key_;
  std::set<Nonce> sealed_;
  std::set<Nonce> opened_;
};

}  // namespace v2g::crypto
