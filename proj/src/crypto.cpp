#include "v2g/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

#include "v2g/error.hpp"

namespace v2g::crypto {

namespace {

constexpr std::uint8_t kPkVersion = 0x01;
constexpr std::size_t kHintSize = 8;
constexpr std::size_t kTagSize = crypto_aead_chacha20poly1305_ietf_ABYTES;
constexpr std::size_t kPkHeader = 1 + kHintSize + 32;

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

ByteView as_view(std::string_view text) {
  return ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
}

std::array<std::uint8_t, kHintSize> key_hint(std::string_view domain, ByteView key) {
  auto digest = hash_concat({as_view(domain), key});
  std::array<std::uint8_t, kHintSize> out{};
  std::copy_n(digest.array().begin(), kHintSize, out.begin());
  return out;
}

bool aead_seal(ByteView key, ByteView nonce, ByteView ad, ByteView plaintext, Bytes& out) {
  const std::size_t offset = out.size();
  out.resize(offset + plaintext.size() + kTagSize);
  unsigned long long written = 0;
  int rc = crypto_aead_chacha20poly1305_ietf_encrypt(
      out.data() + offset, &written, plaintext.data(), plaintext.size(), ad.data(), ad.size(),
      nullptr, nonce.data(), key.data());
  out.resize(offset + written);
  return rc == 0;
}

bool aead_open(ByteView key, ByteView nonce, ByteView ad, ByteView ciphertext, Bytes& out) {
  if (ciphertext.size() < kTagSize) return false;
  out.resize(ciphertext.size() - kTagSize);
  unsigned long long written = 0;
  int rc = crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &written, nullptr,
                                                     ciphertext.data(), ciphertext.size(),
                                                     ad.data(), ad.size(), nonce.data(),
                                                     key.data());
  out.resize(written);
  return rc == 0;
}

Digest32 pk_wrap_key(ByteView shared, ByteView ephemeral, ByteView recipient) {
  return hash_concat({as_view("V2G-PKE/v1"), shared, ephemeral, recipient});
}

}  // namespace

PrivateKey::PrivateKey(std::span<const std::uint8_t, 32> bytes) {
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

PrivateKey::~PrivateKey() { sodium_memzero(bytes_.data(), bytes_.size()); }

Drbg::Drbg(const Seed32& seed) : key_(seed.array()) { ensure_sodium(); }

Drbg Drbg::from_u64(std::uint64_t seed) {
  ByteWriter w;
  w.raw(as_view("V2G-DRBG/seed")).u64(seed);
  auto digest = hash(w.view());
  return Drbg(Seed32(digest.array()));
}

void Drbg::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(counter_ >> (56 - 8 * i));
  ++counter_;
  crypto_stream_chacha20_ietf(out.data(), out.size(), nonce.data(), key_.data());
}

std::uint64_t Drbg::next_u64() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t Drbg::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Drbg::below bound must be positive");
  const std::uint64_t limit = max() - (max() % bound);
  for (;;) {
    std::uint64_t v = next_u64();
    if (v < limit) return v % bound;
  }
}

double Drbg::uniform(double lo, double hi) {
  const double unit = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

Seed32 Drbg::next_seed() {
  Seed32 out;
  fill(out.mutable_view());
  return out;
}

Drbg Drbg::fork(std::string_view label) const {
  auto digest = hash_concat({as_view("V2G-DRBG/fork"), key_, as_view(label)});
  return Drbg(Seed32(digest.array()));
}

Digest32 hash(ByteView input) {
  ensure_sodium();
  Digest32 out;
  crypto_hash_sha256(out.mutable_view().data(), input.data(), input.size());
  return out;
}

Digest32 hash_concat(std::initializer_list<ByteView> parts) {
  ensure_sodium();
  crypto_hash_sha256_state state;
  crypto_hash_sha256_init(&state);
  for (auto part : parts) crypto_hash_sha256_update(&state, part.data(), part.size());
  Digest32 out;
  crypto_hash_sha256_final(&state, out.mutable_view().data());
  return out;
}

std::array<std::uint8_t, 8> encode_timestamp(SimTime ms) {
  std::array<std::uint8_t, 8> out{};
  const auto v = static_cast<std::uint64_t>(ms);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
  return out;
}

KeyPair generate_keypair(const Seed32& seed) {
  ensure_sodium();
  std::array<std::uint8_t, 32> pk{};
  std::array<std::uint8_t, 32> sk{};
  crypto_box_seed_keypair(pk.data(), sk.data(), seed.view().data());
  KeyPair out{PublicKey(pk), PrivateKey(sk)};
  sodium_memzero(sk.data(), sk.size());
  return out;
}

SigningKeyPair generate_signing_keypair(const Seed32& seed) {
  ensure_sodium();
  std::array<std::uint8_t, 32> pk{};
  std::array<std::uint8_t, 64> sk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), seed.view().data());
  sodium_memzero(sk.data(), sk.size());
  return SigningKeyPair{VerifyKey(pk), PrivateKey(seed.view())};
}

PublicKey public_key_of(const PrivateKey& private_key) {
  ensure_sodium();
  std::array<std::uint8_t, 32> pk{};
  crypto_scalarmult_base(pk.data(), private_key.view().data());
  return PublicKey(pk);
}

std::array<std::uint8_t, 32> agree(const PrivateKey& own, const PublicKey& peer) {
  ensure_sodium();
  std::array<std::uint8_t, 32> shared{};
  if (crypto_scalarmult(shared.data(), own.view().data(), peer.view().data()) != 0) {
    throw Error(Errc::WrongKey, "peer key is not a valid X25519 point");
  }
  return shared;
}

Bytes pk_encrypt(const PublicKey& recipient, ByteView plaintext, Drbg& rng) {
  ensure_sodium();
  if (plaintext.size() > kMaxPkPlaintext) {
    throw Error(Errc::Oversize, std::to_string(plaintext.size()) + " bytes exceeds limit");
  }
  std::array<std::uint8_t, 32> eph_sk{};
  rng.fill(eph_sk);
  std::array<std::uint8_t, 32> eph_pk{};
  crypto_scalarmult_base(eph_pk.data(), eph_sk.data());
  std::array<std::uint8_t, 32> shared{};
  if (crypto_scalarmult(shared.data(), eph_sk.data(), recipient.view().data()) != 0) {
    sodium_memzero(eph_sk.data(), eph_sk.size());
    throw Error(Errc::WrongKey, "recipient key is not a valid X25519 point");
  }
  sodium_memzero(eph_sk.data(), eph_sk.size());
  auto wrap = pk_wrap_key(shared, eph_pk, recipient.view());
  sodium_memzero(shared.data(), shared.size());

  Bytes out;
  out.reserve(kPkHeader + plaintext.size() + kTagSize);
  out.push_back(kPkVersion);
  auto hint = key_hint("V2G-KEY-HINT", recipient.view());
  out.insert(out.end(), hint.begin(), hint.end());
  out.insert(out.end(), eph_pk.begin(), eph_pk.end());

  std::array<std::uint8_t, 33> ad{};
  ad[0] = kPkVersion;
  std::copy(eph_pk.begin(), eph_pk.end(), ad.begin() + 1);
  const std::array<std::uint8_t, 12> zero_nonce{};
  aead_seal(wrap.view(), zero_nonce, ad, plaintext, out);
  return out;
}

Bytes pk_decrypt(const KeyPair& recipient, ByteView ciphertext) {
  ensure_sodium();
  if (ciphertext.size() < kPkHeader + kTagSize) {
    throw Error(Errc::Tampered, "ciphertext shorter than header");
  }
  const auto own_hint = key_hint("V2G-KEY-HINT", recipient.public_key.view());
  const bool hint_matches =
      std::equal(own_hint.begin(), own_hint.end(), ciphertext.begin() + 1);

  auto eph_pk = ciphertext.subspan(1 + kHintSize, 32);
  std::array<std::uint8_t, 32> shared{};
  bool opened = false;
  Bytes plaintext;
  if (ciphertext[0] == kPkVersion &&
      crypto_scalarmult(shared.data(), recipient.private_key.view().data(), eph_pk.data()) == 0) {
    auto wrap = pk_wrap_key(shared, eph_pk, recipient.public_key.view());
    sodium_memzero(shared.data(), shared.size());
    std::array<std::uint8_t, 33> ad{};
    ad[0] = kPkVersion;
    std::copy(eph_pk.begin(), eph_pk.end(), ad.begin() + 1);
    const std::array<std::uint8_t, 12> zero_nonce{};
    opened = aead_open(wrap.view(), zero_nonce, ad, ciphertext.subspan(kPkHeader), plaintext);
  }
  // The hint is outside the AEAD, so a modified hint on an otherwise intact
  // ciphertext still counts as tampering.
  if (opened && hint_matches) return plaintext;
  if (opened || hint_matches) throw Error(Errc::Tampered, "public-key ciphertext failed authentication");
  throw Error(Errc::WrongKey, "ciphertext addressed to a different key");
}

Bytes pk_decrypt(const PrivateKey& recipient, ByteView ciphertext) {
  return pk_decrypt(KeyPair{public_key_of(recipient), recipient}, ciphertext);
}

Signature sign(const SigningKeyPair& signer, ByteView message) {
  ensure_sodium();
  std::array<std::uint8_t, 32> pk{};
  std::array<std::uint8_t, 64> sk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), signer.private_key.view().data());
  std::array<std::uint8_t, 64> sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk.data());
  sodium_memzero(sk.data(), sk.size());
  return Signature(sig);
}

bool verify(const VerifyKey& key, ByteView message, const Signature& signature) {
  ensure_sodium();
  return crypto_sign_verify_detached(signature.view().data(), message.data(), message.size(),
                                     key.view().data()) == 0;
}

Challenge random_challenge(Drbg& rng) {
  Challenge out;
  rng.fill(out.mutable_view());
  return out;
}

SessionKey derive_session_key(const Challenge& c_cyber, const Challenge& c_physical,
                              ByteView context) {
  auto digest = hash_concat({as_view(kSessionKeyDomain), c_cyber.view(), c_physical.view(), context});
  return SessionKey(digest.array());
}

Nonce counter_nonce(std::uint8_t direction, std::uint64_t counter) {
  std::array<std::uint8_t, 12> n{};
  n[0] = direction;
  for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
  return Nonce(n);
}

Bytes sym_encrypt(const SessionKey& key, ByteView plaintext, const Nonce& nonce) {
  ensure_sodium();
  Bytes out;
  auto hint = key_hint("V2G-SYM-HINT", key.view());
  out.insert(out.end(), hint.begin(), hint.end());
  aead_seal(key.view(), nonce.view(), {}, plaintext, out);
  return out;
}

Bytes sym_decrypt(const SessionKey& key, ByteView ciphertext, const Nonce& nonce) {
  ensure_sodium();
  if (ciphertext.size() < kHintSize + kTagSize) throw Error(Errc::Tampered, "ciphertext too short");
  const auto own_hint = key_hint("V2G-SYM-HINT", key.view());
  const bool hint_matches = std::equal(own_hint.begin(), own_hint.end(), ciphertext.begin());
  Bytes plaintext;
  const bool opened = aead_open(key.view(), nonce.view(), {}, ciphertext.subspan(kHintSize), plaintext);
  if (opened && hint_matches) return plaintext;
  if (opened || hint_matches) throw Error(Errc::Tampered, "symmetric ciphertext failed authentication");
  throw Error(Errc::WrongKey, "ciphertext sealed under a different key");
}

Bytes SessionCipher::seal(ByteView plaintext, const Nonce& nonce) {
  if (!sealed_.insert(nonce).second) throw Error(Errc::NonceReuse, "nonce already used for sealing");
  return sym_encrypt(key_, plaintext, nonce);
}

Bytes SessionCipher::open(ByteView ciphertext, const Nonce& nonce) {
  if (opened_.contains(nonce)) throw Error(Errc::NonceReuse, "nonce already opened");
  auto plaintext = sym_decrypt(key_, ciphertext, nonce);
  opened_.insert(nonce);
  return plaintext;
}

}  // namespace v2g::crypto
