#include "v2g/bytes.hpp"

#include <algorithm>

#include "v2g/error.hpp"

namespace v2g {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::BadLength, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::BadLength, "non-hex character");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

std::string to_string(ByteView bytes) { return std::string(bytes.begin(), bytes.end()); }

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

ByteWriter& ByteWriter::u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

ByteWriter& ByteWriter::u16(std::uint16_t v) {
  out_.push_back(static_cast<std::uint8_t>(v >> 8));
  out_.push_back(static_cast<std::uint8_t>(v));
  return *this;
}

ByteWriter& ByteWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

ByteWriter& ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

ByteWriter& ByteWriter::raw(ByteView bytes) {
  out_.insert(out_.end(), bytes.begin(), bytes.end());
  return *this;
}

ByteWriter& ByteWriter::bytes16(ByteView bytes) {
  if (bytes.size() > 0xffff) throw Error(Errc::BadLength, "field exceeds u16 length prefix");
  u16(static_cast<std::uint16_t>(bytes.size()));
  return raw(bytes);
}

ByteWriter& ByteWriter::str16(std::string_view text) {
  return bytes16(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ByteWriter& ByteWriter::bytes32(ByteView bytes) {
  if (bytes.size() > 0xffffffffu) throw Error(Errc::BadLength, "field exceeds u32 length prefix");
  u32(static_cast<std::uint32_t>(bytes.size()));
  return raw(bytes);
}

ByteView ByteReader::take(std::size_t n) {
  if (remaining() < n) {
    throw Error(Errc::Truncated,
                "need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()));
  }
  auto out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto b = take(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  std::uint32_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = take(8);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

Bytes ByteReader::raw(std::size_t n) {
  auto b = take(n);
  return Bytes(b.begin(), b.end());
}

Bytes ByteReader::bytes16() { return raw(u16()); }

std::string ByteReader::str16() {
  auto b = take(u16());
  return std::string(b.begin(), b.end());
}

Bytes ByteReader::bytes32() { return raw(u32()); }

void ByteReader::expect_end() const {
  if (!at_end()) throw Error(Errc::BadLength, std::to_string(remaining()) + " trailing bytes");
}

}  // namespace v2g
