#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace v2g {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);
// Throws Error(BadLength) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

Bytes to_bytes(std::string_view text);
std::string to_string(ByteView bytes);

bool contains(ByteView haystack, ByteView needle);

// Canonical writer: integers big-endian, variable fields length-prefixed.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v);
  ByteWriter& u16(std::uint16_t v);
  ByteWriter& u32(std::uint32_t v);
  ByteWriter& u64(std::uint64_t v);
  ByteWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  ByteWriter& raw(ByteView bytes);
  // u16 length prefix; throws Error(BadLength) above 65535 bytes.
  ByteWriter& bytes16(ByteView bytes);
  ByteWriter& str16(std::string_view text);
  // u32 length prefix.
  ByteWriter& bytes32(ByteView bytes);

  const Bytes& view() const noexcept { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  Bytes out_;
};

// Reads what ByteWriter produced. Short reads throw Error(Truncated);
// expect_end() throws Error(BadLength) when trailing bytes remain.
class ByteReader {
 public:
  explicit ByteReader(ByteView input) : in_(input) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  Bytes raw(std::size_t n);
  template <std::size_t N>
  void raw_into(std::span<std::uint8_t, N> out) {
    auto chunk = take(N);
    std::copy(chunk.begin(), chunk.end(), out.begin());
  }
  Bytes bytes16();
  std::string str16();
  Bytes bytes32();

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  bool at_end() const noexcept { return remaining() == 0; }
  void expect_end() const;

 private:
  ByteView take(std::size_t n);

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace v2g
