#pragma once

#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

// Reference computations that do not go through the library under test.
namespace oracle {

using Bytes = std::vector<std::uint8_t>;

inline std::array<std::uint8_t, 32> sha256(const Bytes& in) {
  std::array<std::uint8_t, 32> out{};
  SHA256(in.data(), in.size(), out.data());
  return out;
}

inline std::string hex(const std::uint8_t* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

template <class C>
std::string hex(const C& c) {
  return hex(c.data(), c.size());
}

inline void put(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

template <class C>
void put(Bytes& out, const C& c) {
  out.insert(out.end(), c.begin(), c.end());
}

inline void put_be(Bytes& out, std::uint64_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace oracle
