#pragma once

#include <compare>
#include <cstdint>
#include <cstdlib>

namespace v2g {

// Simulated time in milliseconds since the start of a run.
using SimTime = std::int64_t;

inline constexpr SimTime kSecond = 1000;
inline constexpr SimTime kHour = 3600 * kSecond;

// Signed energy in watt-hours; positive means grid to EV (charging).
class Energy {
 public:
  constexpr Energy() = default;
  static constexpr Energy wh(std::int64_t value) { return Energy(value); }
  static Energy from_kwh(double kwh);

  constexpr std::int64_t wh() const noexcept { return wh_; }
  double kwh() const noexcept { return static_cast<double>(wh_) / 1000.0; }
  constexpr Energy abs() const noexcept { return Energy(wh_ < 0 ? -wh_ : wh_); }

  constexpr Energy operator-() const noexcept { return Energy(-wh_); }
  constexpr Energy operator+(Energy o) const noexcept { return Energy(wh_ + o.wh_); }
  constexpr Energy operator-(Energy o) const noexcept { return Energy(wh_ - o.wh_); }
  constexpr auto operator<=>(const Energy&) const = default;

 private:
  constexpr explicit Energy(std::int64_t v) : wh_(v) {}
  std::int64_t wh_ = 0;
};

// Currency in micro-units (1e-6 of the unit) so bill arithmetic is exact.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money micros(std::int64_t value) { return Money(value); }
  static Money from_units(double units);

  constexpr std::int64_t micros() const noexcept { return micros_; }
  double units() const noexcept { return static_cast<double>(micros_) / 1e6; }
  constexpr Money abs() const noexcept { return Money(micros_ < 0 ? -micros_ : micros_); }

  constexpr Money operator-() const noexcept { return Money(-micros_); }
  constexpr Money operator+(Money o) const noexcept { return Money(micros_ + o.micros_); }
  constexpr Money operator-(Money o) const noexcept { return Money(micros_ - o.micros_); }
  constexpr Money& operator+=(Money o) noexcept {
    micros_ += o.micros_;
    return *this;
  }
  constexpr auto operator<=>(const Money&) const = default;

 private:
  constexpr explicit Money(std::int64_t v) : micros_(v) {}
  std::int64_t micros_ = 0;
};

// price (currency per kWh) times |energy|, price quantized to micro-units
// first, result rounded half away from zero.
Money charge_for(double price_per_kwh, Energy energy);

}  // namespace v2g
