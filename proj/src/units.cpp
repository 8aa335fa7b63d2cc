#include "v2g/units.hpp"

#include <cmath>

namespace v2g {

Energy Energy::from_kwh(double kwh) { return Energy::wh(std::llround(kwh * 1000.0)); }

Money Money::from_units(double units) { return Money::micros(std::llround(units * 1e6)); }

Money charge_for(double price_per_kwh, Energy energy) {
  const std::int64_t price_micros = std::llround(price_per_kwh * 1e6);
  const std::int64_t product = price_micros * energy.abs().wh();
  // product is in micro-units * Wh; divide by 1000 Wh/kWh, rounding half up
  // (product is non-negative for non-negative prices).
  const std::int64_t sign = product < 0 ? -1 : 1;
  return Money::micros((product + sign * 500) / 1000);
}

}  // namespace v2g
