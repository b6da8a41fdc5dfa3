#include "latentprobe/rng.hpp"

#include <cmath>
#include <numbers>

#include "latentprobe/error.hpp"

namespace latentprobe {

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("SeededRng::below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r >= threshold) return r % bound;
  }
}

double SeededRng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  // u1 in (0, 1] keeps the logarithm finite.
  const double u1 = static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

}  // namespace latentprobe
