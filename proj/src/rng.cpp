#include "unicorn/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "unicorn/errors.hpp"

namespace unicorn {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ValidationError("Rng::index: empty range");
  // Rejection sampling keeps the draw unbiased.
  std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  out.precision(17);
  out << std::hexfloat << spare_;
  return out.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream in(state);
  int spare_flag = 0;
  std::string spare_text;
  in >> engine_ >> spare_flag >> spare_text;
  if (!in) throw FormatError("Rng::restore: malformed state");
  has_spare_ = spare_flag != 0;
  spare_ = std::strtod(spare_text.c_str(), nullptr);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace unicorn
