#include "equiflow/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace equiflow {

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 in (0,1] avoids log(0)
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n <= 0");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::int64_t>(v % un);
}

Tensor Rng::normal_tensor(const Shape& shape, double stddev) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stddev * normal();
  return t;
}

Tensor Rng::uniform_tensor(const Shape& shape) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = uniform();
  return t;
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' ' << std::hexfloat << cached_;
  return os.str();
}

void Rng::load_state(const std::string& state) {
  std::istringstream is(state);
  int cached_flag = 0;
  is >> engine_ >> cached_flag >> std::hexfloat >> cached_;
  if (is.fail()) throw std::runtime_error("rng: bad serialized state");
  has_cached_ = cached_flag != 0;
}

}  // namespace equiflow
