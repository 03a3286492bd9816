#include "dds/rng.hpp"

#include <cmath>

namespace dds {

double Rng::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  // u1 in (0, 1] so the log is finite
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  have_cached_ = true;
  return r * std::cos(a);
}

}  // namespace dds
