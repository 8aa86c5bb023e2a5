#pragma once

#include <cmath>
#include <random>

namespace monoreg {

template <class Rng>
Vector sample_in_ball(Rng& rng, const Vector& center, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = center.size();
  Vector dir(n);
  double len = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) dir[i] = gauss(rng);
    len = dir.norm();
  } while (len == 0.0);
  const double r = radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
  return center + (r / len) * dir;
}

}  // namespace monoreg
