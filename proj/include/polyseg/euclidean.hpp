#pragma once

#include <span>
#include <vector>

#include "polyseg/geometry.hpp"
#include "polyseg/grid.hpp"

namespace polyseg {

/// u(x) = psi(x) w(q(sigma^{-1}(x))) with w linearly interpolated on the grid.
inline double profile_to_euclidean(const Profile& w, const Grid& grid, std::span<const double> x) {
  if (w.values.size() != grid.M) throw ValidationError("profile_to_euclidean: profile not on grid");
  const double t = orbit_map_euclidean(x, grid.params);
  return conformal_factor(x, grid.params) * interpolate(grid, w.values, t);
}

/// Samples u along the ray r * direction, r in radii.
inline std::vector<double> euclidean_ray(const Profile& w, const Grid& grid, std::span<const double> direction,
                                         std::span<const double> radii) {
  if (static_cast<int>(direction.size()) != grid.params.N) {
    throw ValidationError("euclidean ray: direction must have N = " + std::to_string(grid.params.N) + " entries");
  }
  std::vector<double> out;
  std::vector<double> x(direction.size());
  for (double r : radii) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = r * direction[i];
    out.push_back(profile_to_euclidean(w, grid, x));
  }
  return out;
}

}  // namespace polyseg
