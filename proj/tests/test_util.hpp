#pragma once

#include "flowact/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace testutil {

using flowact::geometry::Pose;
using flowact::geometry::Rotation;
using flowact::geometry::Vec3;

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return {d(rng), d(rng), d(rng)};
}

/// Uniform rotation via normalized Gaussian quaternion.
inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Rotation::from_quaternion(n(rng), n(rng), n(rng), n(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double extent = 1.0) {
  return {random_vec(rng, -extent, extent), random_rotation(rng)};
}

inline std::vector<Vec3> random_cloud(std::mt19937_64& rng, std::size_t n, double extent = 1.0) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(random_vec(rng, -extent, extent));
  return pts;
}

inline double pose_rotation_error(const Pose& a, const Pose& b) {
  return flowact::geometry::angle_between(a.rotation, b.rotation);
}

inline double pose_translation_error(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

}  // namespace testutil
