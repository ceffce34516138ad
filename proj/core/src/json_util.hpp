#pragma once

// JSON conversions for the structured-text file formats.

#include "flowact/errors.hpp"
#include "flowact/geometry.hpp"

#include <json.hpp>

#include <string>

namespace flowact::detail {

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what(), e.byte);
  }
}

inline geometry::Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw nlohmann::json::type_error::create(302, "expected [x, y, z]", &j);
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json vec3_to_json(const geometry::Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline geometry::Rotation quat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw nlohmann::json::type_error::create(302, "expected [w, x, y, z]", &j);
  const double w = j.at(0).get<double>(), x = j.at(1).get<double>(), y = j.at(2).get<double>(),
               z = j.at(3).get<double>();
  if (w * w + x * x + y * y + z * z < 1e-12) throw nlohmann::json::other_error::create(501, "zero quaternion", &j);
  return geometry::Rotation::from_quaternion(w, x, y, z);
}

inline nlohmann::json quat_to_json(const geometry::Rotation& r) {
  const auto& q = r.quaternion();
  return nlohmann::json::array({q.w(), q.x(), q.y(), q.z()});
}

/// {"translation": [x,y,z], "rotation": [w,x,y,z]} or {"translation", "euler": [rx,ry,rz]}; both optional.
inline geometry::Pose pose_from_json(const nlohmann::json& j) {
  geometry::Pose p;
  if (j.contains("translation")) p.translation = vec3_from_json(j.at("translation"));
  if (j.contains("rotation")) {
    p.rotation = quat_from_json(j.at("rotation"));
  } else if (j.contains("euler")) {
    const geometry::Vec3 e = vec3_from_json(j.at("euler"));
    p.rotation = geometry::euler_to_rotation({e.x(), e.y(), e.z()});
  }
  return p;
}

inline nlohmann::json pose_to_json(const geometry::Pose& p) {
  return {{"translation", vec3_to_json(p.translation)}, {"rotation", quat_to_json(p.rotation)}};
}

}  // namespace flowact::detail
