#pragma once

#include "flowact/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowact::flow {

using geometry::CameraIntrinsics;
using geometry::Vec2;
using geometry::Vec3;

/// One tracked point at one timestep.
struct FlowSample {
  double u = 0.0;      ///< px
  double v = 0.0;      ///< px
  double depth = 0.0;  ///< m
  bool visible = false;

  bool operator==(const FlowSample&) const = default;
};

/// 3D optical flow as point tracks: T timesteps x N points of (u, v, depth, visibility),
/// stored row-major by timestep.
struct FlowSequence {
  std::size_t num_timesteps = 0;
  std::size_t num_points = 0;
  std::vector<FlowSample> samples;
  CameraIntrinsics intrinsics;
  std::string instruction;

  FlowSample& at(std::size_t t, std::size_t n) { return samples[t * num_points + n]; }
  const FlowSample& at(std::size_t t, std::size_t n) const { return samples[t * num_points + n]; }

  bool operator==(const FlowSequence&) const = default;
};

/// Allocates an all-invisible sequence of the given shape.
FlowSequence make_flow(std::size_t timesteps, std::size_t points, const CameraIntrinsics& k,
                       std::string instruction = {});

/// Throws SchemaError on shape/intrinsics problems and CorruptFlow on a bad sample.
void validate(const FlowSequence& flow);

/// Metric lift of a FlowSequence. Points are camera-frame unless transformed.
struct Flow3D {
  std::size_t num_timesteps = 0;
  std::size_t num_points = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> visible;
  CameraIntrinsics intrinsics;

  const Vec3& at(std::size_t t, std::size_t n) const { return points[t * num_points + n]; }
  bool is_visible(std::size_t t, std::size_t n) const { return visible[t * num_points + n] != 0; }
};

/// Unprojects each visible sample; invisible samples are carried as zero points.
/// Throws CorruptFlow with the (t, n) location of a visible sample with non-positive depth.
Flow3D lift_to_3d(const FlowSequence& flow);

/// Applies a rigid transform to every point (e.g. camera -> world).
Flow3D transformed(const Flow3D& flow, const geometry::Pose& pose);

/// Points of frame t, weight 1 where visible and 0 otherwise. Throws IndexOutOfRange.
geometry::PointSet frame_points(const Flow3D& flow, std::size_t t);

/// Independent Gaussian noise on every visible sample from a seeded generator.
/// Depths are clamped to > 1e-4 m; samples pushed outside the image become invisible.
FlowSequence inject_noise(const FlowSequence& flow, double sigma_px, double sigma_depth,
                          std::uint64_t seed);

// MFLW v1 binary format (little-endian):
//   "MFLW" u32 version=1 u32 T u32 N f64 fx fy cx cy u32 width u32 height
//   u32 instruction_len, UTF-8 bytes, then T*N records of (f32 u, f32 v, f32 depth, u8 vis).
// Samples are rounded to f32 on write.
inline constexpr std::uint32_t kFlowFormatVersion = 1;

std::vector<std::uint8_t> encode_flow(const FlowSequence& flow);
/// Throws ParseError (with byte offset) or SchemaError (with field name).
FlowSequence decode_flow(const std::vector<std::uint8_t>& bytes);

void write_flow(const FlowSequence& flow, const std::filesystem::path& path);
FlowSequence read_flow(const std::filesystem::path& path);

/// Lossy human-readable export of the same fields, for debugging.
std::string export_flow_text(const FlowSequence& flow);

}  // namespace flowact::flow
