#pragma once

#include "flowact/flow.hpp"
#include "flowact/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace flowact::extraction {

using geometry::Vec2;

struct TrackPoint {
  double u = 0.0;
  double v = 0.0;
  bool visible = false;

  bool operator==(const TrackPoint&) const = default;
};

/// M tracked points over T frames, stored point-major: samples[m * T + t].
struct TrackSet {
  std::size_t num_points = 0;
  std::size_t num_frames = 0;
  unsigned width = 0;
  unsigned height = 0;
  std::vector<TrackPoint> samples;

  TrackPoint& at(std::size_t m, std::size_t t) { return samples[m * num_frames + t]; }
  const TrackPoint& at(std::size_t m, std::size_t t) const { return samples[m * num_frames + t]; }

  /// Throws InvalidArgument if T < 2, sizes disagree, or a visible sample is out of bounds.
  void validate() const;
  bool operator==(const TrackSet&) const = default;
};

/// Binary image mask, row-major.
struct Mask {
  unsigned width = 0;
  unsigned height = 0;
  std::vector<std::uint8_t> data;

  static Mask filled(unsigned width, unsigned height, bool value);
  bool at(long u, long v) const {
    return u >= 0 && v >= 0 && u < static_cast<long>(width) && v < static_cast<long>(height) &&
           data[static_cast<std::size_t>(v) * width + static_cast<std::size_t>(u)] != 0;
  }
  void set(unsigned u, unsigned v, bool value) { data[static_cast<std::size_t>(v) * width + u] = value ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

/// Axis-aligned box in pixels, inclusive bounds.
struct BBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  bool contains(double u, double v) const { return u >= u_min && u <= u_max && v >= v_min && v <= v_max; }
  double area() const { return (u_max - u_min) * (v_max - v_min); }
  bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);

/// Row-major depth grid in meters; non-positive values are invalid pixels.
struct DepthMap {
  unsigned width = 0;
  unsigned height = 0;
  std::vector<float> data;

  float at(unsigned u, unsigned v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  float& at(unsigned u, unsigned v) { return data[static_cast<std::size_t>(v) * width + u]; }
  bool operator==(const DepthMap&) const = default;
};

using DepthMapStack = std::vector<DepthMap>;

using InitialPoints = std::vector<Vec2>;

/// Regular grid at `stride` px in row-major order, minus masked pixels.
/// Throws InvalidArgument for stride < 1 and EmptyResult if nothing survives.
InitialPoints seed_grid_points(unsigned width, unsigned height, unsigned stride, const Mask& exclude);

/// Indices of tracks whose maximum displacement from their first visible position exceeds
/// threshold_frac times the image diagonal. Only visible frames count.
std::vector<std::size_t> detect_moving_points(const TrackSet& tracks, double threshold_frac);

/// Extent of the points expanded by `margin`, clipped to [0, width-1] x [0, height-1].
/// Throws EmptyInput on an empty list.
BBox max_bounding_box(const std::vector<Vec2>& points, double margin, unsigned width, unsigned height);

/// Erosion with a (2r+1)x(2r+1) square; pixels outside the image count as background.
Mask erode_mask(const Mask& mask, unsigned radius);

/// Rasterizes a box into a mask of the given size.
Mask box_mask(const BBox& box, unsigned width, unsigned height);

/// 2D similarity z_t = a z_0 + b, with a = s e^{i theta}, stored as complex parts.
struct Similarity2D {
  double a_re = 1.0;
  double a_im = 0.0;
  double b_u = 0.0;
  double b_v = 0.0;

  Vec2 apply(const Vec2& p) const;
  Vec2 apply_inverse(const Vec2& p) const;
};

/// Least-squares similarity taking frame-0 background positions to frame-t positions, per frame.
/// Throws DegenerateBackground if fewer than 3 visible background points or they are collinear.
std::vector<Similarity2D> fit_camera_motion(const TrackSet& tracks, const std::vector<std::size_t>& background);

/// Applies the inverse of each frame's fitted similarity to every track; samples mapped outside
/// the image become invisible. Throws DegenerateBackground as fit_camera_motion does.
TrackSet remove_camera_motion(const TrackSet& tracks, const std::vector<std::size_t>& background);

struct ExtractionConfig {
  unsigned grid_stride = 8;
  double threshold_frac = 0.05;
  double bbox_margin = 4.0;
  unsigned erosion_radius = 2;
  bool remove_camera_motion = false;
  /// Seeds are matched to tracks whose t=0 pixel lies within this distance.
  double seed_match_px = 0.5;
};

struct ExtractionResult {
  flow::FlowSequence flow;
  BBox bbox;
  /// Track indices (into the input TrackSet) of the emitted flow points, in flow order.
  std::vector<std::size_t> track_indices;
};

/// Full moving-object pipeline: seed -> (camera-motion removal) -> detect -> bbox ->
/// re-select inside the eroded bbox -> nearest-pixel depth lookup -> FlowSequence.
/// Throws NoMovingObject if fewer than 3 moving points survive.
ExtractionResult extract_episode(const TrackSet& tracks, const DepthMapStack& depth, const Mask& gripper,
                                 const geometry::CameraIntrinsics& intrinsics, const ExtractionConfig& config,
                                 const std::string& instruction = {});

// File formats.
//   Tracks: JSON {"M", "T", "width", "height", "tracks": [[[u, v, visible], ...], ...]}
//   DMAP v1: "DMAP" u32 version=1 u32 width u32 height, width*height f32 LE row-major meters
//   Mask: portable bitmap P4
inline constexpr std::uint32_t kDepthFormatVersion = 1;

void write_tracks(const TrackSet& tracks, const std::filesystem::path& path);
TrackSet read_tracks(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_depth_map(const DepthMap& map);
/// Throws ParseError or SchemaError.
DepthMap decode_depth_map(const std::vector<std::uint8_t>& bytes);
void write_depth_map(const DepthMap& map, const std::filesystem::path& path);
DepthMap read_depth_map(const std::filesystem::path& path);

/// Writes frame_000.dmap, frame_001.dmap, ... into `dir` (created if needed).
void write_depth_stack(const DepthMapStack& stack, const std::filesystem::path& dir);
/// Reads every *.dmap in `dir` in lexicographic order.
DepthMapStack read_depth_stack(const std::filesystem::path& dir);

void write_mask(const Mask& mask, const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);

}  // namespace flowact::extraction
