#pragma once

#include "flowact/geometry.hpp"
#include "flowact/planner.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace flowact::sim {

using geometry::CameraIntrinsics;
using geometry::Pose;
using geometry::Vec3;

using Color = std::array<std::uint8_t, 3>;

struct ColoredCloud {
  std::vector<Vec3> points;
  std::vector<Color> colors;

  std::size_t size() const { return points.size(); }
  void append(const ColoredCloud& other);
};

ColoredCloud transformed(const ColoredCloud& cloud, const Pose& pose);

/// Surface primitive in the object frame. Boxes are centered on `pose`; cylinders have their
/// base at `pose` and extend along its +z.
struct Shape {
  enum class Kind { box, cylinder };
  Kind kind = Kind::box;
  Pose pose;
  Vec3 size = Vec3::Zero();  ///< box: edge lengths; cylinder: (radius, unused, height)
  Color color{200, 200, 200};
  bool open_top = false;
};

/// Deterministic grid sampling of the primitive's surface at roughly `spacing` meters.
ColoredCloud sample_shape(const Shape& shape, double spacing);

struct SceneObject {
  std::string name;
  std::vector<Shape> shapes;
  double spacing = 0.005;  ///< surface sampling pitch, m
  ColoredCloud cloud;      ///< object frame
  Pose pose;               ///< object -> world
  Pose initial_pose;       ///< pose before any motion
  std::map<std::string, Vec3> anchors;  ///< object frame points or directions
  std::vector<planner::GraspCandidate> grasps;  ///< poses in the object frame
  bool movable = true;
  std::string group;  ///< objects sharing a group are randomized together
  std::vector<Pose> history;  ///< poses visited during execution, starting at initial_pose

  /// Throws UnresolvedBinding.
  const Vec3& anchor(const std::string& name) const;
  Vec3 anchor_world(const std::string& name) const { return pose.apply(anchor(name)); }
  Vec3 direction_world(const std::string& name) const { return pose.rotation.apply(anchor(name)).normalized(); }
  ColoredCloud world_cloud() const { return transformed(cloud, pose); }
  /// Grasp candidates with world poses.
  std::vector<planner::GraspCandidate> world_grasps() const;
};

struct Camera {
  CameraIntrinsics intrinsics;
  Pose pose;  ///< camera -> world
};

/// Tolerances in meters and radians.
struct TaskSpec {
  std::string name;    ///< pour, insert, hang or drawer
  std::string object;  ///< manipulated object
  std::string target;  ///< cup, holder, rack; unused for drawer

  double pour_alignment = 0.02;
  double pour_tilt = 0.5235987755982988;   ///< 30 deg
  double spill_tilt = 0.3490658503988659;  ///< 20 deg
  double pour_height = 0.10;

  double insert_angle = 0.17453292519943295;  ///< 10 deg
  double holder_radius = 0.025;
  double holder_depth = 0.10;

  double hang_distance = 0.015;
  double hang_angle = 0.3490658503988659;  ///< 20 deg

  double drawer_extension = 0.10;
  double drawer_off_axis = 0.01;

  /// Throws InvalidArgument for non-positive tolerances, UnknownTask for an unknown name.
  void validate() const;
};

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"pour", "insert", "hang", "drawer"};
  return names;
}

struct Scene {
  std::string name;
  std::string instruction;
  std::vector<SceneObject> objects;
  Camera camera;
  planner::Box workspace{{0.2, -0.45, 0.0}, {0.8, 0.45, 0.55}};
  TaskSpec task;

  /// Throws UnknownObject.
  SceneObject& object(const std::string& name);
  const SceneObject& object(const std::string& name) const;
  std::size_t object_index(const std::string& name) const;
  /// Merged world cloud of every object except `exclude`.
  ColoredCloud world_cloud(const std::string& exclude = {}) const;
};

/// Scene file: JSON {"name", "instruction", "camera": {"width", "height", "fx", "fy", "cx", "cy",
/// "eye", "target"} or {"pose"}, "workspace": {"lo", "hi"}, "task": {"name", "object", "target",
/// tolerance overrides}, "objects": [{"name", "pose", "movable", "group", "spacing",
/// "shapes": [{"type": "box"|"cylinder", "pose", "size" | "radius"+"height", "color", "open_top"}],
/// "anchors": {name: [x,y,z]}, "grasps": [{"pose", "width", "score"}]}]}.
Scene parse_scene(const std::string& json_text);
Scene load_scene(const std::filesystem::path& path);

/// Uniform translation in [-translation_range, translation_range] (x, y) and yaw in
/// [-yaw_range, yaw_range] per movable object group, about the group's first object origin.
Scene randomize_scene(const Scene& scene, std::uint64_t seed, double translation_range, double yaw_range);

struct SuccessResult {
  bool success = false;
  std::vector<std::string> violations;  ///< one entry per failed clause
  std::map<std::string, double> metrics;

  std::string summary() const;
};

/// Task predicate on the scene's current object poses (and the manipulated object's history
/// for pour). Throws UnknownTask, UnresolvedBinding.
SuccessResult check_success(const Scene& scene, const TaskSpec& task);

/// Angle between the object's z axis and world z.
double tilt(const Pose& pose);

/// Z-buffered point splatting into depth, object-id and point-id buffers.
struct RenderBuffers {
  unsigned width = 0;
  unsigned height = 0;
  std::vector<float> depth;          ///< camera z, 0 where empty
  std::vector<std::int32_t> object;  ///< index into Scene::objects (or caller id), -1 where empty
  std::vector<std::int32_t> point;   ///< point index within the object cloud

  std::size_t index(unsigned u, unsigned v) const { return static_cast<std::size_t>(v) * width + u; }
};

RenderBuffers make_buffers(const CameraIntrinsics& k);
/// Splats world points; each splat is a square of half-width max(1, ceil(0.6 f spacing / z)) px.
void splat_cloud(RenderBuffers& buffers, const Camera& camera, const std::vector<Vec3>& world_points, double spacing,
                 std::int32_t object_id);
RenderBuffers render_scene(const Scene& scene);

/// Grid pixels (row-major, given stride) whose frame-0 render shows the named object.
std::vector<geometry::Vec2> object_initial_points(const Scene& scene, const std::string& object, unsigned stride);

}  // namespace flowact::sim
