#pragma once

#include "flowact/flow.hpp"
#include "flowact/geometry.hpp"
#include "flowact/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowact::oracle {

using geometry::Pose;
using geometry::Rotation;
using geometry::Vec2;
using geometry::Vec3;

/// Object pose keyframe. `start` is the initial pose; `relative` offsets it (translation in
/// `frame`, rotation post-multiplied in the object frame); `anchor` additionally places the
/// object anchor `anchor` at the target's `target_anchor` plus the translation.
struct Waypoint {
  enum class Mode { start, relative, anchor };
  enum class Frame { world, object, target };

  double time = 0.0;
  Mode mode = Mode::start;
  Vec3 translation = Vec3::Zero();
  Frame frame = Frame::world;
  Rotation rotation;
  std::string anchor;
  std::string target_anchor;

  /// Optional shortest-arc alignment of the object direction anchor `align_axis` with either a
  /// world direction or the target's direction anchor `align_target_axis`.
  std::string align_axis;
  std::string align_target_axis;
  std::optional<Vec3> align_direction;
};

struct MotionScript {
  std::string task;
  std::vector<Waypoint> waypoints;

  /// Throws InvalidArgument unless there are >= 2 waypoints with strictly increasing times.
  void validate() const;
};

/// Script file: JSON {"task", "waypoints": [{"time", "mode": "start"|"relative"|"anchor",
/// "translation": [x,y,z], "frame": "world"|"object"|"target", "rotation": [w,x,y,z] or "euler",
/// "anchor", "target_anchor", "align": {"axis", "target_axis" | "direction": [x,y,z]}}]}.
/// Anchors refer to the scene task's object and target bindings.
MotionScript parse_script(const std::string& json_text);
MotionScript load_script(const std::filesystem::path& path);
/// Every *.json script in `dir`, keyed by task.
std::map<std::string, MotionScript> load_script_library(const std::filesystem::path& dir);

/// World poses of the task object at each waypoint. Throws UnresolvedBinding.
std::vector<Pose> resolve_waypoints(const MotionScript& script, const sim::Scene& scene);

/// Object world poses at `horizon` evenly spaced times over the script, screw-interpolated
/// between waypoints. Frame 0 is the initial pose.
std::vector<Pose> object_trajectory(const MotionScript& script, const sim::Scene& scene, std::size_t horizon);

/// Task name for an instruction by keyword. Throws UnknownTask.
std::string task_for_instruction(const std::string& instruction);

struct GeneratorRequest {
  const sim::Scene* scene = nullptr;
  std::string instruction;
  std::vector<Vec2> initial_points;
  std::uint64_t seed = 0;
  int attempt = 0;

  /// Throws InvalidArgument.
  void validate() const;
};

class FlowGenerator {
 public:
  virtual ~FlowGenerator() = default;
  virtual flow::FlowSequence generate(const GeneratorRequest& request) const = 0;
  /// generate() with seed = request.seed + attempt and the attempt index recorded.
  flow::FlowSequence resample(const GeneratorRequest& request, int attempt) const;
};

/// Moves the initial points that land on the task object along the task's script; the rest stay.
class ScriptedGenerator : public FlowGenerator {
 public:
  explicit ScriptedGenerator(std::map<std::string, MotionScript> scripts, std::size_t horizon = 32);
  flow::FlowSequence generate(const GeneratorRequest& request) const override;
  const MotionScript& script(const std::string& task) const;

 private:
  std::map<std::string, MotionScript> scripts_;
  std::size_t horizon_;
};

class ReplayGenerator : public FlowGenerator {
 public:
  explicit ReplayGenerator(std::filesystem::path path);
  flow::FlowSequence generate(const GeneratorRequest& request) const override;

 private:
  std::filesystem::path path_;
};

class NoisyGenerator : public FlowGenerator {
 public:
  NoisyGenerator(std::shared_ptr<const FlowGenerator> inner, double sigma_px, double sigma_depth);
  flow::FlowSequence generate(const GeneratorRequest& request) const override;

 private:
  std::shared_ptr<const FlowGenerator> inner_;
  double sigma_px_;
  double sigma_depth_;
};

}  // namespace flowact::oracle
