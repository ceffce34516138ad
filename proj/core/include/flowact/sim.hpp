#pragma once

#include "flowact/extraction.hpp"
#include "flowact/flow.hpp"
#include "flowact/kinematics.hpp"
#include "flowact/oracle.hpp"
#include "flowact/planner.hpp"
#include "flowact/scene.hpp"
#include "flowact/verify.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace flowact::sim {

/// Kinematic replay. The end effector follows each step (through IK when `chain` is given, so the
/// realized pose is FK of the solved joints); on a close command the attached object is bound
/// rigidly to it until the next open. Every object pose the attached object takes is appended to
/// its history. Throws UnknownObject.
Scene execute(const Scene& scene, const planner::Trajectory& trajectory, const std::string& attached_object,
              const kinematics::JointChain* chain = nullptr);

/// Surface samples of a parallel-jaw gripper in the grasp frame (tool +z toward the object).
ColoredCloud gripper_cloud(double width = 0.04);

struct EpisodeOptions {
  std::size_t horizon = 32;
  unsigned track_stride = 4;  ///< px between tracked pixels in frame 0
  bool randomize = true;
  double translation_range = 0.05;          ///< m
  double yaw_range = 0.5235987755982988;    ///< rad
  double occlusion_tolerance = 0.015;       ///< m behind the z-buffer still counted visible
  bool render_gripper = true;
};

/// Synthetic extraction input with labels.
struct EpisodeRecord {
  extraction::TrackSet tracks;
  extraction::DepthMapStack depth;
  extraction::Mask gripper;            ///< frame-0 gripper silhouette
  extraction::BBox object_bbox;        ///< frame-0 silhouette of the task object
  std::vector<std::uint8_t> moving;    ///< per track: 1 if on the task object
  geometry::CameraIntrinsics intrinsics;
  std::string instruction;
  Scene scene;                         ///< the (randomized) initial scene
};

struct Episode {
  EpisodeRecord record;
  flow::FlowSequence ground_truth;  ///< every track, exact depth
};

/// Moves the task object along `script`, renders depth per frame and tracks a frame-0 pixel grid.
/// Track visibility comes from the z-buffer; the depth maps hold each visible track's exact depth
/// at its rounded pixel. Deterministic per seed. Throws UnknownTask if the script's task differs
/// from the scene's.
Episode synthesize_episode(const Scene& scene, const oracle::MotionScript& script, std::uint64_t seed,
                           const EpisodeOptions& options = {});

struct EvalConfig {
  std::size_t n_trials = 10;
  double translation_range = 0.05;
  double yaw_range = 0.5235987755982988;
  double sigma_px = 0.0;
  double sigma_depth = 0.0;
  double corruption_rate = 0.0;        ///< fraction of trials whose attempt 0 is corrupted
  double corruption_displacement = 0.10;
  int max_retries = 2;
  unsigned point_stride = 8;           ///< px grid for the generator's initial points
  std::size_t horizon = 32;
  unsigned splat_radius = 2;
  planner::PlanConfig plan;            ///< workspace is replaced by the scene's
  std::uint64_t seed = 0;
  std::string verifier_endpoint;       ///< empty: geometric verifier

  /// Throws InvalidArgument.
  void validate() const;
};

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool success = false;
  bool corrupted = false;
  int attempts = 0;
  std::string error;                    ///< error class on failure to plan, else empty
  std::vector<std::string> diagnostics;
  std::vector<verify::Verdict> verdicts;
  std::map<std::string, double> metrics;
};

struct EvalReport {
  std::string task;
  std::string scene;
  std::size_t n_trials = 0;
  std::size_t successes = 0;
  std::vector<TrialRecord> trials;
  std::string config_digest;

  double rate() const { return n_trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(n_trials); }
};

/// Per trial i (seed + i): randomize the scene, run closed_loop_plan with the scripted oracle
/// (noisy and corrupted as configured), execute and check success.
EvalReport evaluate(const Scene& scene, const std::map<std::string, oracle::MotionScript>& scripts,
                    const kinematics::JointChain& chain, const EvalConfig& config);

std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace flowact::sim
