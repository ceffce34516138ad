#pragma once

#include "flowact/flow.hpp"
#include "flowact/geometry.hpp"
#include "flowact/kinematics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowact::planner {

using geometry::EulerXYZ;
using geometry::PointSet;
using geometry::Pose;
using geometry::Rotation;
using geometry::Vec3;

struct GraspCandidate {
  Pose pose;  ///< gripper frame in world
  double width = 0.08;
  double score = 1.0;

  /// Throws InvalidArgument unless width > 0 and score in [0, 1].
  void validate() const;
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p, double slack = 1e-9) const;
  bool nonempty() const { return (hi.array() > lo.array()).all(); }
};

/// Box on the extrinsic XYZ Euler angles of the end-effector orientation. The default admits
/// exactly the rotations whose tool +z axis has a non-positive world-z component.
struct RotationBounds {
  EulerXYZ lo{1.5707963267948966, -1.5707963267948966, -3.141592653589793};
  EulerXYZ hi{4.71238898038469, 1.5707963267948966, 3.141592653589793};

  static RotationBounds lower_hemisphere() { return {}; }
  /// Wide enough that every rotation has a representation strictly inside the box.
  static RotationBounds unrestricted();

  /// Euler representation of r inside the box, trying both Euler branches and 2pi shifts.
  std::optional<EulerXYZ> represent(const Rotation& r, double slack = 1e-9) const;
  bool admits(const Rotation& r, double slack = 1e-9) const { return represent(r, slack).has_value(); }
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct PlanConfig {
  Box workspace{{0.2, -0.45, 0.0}, {0.8, 0.45, 0.55}};
  RotationBounds rotation;
  std::size_t num_keypoints = 16;
  int global_budget = 2000;
  int local_budget = 500;
  int warm_budget = 300;
  std::vector<Sphere> obstacles;
  double w_ik = 10.0;
  double w_col = 10.0;
  double collision_margin = 0.005;  ///< m added to each sphere radius inside the objective
  int continuation_rounds = 3;
  int ik_penalty_iters = 20;
  std::size_t plan_stride = 4;
  double approach_distance = 0.08;  ///< pre-grasp offset back along tool -z, m
  double max_keypoint_rms = 0.03;   ///< m
  bool release_at_end = true;
  double dt = 0.1;  ///< s between trajectory steps
  std::uint64_t seed = 0;

  /// Throws InvalidArgument.
  void validate() const;
};

enum class GripperCommand { open, close, hold };

const char* to_string(GripperCommand c);
/// Throws InvalidArgument for unknown names.
GripperCommand gripper_command_from_string(const std::string& s);

struct TrajectoryStep {
  double time = 0.0;
  Pose pose;
  GripperCommand gripper = GripperCommand::hold;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  /// Throws InfeasibleTrajectory if a pose leaves the workspace or rotation bounds, or
  /// InvalidArgument if timestamps do not increase.
  void validate(const PlanConfig& config) const;
};

/// Weighted sum of squared distances between motion * k_initial and k_target. Empty weights
/// fall back to k_target.weights, then to ones. Throws SizeMismatch.
double flow_cost(const Pose& motion, const PointSet& k_initial, const PointSet& k_target,
                 std::span<const double> weights = {});

/// Sum over points and spheres of max(0, r + margin - |motion * p - c|)^2.
double collision_penalty(const Pose& motion, const PointSet& k_initial, const std::vector<Sphere>& spheres,
                         double margin = 0.0);

/// Squared residual pose error of a plain DLS solve capped at `iterations`, seeded at `seed`.
double ik_penalty(const kinematics::JointChain& chain, const Pose& ee, const kinematics::JointState& seed,
                  int iterations);

/// Maps between end-effector poses and the normalized decision vector in [-1, 1]^6.
class PoseCodec {
 public:
  PoseCodec(const Box& workspace, const RotationBounds& rotation);

  Pose decode(const Eigen::Matrix<double, 6, 1>& x) const;
  /// Nearest admissible code: position clamped to the box, Euler angles clamped if the rotation is
  /// outside the bounds.
  Eigen::Matrix<double, 6, 1> encode(const Pose& pose) const;
  /// Coordinates whose range covers whole turns and therefore wraps around.
  std::vector<bool> periodic() const;

 private:
  Box workspace_;
  RotationBounds rotation_;
};

struct PoseSolution {
  Pose pose;    ///< end-effector pose
  Pose motion;  ///< object motion pose * current^-1
  double cost = 0.0;
  double flow = 0.0;
  double collision = 0.0;  ///< at the true sphere radii
  double ik = 0.0;
  int evaluations = 0;
  bool budget_exhausted = false;
};

/// Box-bounded minimization over [-1, 1]^n with a hard evaluation budget.
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool budget_exhausted = false;
};

/// Generalized simulated annealing (Tsallis visiting distribution, restarts) without local search.
OptimizeResult anneal(const Objective& f, const Eigen::VectorXd& x0, int budget, std::uint64_t seed);
/// Projected BFGS with central-difference gradients and Armijo backtracking. Coordinates flagged
/// in `periodic` wrap around instead of being clamped.
OptimizeResult projected_bfgs(const Objective& f, const Eigen::VectorXd& x0, int budget,
                              const std::vector<bool>& periodic = {});

/// Minimizes flow_cost + w_ik * ik_penalty + w_col * collision over end-effector poses; the
/// keypoints move rigidly with the end effector relative to `current`. Without `warm`, a global
/// annealing phase precedes local descent; with `warm`, only local descent from it runs. `chain`
/// enables the IK term.
PoseSolution solve_pose_at_t(const PointSet& k_initial, const PointSet& k_target, const Pose& current,
                             const PlanConfig& config, const std::optional<Pose>& warm = std::nullopt,
                             const kinematics::JointChain* chain = nullptr);

/// Rigid transform from frame 0 to frame T-1 over jointly visible points. Throws DegenerateInput.
Pose goal_transform_from_flow(const flow::Flow3D& flow3d);

/// Highest-scoring candidate (lowest index on ties) whose pose and goal * pose are both reachable.
/// Throws NoFeasibleGrasp, InvalidArgument on an empty list.
GraspCandidate select_grasp(const std::vector<GraspCandidate>& candidates, const Pose& goal,
                            const kinematics::JointChain& chain);
std::size_t select_grasp_index(const std::vector<GraspCandidate>& candidates, const Pose& goal,
                               const kinematics::JointChain& chain);

struct PlanResult {
  Trajectory trajectory;
  std::vector<std::size_t> keypoints;   ///< flow point indices
  std::vector<std::size_t> timesteps;   ///< flow frames that were solved
  std::vector<PoseSolution> solutions;  ///< one per solved frame
};

/// Approach + grasp, one hold step per planned frame (every plan_stride frames and the last),
/// then release. `flow3d` must be in the world frame. Throws DegenerateInput, InfeasibleTrajectory.
PlanResult plan_trajectory_detailed(const flow::Flow3D& flow3d, const GraspCandidate& grasp,
                                    const kinematics::JointChain& chain, const PlanConfig& config);
Trajectory plan_trajectory(const flow::Flow3D& flow3d, const GraspCandidate& grasp,
                           const kinematics::JointChain& chain, const PlanConfig& config);

// Trajectory file: JSON {"steps": [{"time", "translation": [x,y,z], "rotation": [w,x,y,z],
// "gripper": "open"|"close"|"hold"}]}.
std::string trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const std::string& text);
void write_trajectory(const Trajectory& trajectory, const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path);

}  // namespace flowact::planner
