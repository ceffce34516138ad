#pragma once

#include "flowact/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace flowact::kinematics {

using geometry::Pose;
using geometry::Vec3;

/// Revolute joint: fixed transform from the previous link frame, then rotation about `axis`.
struct Joint {
  std::string name;
  Pose parent;
  Vec3 axis = Vec3::UnitZ();
  double lower = -3.14159;
  double upper = 3.14159;
};

struct JointChain {
  std::string name;
  Pose base;  ///< chain base in world
  std::vector<Joint> joints;
  Pose tool;  ///< tool frame relative to the last joint frame

  std::size_t size() const { return joints.size(); }
  /// Throws InvalidArgument on non-unit axes, lower > upper, or a joint count outside [5, 8].
  void validate() const;
  /// Upper bound on the distance from the first joint origin to the tool origin.
  double max_reach() const;
  /// Midpoint of the limits, except joints spanning zero which start at zero.
  Eigen::VectorXd neutral() const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& q) const;
  bool within_limits(const Eigen::VectorXd& q, double slack = 1e-12) const;
};

using JointState = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// World pose of the tool frame. Throws SizeMismatch.
Pose forward_kinematics(const JointChain& chain, const JointState& q);

/// Geometric Jacobian: rows 0-2 linear velocity of the tool origin, rows 3-5 angular velocity.
Jacobian jacobian(const JointChain& chain, const JointState& q);

/// Position error (target - current) and rotation-vector error log(R_target R_current^T).
Eigen::Matrix<double, 6, 1> pose_error(const Pose& target, const Pose& current);

struct IkOptions {
  double tol_pos = 1e-3;  ///< m
  double tol_rot = 1e-2;  ///< rad
  int max_iters = 200;
  double damping = 0.05;
  double max_step = 0.2;  ///< rad, infinity-norm clamp on each update
  /// Backtracking, limit freezing and stall kicks. Off gives the plain update, smooth in the target.
  bool robust = true;
};

struct IkResult {
  JointState q;
  bool converged = false;
  int iterations = 0;
  double position_error = 0.0;
  double rotation_error = 0.0;

  bool reachable() const { return converged; }
};

/// Damped least squares: q <- clamp(q + J^T (J J^T + lambda^2 I)^-1 e). The result always
/// respects the joint limits; `converged` is false (Unreachable) when the tolerances are not met
/// within max_iters or the target lies beyond the chain's reach.
IkResult solve_ik(const JointChain& chain, const Pose& target, const JointState& q0,
                  const IkOptions& options = {});

/// Seeds tried by is_reachable: neutral plus four fixed perturbations.
std::vector<JointState> reachability_seeds(const JointChain& chain);

/// True if solve_ik converges from any of reachability_seeds().
bool is_reachable(const JointChain& chain, const Pose& target, const IkOptions& options = {});
/// Same, returning the first converged solution.
IkResult find_ik(const JointChain& chain, const Pose& target, const IkOptions& options = {});

/// JSON chain description: {"name", "base", "tool", "joints": [{"name", "parent", "axis",
/// "limits": [lo, hi]}]} with poses as {"translation": [x,y,z], "rotation": [w,x,y,z]}.
JointChain load_chain(const std::filesystem::path& path);
JointChain parse_chain(const std::string& json_text);

}  // namespace flowact::kinematics
