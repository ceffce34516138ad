#include "flowact/kinematics.hpp"

#include "binary_io.hpp"
#include "flowact/errors.hpp"
#include "json_util.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace flowact::kinematics {

using geometry::Rotation;

void JointChain::validate() const {
  if (joints.size() < 5 || joints.size() > 8) {
    throw InvalidArgument("chain must have between 5 and 8 joints, got " + std::to_string(joints.size()));
  }
  for (const Joint& j : joints) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw InvalidArgument("joint axis must be unit-norm: " + j.name);
    if (j.lower > j.upper) throw InvalidArgument("joint limits inverted: " + j.name);
  }
}

double JointChain::max_reach() const {
  double reach = tool.translation.norm();
  for (std::size_t i = 1; i < joints.size(); ++i) reach += joints[i].parent.translation.norm();
  return reach;
}

Eigen::VectorXd JointChain::neutral() const {
  Eigen::VectorXd q(joints.size());
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const Joint& j = joints[i];
    q[static_cast<Eigen::Index>(i)] = (j.lower <= 0.0 && j.upper >= 0.0) ? 0.0 : 0.5 * (j.lower + j.upper);
  }
  return q;
}

Eigen::VectorXd JointChain::clamp(const Eigen::VectorXd& q) const {
  Eigen::VectorXd out = q;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out[k] = std::clamp(q[k], joints[i].lower, joints[i].upper);
  }
  return out;
}

bool JointChain::within_limits(const Eigen::VectorXd& q, double slack) const {
  if (static_cast<std::size_t>(q.size()) != joints.size()) return false;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const double v = q[static_cast<Eigen::Index>(i)];
    if (v < joints[i].lower - slack || v > joints[i].upper + slack) return false;
  }
  return true;
}

namespace {

void check_size(const JointChain& chain, const JointState& q) {
  if (static_cast<std::size_t>(q.size()) != chain.size()) {
    throw SizeMismatch("joint state has " + std::to_string(q.size()) + " entries, chain has " +
                       std::to_string(chain.size()) + " joints");
  }
}

// World frames of each joint after its own rotation, plus the tool frame.
struct ChainFrames {
  std::vector<Pose> joint;  // frame in which joint i's axis is expressed (before its rotation)
  Pose tool;
};

ChainFrames chain_frames(const JointChain& chain, const JointState& q) {
  ChainFrames f;
  f.joint.reserve(chain.size());
  Pose current = chain.base;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const Joint& j = chain.joints[i];
    current = current * j.parent;
    f.joint.push_back(current);
    current = current * Pose{Vec3::Zero(), Rotation::from_axis_angle(j.axis, q[static_cast<Eigen::Index>(i)])};
  }
  f.tool = current * chain.tool;
  return f;
}

}  // namespace

Pose forward_kinematics(const JointChain& chain, const JointState& q) {
  check_size(chain, q);
  return chain_frames(chain, q).tool;
}

Jacobian jacobian(const JointChain& chain, const JointState& q) {
  check_size(chain, q);
  const ChainFrames f = chain_frames(chain, q);
  Jacobian jac(6, static_cast<Eigen::Index>(chain.size()));
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const Vec3 axis = f.joint[i].rotation.apply(chain.joints[i].axis);
    const Vec3 origin = f.joint[i].translation;
    const auto c = static_cast<Eigen::Index>(i);
    jac.block<3, 1>(0, c) = axis.cross(f.tool.translation - origin);
    jac.block<3, 1>(3, c) = axis;
  }
  return jac;
}

Eigen::Matrix<double, 6, 1> pose_error(const Pose& target, const Pose& current) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = target.translation - current.translation;
  e.tail<3>() = (target.rotation * current.rotation.inverse()).rotation_vector();
  return e;
}

namespace {

constexpr int kStallWindow = 6;
constexpr double kStallRatio = 0.9;
constexpr double kKick = 2.5;

double error_norm(const Eigen::Matrix<double, 6, 1>& e) { return e.squaredNorm(); }

// Task-space error with each part clamped so one linearized step stays local.
Eigen::Matrix<double, 6, 1> clamped_error(const Eigen::Matrix<double, 6, 1>& e) {
  constexpr double kMaxPos = 0.1;
  constexpr double kMaxRot = 0.5;
  Eigen::Matrix<double, 6, 1> out = e;
  const double p = e.head<3>().norm(), r = e.tail<3>().norm();
  if (p > kMaxPos) out.head<3>() *= kMaxPos / p;
  if (r > kMaxRot) out.tail<3>() *= kMaxRot / r;
  return out;
}

}  // namespace

IkResult solve_ik(const JointChain& chain, const Pose& target, const JointState& q0, const IkOptions& options) {
  check_size(chain, q0);
  if (!(options.tol_pos > 0.0) || !(options.tol_rot > 0.0)) throw InvalidArgument("IK tolerances must be positive");

  IkResult result;
  result.q = chain.clamp(q0);

  const Pose first = chain.base * chain.joints.front().parent;
  const bool beyond_reach = (target.translation - first.translation).norm() > chain.max_reach();

  const double lambda2 = options.damping * options.damping;
  const Eigen::Index n = static_cast<Eigen::Index>(chain.size());
  JointState q = result.q;
  Eigen::Matrix<double, 6, 1> e = pose_error(target, forward_kinematics(chain, q));
  double best = std::numeric_limits<double>::infinity();
  double checkpoint = error_norm(e);
  std::uint64_t kick_state = 0x9E3779B97F4A7C15ull;
  for (int iter = 0;; ++iter) {
    const double err = error_norm(e);
    if (err < best || !options.robust) {
      best = err;
      result.q = q;
      result.position_error = e.head<3>().norm();
      result.rotation_error = e.tail<3>().norm();
    }
    result.iterations = iter;
    if (e.head<3>().norm() < options.tol_pos && e.tail<3>().norm() < options.tol_rot) {
      result.converged = !beyond_reach;
      return result;
    }
    if (beyond_reach || iter >= options.max_iters) break;

    // Stalled (singular stretch or pinned on a limit): deterministic kick away from the current state.
    if (options.robust && iter > 0 && iter % kStallWindow == 0) {
      if (err > kStallRatio * checkpoint) {
        for (Eigen::Index k = 0; k < n; ++k) {
          kick_state = kick_state * 6364136223846793005ull + 1442695040888963407ull;
          const double unit = static_cast<double>(kick_state >> 11) * 0x1.0p-53;
          q[k] += kKick * (2.0 * unit - 1.0);
        }
        q = chain.clamp(q);
        e = pose_error(target, forward_kinematics(chain, q));
        checkpoint = std::numeric_limits<double>::infinity();
        continue;
      }
      checkpoint = err;
    }

    // Joints resting on a limit and pushed outward are frozen for this step.
    Jacobian j = jacobian(chain, q);
    const Eigen::Matrix<double, 6, 1> task = clamped_error(e);
    Eigen::VectorXd dq;
    for (int pass = 0; pass < (options.robust ? 2 : 1); ++pass) {
      const Eigen::Matrix<double, 6, 6> a = j * j.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
      dq = j.transpose() * a.ldlt().solve(task);
      bool frozen = false;
      for (Eigen::Index k = 0; k < n; ++k) {
        const Joint& jt = chain.joints[static_cast<std::size_t>(k)];
        const bool at_lo = q[k] <= jt.lower && dq[k] < 0.0;
        const bool at_hi = q[k] >= jt.upper && dq[k] > 0.0;
        if ((at_lo || at_hi) && !j.col(k).isZero()) {
          j.col(k).setZero();
          frozen = true;
        }
      }
      if (!frozen || !options.robust) break;
    }
    const double peak = dq.cwiseAbs().maxCoeff();
    if (peak > options.max_step) dq *= options.max_step / peak;

    // Backtrack until the pose error decreases; take the shortest step otherwise.
    const double current = error_norm(e);
    JointState next = chain.clamp(q + dq);
    Eigen::Matrix<double, 6, 1> next_e = pose_error(target, forward_kinematics(chain, next));
    for (int halving = 0; options.robust && halving < 4 && error_norm(next_e) > current; ++halving) {
      dq *= 0.5;
      next = chain.clamp(q + dq);
      next_e = pose_error(target, forward_kinematics(chain, next));
    }
    q = next;
    e = next_e;
  }
  result.converged = false;
  return result;
}

std::vector<JointState> reachability_seeds(const JointChain& chain) {
  const JointState neutral = chain.neutral();
  std::vector<JointState> seeds{neutral};
  const double d = 0.6;
  const std::array<std::array<double, 3>, 4> patterns{{{d, -d, d}, {-d, d, -d}, {d, d, -d}, {-d, -d, d}}};
  for (const auto& pattern : patterns) {
    JointState q = neutral;
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += pattern[static_cast<std::size_t>(i % 3)];
    seeds.push_back(chain.clamp(q));
  }
  return seeds;
}

IkResult find_ik(const JointChain& chain, const Pose& target, const IkOptions& options) {
  IkResult best;
  bool have = false;
  for (const JointState& seed : reachability_seeds(chain)) {
    IkResult r = solve_ik(chain, target, seed, options);
    if (r.converged) return r;
    if (!have || r.position_error + r.rotation_error < best.position_error + best.rotation_error) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

bool is_reachable(const JointChain& chain, const Pose& target, const IkOptions& options) {
  return find_ik(chain, target, options).converged;
}

JointChain parse_chain(const std::string& json_text) {
  const nlohmann::json j = detail::parse_json(json_text, "chain");
  JointChain chain;
  try {
    chain.name = j.value("name", std::string("chain"));
    if (j.contains("base")) chain.base = detail::pose_from_json(j.at("base"));
    if (j.contains("tool")) chain.tool = detail::pose_from_json(j.at("tool"));
    for (const auto& jj : j.at("joints")) {
      Joint joint;
      joint.name = jj.value("name", std::string("joint") + std::to_string(chain.joints.size()));
      if (jj.contains("parent")) joint.parent = detail::pose_from_json(jj.at("parent"));
      joint.axis = detail::vec3_from_json(jj.at("axis"));
      const auto& lim = jj.at("limits");
      joint.lower = lim.at(0).get<double>();
      joint.upper = lim.at(1).get<double>();
      chain.joints.push_back(std::move(joint));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain description: ") + e.what());
  }
  try {
    chain.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("chain description: ") + e.what());
  }
  return chain;
}

JointChain load_chain(const std::filesystem::path& path) { return parse_chain(detail::read_file_text(path)); }

}  // namespace flowact::kinematics
