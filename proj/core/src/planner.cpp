#include "flowact/planner.hpp"

#include "binary_io.hpp"
#include "flowact/errors.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace flowact::planner {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Vec6 = Eigen::Matrix<double, 6, 1>;

bool in_range(double v, double lo, double hi, double slack) { return v >= lo - slack && v <= hi + slack; }

}  // namespace

void GraspCandidate::validate() const {
  if (!(width > 0.0)) throw InvalidArgument("grasp width must be positive");
  if (!(score >= 0.0 && score <= 1.0)) throw InvalidArgument("grasp score must lie in [0, 1]");
}

bool Box::contains(const Vec3& p, double slack) const {
  return (p.array() >= lo.array() - slack).all() && (p.array() <= hi.array() + slack).all();
}

RotationBounds RotationBounds::unrestricted() {
  return {{-kTwoPi, -kPi, -kTwoPi}, {kTwoPi, kPi, kTwoPi}};
}

std::optional<EulerXYZ> RotationBounds::represent(const Rotation& r, double slack) const {
  const EulerXYZ e = geometry::rotation_to_euler(r);
  // The other Euler branch describes the same rotation.
  const EulerXYZ alt{e.rx + kPi, kPi - e.ry, e.rz + kPi};
  const double alt_ry = alt.ry > kPi ? alt.ry - kTwoPi : alt.ry;
  for (const EulerXYZ& base : {e, EulerXYZ{alt.rx, alt_ry, alt.rz}}) {
    if (!in_range(base.ry, lo.ry, hi.ry, slack)) continue;
    for (int kx = -2; kx <= 2; ++kx) {
      const double rx = base.rx + kx * kTwoPi;
      if (!in_range(rx, lo.rx, hi.rx, slack)) continue;
      for (int kz = -2; kz <= 2; ++kz) {
        const double rz = base.rz + kz * kTwoPi;
        if (in_range(rz, lo.rz, hi.rz, slack)) return EulerXYZ{rx, base.ry, rz};
      }
    }
  }
  return std::nullopt;
}

void PlanConfig::validate() const {
  if (!workspace.nonempty()) throw InvalidArgument("workspace bounds are empty");
  if (!(rotation.hi.rx > rotation.lo.rx && rotation.hi.ry > rotation.lo.ry && rotation.hi.rz > rotation.lo.rz)) {
    throw InvalidArgument("rotation bounds are empty");
  }
  if (num_keypoints < 3) throw InvalidArgument("at least 3 keypoints required");
  if (global_budget <= 0 || local_budget <= 0 || warm_budget <= 0) {
    throw InvalidArgument("evaluation budgets must be positive");
  }
  if (w_ik < 0.0 || w_col < 0.0) throw InvalidArgument("penalty weights must be non-negative");
  if (plan_stride < 1) throw InvalidArgument("planning stride must be at least 1");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  for (const Sphere& s : obstacles) {
    if (!(s.radius > 0.0)) throw InvalidArgument("obstacle radius must be positive");
  }
}

const char* to_string(GripperCommand c) {
  switch (c) {
    case GripperCommand::open:
      return "open";
    case GripperCommand::close:
      return "close";
    case GripperCommand::hold:
      return "hold";
  }
  return "hold";
}

GripperCommand gripper_command_from_string(const std::string& s) {
  if (s == "open") return GripperCommand::open;
  if (s == "close") return GripperCommand::close;
  if (s == "hold") return GripperCommand::hold;
  throw InvalidArgument("unknown gripper command: " + s);
}

void Trajectory::validate(const PlanConfig& config) const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const TrajectoryStep& s = steps[i];
    if (i > 0 && !(s.time > steps[i - 1].time)) throw InvalidArgument("trajectory timestamps must increase");
    if (!config.workspace.contains(s.pose.translation, 1e-6)) {
      throw InfeasibleTrajectory("step " + std::to_string(i) + " leaves the workspace bounds");
    }
    if (!config.rotation.admits(s.pose.rotation, 1e-6)) {
      throw InfeasibleTrajectory("step " + std::to_string(i) + " violates the rotation restriction");
    }
  }
}

double flow_cost(const Pose& motion, const PointSet& k_initial, const PointSet& k_target,
                 std::span<const double> weights) {
  const std::size_t n = k_initial.size();
  if (k_target.size() != n) throw SizeMismatch("keypoint sets differ in size");
  if (weights.empty() && k_target.weighted()) weights = k_target.weights;
  if (!weights.empty() && weights.size() != n) throw SizeMismatch("weight count does not match keypoints");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    sum += w * (motion.apply(k_initial.points[i]) - k_target.points[i]).squaredNorm();
  }
  return sum;
}

double collision_penalty(const Pose& motion, const PointSet& k_initial, const std::vector<Sphere>& spheres,
                         double margin) {
  double sum = 0.0;
  for (const Vec3& p : k_initial.points) {
    const Vec3 q = motion.apply(p);
    for (const Sphere& s : spheres) {
      const double gap = s.radius + margin - (q - s.center).norm();
      if (gap > 0.0) sum += gap * gap;
    }
  }
  return sum;
}

double ik_penalty(const kinematics::JointChain& chain, const Pose& ee, const kinematics::JointState& seed,
                  int iterations) {
  kinematics::IkOptions opt;
  opt.tol_pos = 1e-6;
  opt.tol_rot = 1e-6;
  opt.max_iters = iterations;
  opt.robust = false;
  const kinematics::IkResult r = kinematics::solve_ik(chain, ee, seed, opt);
  return r.position_error * r.position_error + r.rotation_error * r.rotation_error;
}

PoseCodec::PoseCodec(const Box& workspace, const RotationBounds& rotation)
    : workspace_(workspace), rotation_(rotation) {}

Pose PoseCodec::decode(const Vec6& x) const {
  auto lerp = [](double lo, double hi, double u) { return lo + 0.5 * (u + 1.0) * (hi - lo); };
  Pose p;
  for (int i = 0; i < 3; ++i) p.translation[i] = lerp(workspace_.lo[i], workspace_.hi[i], x[i]);
  const EulerXYZ e{lerp(rotation_.lo.rx, rotation_.hi.rx, x[3]), lerp(rotation_.lo.ry, rotation_.hi.ry, x[4]),
                   lerp(rotation_.lo.rz, rotation_.hi.rz, x[5])};
  p.rotation = geometry::euler_to_rotation(e);
  return p;
}

std::vector<bool> PoseCodec::periodic() const {
  // An angle range spanning whole turns wraps onto itself.
  auto whole_turns = [](double lo, double hi) {
    const double turns = (hi - lo) / kTwoPi;
    return turns > 0.5 && std::abs(turns - std::round(turns)) < 1e-9;
  };
  return {false,
          false,
          false,
          whole_turns(rotation_.lo.rx, rotation_.hi.rx),
          whole_turns(rotation_.lo.ry, rotation_.hi.ry),
          whole_turns(rotation_.lo.rz, rotation_.hi.rz)};
}

Vec6 PoseCodec::encode(const Pose& pose) const {
  auto unlerp = [](double lo, double hi, double v) { return std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0); };
  Vec6 x;
  for (int i = 0; i < 3; ++i) x[i] = unlerp(workspace_.lo[i], workspace_.hi[i], pose.translation[i]);
  EulerXYZ e;
  if (auto rep = rotation_.represent(pose.rotation)) {
    e = *rep;
  } else {
    // Outside the bounds: shift the principal angles toward the box before clamping.
    e = geometry::rotation_to_euler(pose.rotation);
    auto near_box = [](double v, double lo, double hi) {
      const double mid = 0.5 * (lo + hi);
      while (v < mid - kPi) v += kTwoPi;
      while (v > mid + kPi) v -= kTwoPi;
      return v;
    };
    e.rx = near_box(e.rx, rotation_.lo.rx, rotation_.hi.rx);
    e.rz = near_box(e.rz, rotation_.lo.rz, rotation_.hi.rz);
  }
  x[3] = unlerp(rotation_.lo.rx, rotation_.hi.rx, e.rx);
  x[4] = unlerp(rotation_.lo.ry, rotation_.hi.ry, e.ry);
  x[5] = unlerp(rotation_.lo.rz, rotation_.hi.rz, e.rz);
  return x;
}

namespace {

// Counts evaluations and remembers the best point; refuses to evaluate past the budget.
class Budgeted {
 public:
  Budgeted(const Objective& f, int budget) : f_(f), budget_(budget) {}

  bool can(int n = 1) const { return used_ + n <= budget_; }
  int used() const { return used_; }
  double operator()(const Eigen::VectorXd& x) {
    ++used_;
    const double v = f_(x);
    if (v < best_value_) {
      best_value_ = v;
      best_x_ = x;
    }
    return v;
  }
  const Eigen::VectorXd& best_x() const { return best_x_; }
  double best_value() const { return best_value_; }

 private:
  const Objective& f_;
  int budget_;
  int used_ = 0;
  double best_value_ = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x_;
};

// Tsallis visiting distribution of generalized simulated annealing.
class Visiting {
 public:
  Visiting(double qv, std::mt19937_64& rng) : qv_(qv), rng_(rng) {
    factor2_ = std::exp((4.0 - qv_) * std::log(qv_ - 1.0));
    factor3_ = std::exp((2.0 - qv_) * std::log(2.0) / (qv_ - 1.0));
    factor4_p_ = std::sqrt(kPi) * factor2_ / (factor3_ * (3.0 - qv_));
    factor5_ = 1.0 / (qv_ - 1.0) - 0.5;
    d1_ = 2.0 - factor5_;
    factor6_ = kPi * (1.0 - factor5_) / std::sin(kPi * (1.0 - factor5_)) / std::exp(std::lgamma(d1_));
  }

  double sample(double temperature) {
    const double x = normal_(rng_);
    const double y = normal_(rng_);
    const double factor1 = std::exp(std::log(temperature) / (qv_ - 1.0));
    const double factor4 = factor4_p_ * factor1;
    const double xs = x * std::exp(-(qv_ - 1.0) * std::log(factor6_ / factor4) / (3.0 - qv_));
    const double den = std::exp((qv_ - 1.0) * std::log(std::abs(y)) / (3.0 - qv_));
    double v = xs / den;
    if (v > kTailLimit) v = kTailLimit * uniform_(rng_);
    if (v < -kTailLimit) v = -kTailLimit * uniform_(rng_);
    return v;
  }

  // Moves coordinate(s) and wraps them back into [-1, 1].
  Eigen::VectorXd visit(const Eigen::VectorXd& x, int coordinate, double temperature) {
    Eigen::VectorXd out = x;
    const auto wrap = [](double v) {
      const double range = 2.0;
      const double a = v + 1.0;
      double w = std::fmod(std::fmod(a, range) + range, range) - 1.0;
      if (std::abs(w + 1.0) < 1e-10) w += 1e-10;
      return w;
    };
    if (coordinate < 0) {
      for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = wrap(x[i] + sample(temperature));
    } else {
      out[coordinate] = wrap(x[coordinate] + sample(temperature));
    }
    return out;
  }

 private:
  static constexpr double kTailLimit = 1e8;
  double qv_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  double factor2_, factor3_, factor4_p_, factor5_, d1_, factor6_;
};

Eigen::VectorXd clamp_box(Eigen::VectorXd x) { return x.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

OptimizeResult anneal(const Objective& f, const Eigen::VectorXd& x0, int budget, std::uint64_t seed) {
  constexpr double kQv = 2.62;
  constexpr double kQa = -5.0;
  constexpr double kInitialTemp = 5230.0;
  constexpr double kRestartRatio = 2e-5;

  const Eigen::Index dim = x0.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  Visiting visiting(kQv, rng);
  Budgeted eval(f, budget);

  Eigen::VectorXd current = clamp_box(x0);
  double current_value = eval(current);
  const double t1 = std::exp((kQv - 1.0) * std::log(2.0)) - 1.0;
  const double restart_temp = kInitialTemp * kRestartRatio;

  int iteration = 0;
  while (eval.can()) {
    const double t2 = std::exp((kQv - 1.0) * std::log(iteration + 2.0)) - 1.0;
    const double temperature = kInitialTemp * t1 / t2;
    if (temperature < restart_temp) {
      iteration = 0;
      current.resize(dim);
      for (Eigen::Index i = 0; i < dim; ++i) current[i] = box(rng);
      current_value = eval(current);
      continue;
    }
    const double step_temp = temperature / (iteration + 1.0);
    for (Eigen::Index j = 0; j < 2 * dim && eval.can(); ++j) {
      const Eigen::VectorXd candidate =
          visiting.visit(current, j < dim ? -1 : static_cast<int>(j - dim), temperature);
      const double value = eval(candidate);
      bool accept = value < current_value;
      if (!accept) {
        const double r = uniform(rng);
        const double base = 1.0 - (kQa - 1.0) * (value - current_value) / step_temp;
        const double p = base <= 0.0 ? 0.0 : std::exp(std::log(base) / (1.0 - kQa));
        accept = r <= p;
      }
      if (accept) {
        current = candidate;
        current_value = value;
      }
    }
    ++iteration;
  }
  return {eval.best_x(), eval.best_value(), eval.used(), true};
}

OptimizeResult projected_bfgs(const Objective& f, const Eigen::VectorXd& x0, int budget,
                              const std::vector<bool>& periodic) {
  constexpr double kH = 1e-6;
  constexpr double kArmijo = 1e-4;
  const Eigen::Index n = x0.size();
  if (!periodic.empty() && periodic.size() != static_cast<std::size_t>(n)) {
    throw SizeMismatch("periodic flags do not match the dimension");
  }
  auto is_periodic = [&](Eigen::Index i) { return !periodic.empty() && periodic[static_cast<std::size_t>(i)]; };
  // Bounded coordinates are clamped; periodic ones stay unwrapped here and are wrapped by `project`.
  auto clamp_bounded = [&](Eigen::VectorXd x) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!is_periodic(i)) x[i] = std::clamp(x[i], -1.0, 1.0);
    }
    return x;
  };
  auto project = [&](Eigen::VectorXd x) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_periodic(i)) {
        x[i] = std::fmod(std::fmod(x[i] + 1.0, 2.0) + 2.0, 2.0) - 1.0;
      } else {
        x[i] = std::clamp(x[i], -1.0, 1.0);
      }
    }
    return x;
  };
  Budgeted eval(f, budget);

  Eigen::VectorXd x = project(x0);
  if (!eval.can()) return {x, std::numeric_limits<double>::infinity(), 0, true};
  double fx = eval(x);

  auto gradient = [&](const Eigen::VectorXd& at) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd a = at, b = at;
      a[i] += kH;
      b[i] -= kH;
      if (!is_periodic(i)) {
        a[i] = std::min(a[i], 1.0);
        b[i] = std::max(b[i], -1.0);
      }
      g[i] = (eval(project(a)) - eval(project(b))) / (a[i] - b[i]);
    }
    return g;
  };
  // Gradient components that would push a coordinate resting on a bound further out are inactive.
  auto projected = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& g) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_periodic(i)) continue;
      if ((at[i] <= -1.0 && g[i] > 0.0) || (at[i] >= 1.0 && g[i] < 0.0)) pg[i] = 0.0;
    }
    return pg;
  };

  bool exhausted = false;
  if (!eval.can(2 * static_cast<int>(n))) {
    return {eval.best_x(), eval.best_value(), eval.used(), true};
  }
  Eigen::VectorXd g = gradient(x);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);

  for (;;) {
    const Eigen::VectorXd pg = projected(x, g);
    if (pg.cwiseAbs().maxCoeff() < 1e-10) break;

    // Directions are restricted to the free coordinates.
    Eigen::VectorXd d = -(h * pg);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pg[i] == 0.0) d[i] = 0.0;
    }
    if (d.dot(pg) >= 0.0) {
      h.setIdentity();
      d = -pg;
    }

    double alpha = 1.0;
    bool moved = false;
    Eigen::VectorXd x_step;
    double f_new = fx;
    for (int k = 0; k < 30; ++k) {
      if (!eval.can()) {
        exhausted = true;
        break;
      }
      x_step = clamp_bounded(x + alpha * d);
      f_new = eval(project(x_step));
      if (f_new <= fx + kArmijo * g.dot(x_step - x)) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      if (!exhausted && !h.isIdentity()) {
        h.setIdentity();
        continue;
      }
      break;
    }
    const Eigen::VectorXd s = x_step - x;
    const double improvement = fx - f_new;
    x = project(x_step);
    fx = f_new;
    if (!eval.can(2 * static_cast<int>(n))) {
      exhausted = true;
      break;
    }
    const Eigen::VectorXd g_new = gradient(x);
    const Eigen::VectorXd y = g_new - g;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-16) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(n, n);
      h = (i - rho * s * y.transpose()) * h * (i - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (s.cwiseAbs().maxCoeff() < 1e-12 && improvement <= 1e-16 * (1.0 + std::abs(fx))) break;
  }
  return {eval.best_x(), eval.best_value(), eval.used(), exhausted};
}

PoseSolution solve_pose_at_t(const PointSet& k_initial, const PointSet& k_target, const Pose& current,
                             const PlanConfig& config, const std::optional<Pose>& warm,
                             const kinematics::JointChain* chain) {
  config.validate();
  if (k_initial.size() != k_target.size()) throw SizeMismatch("keypoint sets differ in size");
  const PoseCodec codec(config.workspace, config.rotation);
  const std::vector<bool> periodic = codec.periodic();
  const Pose current_inv = geometry::invert(current);

  kinematics::JointState ik_seed;
  const bool use_ik = chain != nullptr && config.w_ik > 0.0;
  if (use_ik) ik_seed = kinematics::find_ik(*chain, warm.value_or(current)).q;

  double w_col = config.w_col;
  auto objective = [&](const Eigen::VectorXd& x) {
    const Pose ee = codec.decode(x);
    const Pose motion = ee * current_inv;
    double cost = flow_cost(motion, k_initial, k_target);
    if (w_col > 0.0 && !config.obstacles.empty()) {
      cost += w_col * collision_penalty(motion, k_initial, config.obstacles, config.collision_margin);
    }
    if (use_ik) cost += config.w_ik * ik_penalty(*chain, ee, ik_seed, config.ik_penalty_iters);
    return cost;
  };

  PoseSolution sol;
  Eigen::VectorXd x;
  if (warm) {
    const OptimizeResult local = projected_bfgs(objective, codec.encode(*warm), config.warm_budget, periodic);
    x = local.x;
    sol.evaluations = local.evaluations;
    sol.budget_exhausted = local.budget_exhausted;
  } else {
    const OptimizeResult global = anneal(objective, codec.encode(current), config.global_budget, config.seed);
    const OptimizeResult local = projected_bfgs(objective, global.x, config.local_budget, periodic);
    x = local.value <= global.value ? local.x : global.x;
    double best = std::min(local.value, global.value);
    sol.evaluations = global.evaluations + local.evaluations;
    sol.budget_exhausted = local.budget_exhausted;
    // Leftover local budget goes to a second descent from the current pose.
    const int left = config.local_budget - local.evaluations;
    if (left > 0) {
      const OptimizeResult second = projected_bfgs(objective, codec.encode(current), left, periodic);
      sol.evaluations += second.evaluations;
      if (second.value < best) {
        x = second.x;
        best = second.value;
      }
    }
  }

  auto true_collision = [&](const Eigen::VectorXd& at) {
    return collision_penalty(codec.decode(at) * current_inv, k_initial, config.obstacles, 0.0);
  };
  for (int round = 0; round < config.continuation_rounds && !config.obstacles.empty() && w_col > 0.0 &&
                      true_collision(x) > 0.0;
       ++round) {
    w_col *= 10.0;
    const OptimizeResult local = projected_bfgs(objective, x, config.warm_budget, periodic);
    x = local.x;
    sol.evaluations += local.evaluations;
    sol.budget_exhausted = local.budget_exhausted;
  }

  sol.pose = codec.decode(x);
  sol.motion = sol.pose * current_inv;
  sol.flow = flow_cost(sol.motion, k_initial, k_target);
  sol.collision = collision_penalty(sol.motion, k_initial, config.obstacles, 0.0);
  sol.ik = use_ik ? ik_penalty(*chain, sol.pose, ik_seed, config.ik_penalty_iters) : 0.0;
  sol.cost = sol.flow + config.w_col * sol.collision + (use_ik ? config.w_ik * sol.ik : 0.0);
  return sol;
}

Pose goal_transform_from_flow(const flow::Flow3D& flow3d) {
  if (flow3d.num_timesteps < 2) throw DegenerateInput("flow needs at least 2 frames");
  const std::size_t last = flow3d.num_timesteps - 1;
  std::vector<Vec3> src, dst;
  for (std::size_t n = 0; n < flow3d.num_points; ++n) {
    if (!flow3d.is_visible(0, n) || !flow3d.is_visible(last, n)) continue;
    src.push_back(flow3d.at(0, n));
    dst.push_back(flow3d.at(last, n));
  }
  if (src.size() < 3) throw DegenerateInput("fewer than 3 points visible in both the first and last frame");
  return geometry::estimate_rigid_transform(src, dst);
}

std::size_t select_grasp_index(const std::vector<GraspCandidate>& candidates, const Pose& goal,
                               const kinematics::JointChain& chain) {
  if (candidates.empty()) throw InvalidArgument("no grasp candidates");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const GraspCandidate& c = candidates[i];
    if (best && c.score <= candidates[*best].score) continue;
    if (!kinematics::is_reachable(chain, c.pose)) continue;
    if (!kinematics::is_reachable(chain, goal * c.pose)) continue;
    best = i;
  }
  if (!best) throw NoFeasibleGrasp("no grasp candidate is reachable both before and after the goal transform");
  return *best;
}

GraspCandidate select_grasp(const std::vector<GraspCandidate>& candidates, const Pose& goal,
                            const kinematics::JointChain& chain) {
  return candidates[select_grasp_index(candidates, goal, chain)];
}

PlanResult plan_trajectory_detailed(const flow::Flow3D& flow3d, const GraspCandidate& grasp,
                                    const kinematics::JointChain& chain, const PlanConfig& config) {
  config.validate();
  grasp.validate();
  if (flow3d.num_timesteps < 2) throw DegenerateInput("flow needs at least 2 frames");

  // Keypoints: farthest point sampling over the points visible in frame 0.
  std::vector<std::size_t> visible0;
  std::vector<Vec3> points0;
  for (std::size_t n = 0; n < flow3d.num_points; ++n) {
    if (!flow3d.is_visible(0, n)) continue;
    visible0.push_back(n);
    points0.push_back(flow3d.at(0, n));
  }
  if (visible0.size() < 3) throw DegenerateInput("fewer than 3 flow points visible in the first frame");
  const std::size_t count = std::min(config.num_keypoints, visible0.size());
  PlanResult result;
  for (std::size_t i : geometry::farthest_point_sample(points0, count, 0)) result.keypoints.push_back(visible0[i]);

  PointSet k_initial;
  for (std::size_t n : result.keypoints) k_initial.points.push_back(flow3d.at(0, n));

  std::vector<std::size_t> frames;
  const std::size_t last = flow3d.num_timesteps - 1;
  for (std::size_t t = config.plan_stride; t < last; t += config.plan_stride) frames.push_back(t);
  frames.push_back(last);

  Trajectory& traj = result.trajectory;
  std::size_t step = 0;
  auto push = [&](const Pose& pose, GripperCommand cmd) {
    traj.steps.push_back({static_cast<double>(step++) * config.dt, pose, cmd});
  };
  push(grasp.pose * Pose::from_translation({0.0, 0.0, -config.approach_distance}), GripperCommand::open);
  push(grasp.pose, GripperCommand::close);

  std::optional<Pose> warm;
  for (std::size_t t : frames) {
    PointSet k_target;
    double visible = 0.0;
    for (std::size_t n : result.keypoints) {
      k_target.points.push_back(flow3d.at(t, n));
      const double w = flow3d.is_visible(t, n) ? 1.0 : 0.0;
      k_target.weights.push_back(w);
      visible += w;
    }
    if (visible < 3.0) {
      if (t == last) throw DegenerateInput("fewer than 3 keypoints visible in the last frame");
      continue;
    }
    PlanConfig cfg = config;
    cfg.seed = config.seed + t;
    const PoseSolution sol = solve_pose_at_t(k_initial, k_target, grasp.pose, cfg, warm, &chain);
    const double rms = std::sqrt(sol.flow / visible);
    if (rms > config.max_keypoint_rms) {
      throw InfeasibleTrajectory("frame " + std::to_string(t) + ": keypoint residual " + std::to_string(rms) +
                                 " m exceeds " + std::to_string(config.max_keypoint_rms) + " m");
    }
    warm = sol.pose;
    result.timesteps.push_back(t);
    result.solutions.push_back(sol);
    push(sol.pose, GripperCommand::hold);
  }
  if (config.release_at_end) push(traj.steps.back().pose, GripperCommand::open);

  traj.validate(config);

  // Hard reachability check along the whole trajectory, warm-starting each IK from the previous step.
  kinematics::IkResult ik = kinematics::find_ik(chain, traj.steps.front().pose);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    if (i > 0) {
      ik = kinematics::solve_ik(chain, traj.steps[i].pose, ik.q);
      if (!ik.converged) ik = kinematics::find_ik(chain, traj.steps[i].pose);
    }
    if (!ik.converged) throw InfeasibleTrajectory("step " + std::to_string(i) + " is not reachable by the arm");
  }
  return result;
}

Trajectory plan_trajectory(const flow::Flow3D& flow3d, const GraspCandidate& grasp,
                           const kinematics::JointChain& chain, const PlanConfig& config) {
  return plan_trajectory_detailed(flow3d, grasp, chain, config).trajectory;
}

std::string trajectory_to_json(const Trajectory& trajectory) {
  auto steps = nlohmann::json::array();
  for (const TrajectoryStep& s : trajectory.steps) {
    steps.push_back({{"time", s.time},
                     {"translation", detail::vec3_to_json(s.pose.translation)},
                     {"rotation", detail::quat_to_json(s.pose.rotation)},
                     {"gripper", to_string(s.gripper)}});
  }
  return nlohmann::json{{"steps", std::move(steps)}}.dump(2);
}

Trajectory trajectory_from_json(const std::string& text) {
  const nlohmann::json j = detail::parse_json(text, "trajectory");
  Trajectory traj;
  try {
    for (const auto& s : j.at("steps")) {
      TrajectoryStep step;
      step.time = s.at("time").get<double>();
      step.pose.translation = detail::vec3_from_json(s.at("translation"));
      step.pose.rotation = detail::quat_from_json(s.at("rotation"));
      step.gripper = gripper_command_from_string(s.at("gripper").get<std::string>());
      traj.steps.push_back(step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("steps", e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError("gripper", e.what());
  }
  return traj;
}

void write_trajectory(const Trajectory& trajectory, const std::filesystem::path& path) {
  detail::write_file_text(path, trajectory_to_json(trajectory));
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  return trajectory_from_json(detail::read_file_text(path));
}

}  // namespace flowact::planner
