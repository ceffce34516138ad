#include "flowact/sim.hpp"

#include "binary_io.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <unordered_map>

namespace flowact::sim {

Scene execute(const Scene& scene, const planner::Trajectory& trajectory, const std::string& attached_object,
              const kinematics::JointChain* chain) {
  Scene out = scene;
  SceneObject& obj = out.object(attached_object);
  if (obj.history.empty()) obj.history = {obj.pose};

  std::optional<Pose> grip;  // object pose in the end-effector frame
  std::optional<kinematics::JointState> q;
  for (const planner::TrajectoryStep& step : trajectory.steps) {
    Pose ee = step.pose;
    if (chain != nullptr) {
      kinematics::IkResult r = q ? kinematics::solve_ik(*chain, ee, *q) : kinematics::find_ik(*chain, ee);
      if (!r.converged && q) {
        kinematics::IkResult retry = kinematics::find_ik(*chain, ee);
        if (retry.converged) r = retry;
      }
      q = r.q;
      ee = kinematics::forward_kinematics(*chain, *q);
    }
    if (grip && step.gripper != planner::GripperCommand::open) {
      obj.pose = ee * *grip;
      obj.history.push_back(obj.pose);
    }
    if (step.gripper == planner::GripperCommand::close && !grip) grip = geometry::invert(ee) * obj.pose;
    if (step.gripper == planner::GripperCommand::open) grip.reset();
  }
  return out;
}

ColoredCloud gripper_cloud(double width) {
  const Color dark{50, 50, 55};
  const Color finger{80, 80, 90};
  std::vector<Shape> shapes;
  auto box = [&](const Vec3& center, const Vec3& size, const Color& c) {
    Shape s;
    s.kind = Shape::Kind::box;
    s.pose = Pose::from_translation(center);
    s.size = size;
    s.color = c;
    shapes.push_back(s);
  };
  const double half = 0.5 * width + 0.005;
  box({0.0, half, -0.02}, {0.015, 0.01, 0.05}, finger);
  box({0.0, -half, -0.02}, {0.015, 0.01, 0.05}, finger);
  box({0.0, 0.0, -0.055}, {0.02, 2.0 * half + 0.02, 0.02}, dark);
  Shape wrist;
  wrist.kind = Shape::Kind::cylinder;
  wrist.pose = Pose::from_translation({0.0, 0.0, -0.14});
  wrist.size = {0.02, 0.0, 0.075};
  wrist.color = dark;
  shapes.push_back(wrist);

  ColoredCloud out;
  for (const Shape& s : shapes) out.append(sample_shape(s, 0.005));
  return out;
}

namespace {

constexpr double kGripperSpacing = 0.005;

struct TrackSeed {
  Vec3 world;
  bool moving = false;   // on the task object
  bool carried = false;  // on the task object or the gripper
};

}  // namespace

Episode synthesize_episode(const Scene& scene, const oracle::MotionScript& script, std::uint64_t seed,
                           const EpisodeOptions& options) {
  if (script.task != scene.task.name) {
    throw UnknownTask("script task '" + script.task + "' does not match scene task '" + scene.task.name + "'");
  }
  if (options.track_stride < 1) throw InvalidArgument("track stride must be at least 1");
  const Scene s = options.randomize
                      ? randomize_scene(scene, seed, options.translation_range, options.yaw_range)
                      : scene;
  const std::vector<Pose> poses = oracle::object_trajectory(script, s, options.horizon);
  const std::size_t obj_idx = s.object_index(s.task.object);
  const SceneObject& obj = s.objects[obj_idx];
  const auto obj_id = static_cast<std::int32_t>(obj_idx);
  const auto gripper_id = static_cast<std::int32_t>(s.objects.size());
  const bool with_gripper = options.render_gripper && !obj.grasps.empty();
  const ColoredCloud gripper =
      with_gripper ? transformed(gripper_cloud(obj.grasps.front().width), obj.grasps.front().pose) : ColoredCloud{};
  const Pose start_inv = geometry::invert(poses.front());

  const Camera& cam = s.camera;
  const CameraIntrinsics& k = cam.intrinsics;
  const Pose world_to_cam = geometry::invert(cam.pose);
  auto render = [&](std::size_t t) {
    RenderBuffers b = make_buffers(k);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const SceneObject& o = s.objects[i];
      const Pose pose = i == obj_idx ? poses[t] : o.pose;
      splat_cloud(b, cam, transformed(o.cloud, pose).points, o.spacing, static_cast<std::int32_t>(i));
    }
    if (with_gripper) splat_cloud(b, cam, transformed(gripper, poses[t]).points, kGripperSpacing, gripper_id);
    return b;
  };

  Episode ep;
  EpisodeRecord& rec = ep.record;
  rec.intrinsics = k;
  rec.instruction = s.instruction;
  rec.scene = s;

  const RenderBuffers frame0 = render(0);
  rec.gripper = extraction::Mask::filled(k.width, k.height, false);
  double u_min = std::numeric_limits<double>::infinity(), v_min = u_min, u_max = -u_min, v_max = -u_min;
  for (unsigned v = 0; v < k.height; ++v) {
    for (unsigned u = 0; u < k.width; ++u) {
      const std::int32_t id = frame0.object[frame0.index(u, v)];
      if (id == gripper_id) rec.gripper.set(u, v, true);
      if (id == obj_id) {
        u_min = std::min(u_min, static_cast<double>(u));
        u_max = std::max(u_max, static_cast<double>(u));
        v_min = std::min(v_min, static_cast<double>(v));
        v_max = std::max(v_max, static_cast<double>(v));
      }
    }
  }
  if (!(u_max >= u_min)) throw DegenerateInput("the task object is not visible in the first frame");
  rec.object_bbox = {u_min, v_min, u_max, v_max};

  std::vector<TrackSeed> seeds;
  for (unsigned v = 0; v < k.height; v += options.track_stride) {
    for (unsigned u = 0; u < k.width; u += options.track_stride) {
      const std::size_t idx = frame0.index(u, v);
      if (!(frame0.depth[idx] > 0.0f)) continue;
      TrackSeed ts;
      ts.world = cam.pose.apply(geometry::unproject(k, u, v, frame0.depth[idx]));
      ts.moving = frame0.object[idx] == obj_id;
      ts.carried = ts.moving || frame0.object[idx] == gripper_id;
      seeds.push_back(ts);
    }
  }

  const std::size_t T = options.horizon, M = seeds.size();
  extraction::TrackSet& tracks = rec.tracks;
  tracks.num_points = M;
  tracks.num_frames = T;
  tracks.width = k.width;
  tracks.height = k.height;
  tracks.samples.assign(M * T, {});
  rec.moving.resize(M);
  for (std::size_t m = 0; m < M; ++m) rec.moving[m] = seeds[m].moving ? 1 : 0;
  ep.ground_truth = flow::make_flow(T, M, k, s.instruction);

  for (std::size_t t = 0; t < T; ++t) {
    const RenderBuffers b = t == 0 ? frame0 : render(t);
    const Pose carry = poses[t] * start_inv;
    std::vector<double> depth(M, 0.0);
    std::unordered_map<std::size_t, std::size_t> owner;  // pixel -> nearest visible track
    for (std::size_t m = 0; m < M; ++m) {
      const Vec3 w = seeds[m].carried ? carry.apply(seeds[m].world) : seeds[m].world;
      const Vec3 c = world_to_cam.apply(w);
      extraction::TrackPoint& p = tracks.at(m, t);
      flow::FlowSample& g = ep.ground_truth.at(t, m);
      if (!(c.z() > 0.0)) continue;
      p.u = k.fx * c.x() / c.z() + k.cx;
      p.v = k.fy * c.y() / c.z() + k.cy;
      g.u = p.u;
      g.v = p.v;
      g.depth = c.z();
      depth[m] = c.z();
      const long pu = std::lround(p.u), pv = std::lround(p.v);
      if (!k.contains(p.u, p.v) || pu >= static_cast<long>(k.width) || pv >= static_cast<long>(k.height)) continue;
      const std::size_t idx = b.index(static_cast<unsigned>(pu), static_cast<unsigned>(pv));
      const double z_buf = b.depth[idx];
      if (t > 0 && !(z_buf > 0.0 && c.z() <= z_buf + options.occlusion_tolerance)) continue;
      auto [it, inserted] = owner.emplace(idx, m);
      if (!inserted) {
        if (depth[m] >= depth[it->second]) continue;
        tracks.at(it->second, t).visible = false;
        ep.ground_truth.at(t, it->second).visible = false;
        it->second = m;
      }
      p.visible = true;
      g.visible = true;
    }
    extraction::DepthMap map{k.width, k.height, b.depth};
    for (const auto& [idx, m] : owner) map.data[idx] = static_cast<float>(depth[m]);
    rec.depth.push_back(std::move(map));
  }
  return ep;
}

void EvalConfig::validate() const {
  if (n_trials < 1) throw InvalidArgument("n_trials must be at least 1");
  if (translation_range < 0.0 || yaw_range < 0.0) throw InvalidArgument("randomization ranges must be non-negative");
  if (sigma_px < 0.0 || sigma_depth < 0.0) throw InvalidArgument("noise levels must be non-negative");
  if (corruption_rate < 0.0 || corruption_rate > 1.0) throw InvalidArgument("corruption rate must lie in [0, 1]");
  if (corruption_displacement < 0.0) throw InvalidArgument("corruption displacement must be non-negative");
  if (max_retries < 0) throw InvalidArgument("max_retries must be non-negative");
  if (point_stride < 1) throw InvalidArgument("point stride must be at least 1");
  if (horizon < 2) throw InvalidArgument("horizon must be at least 2");
  plan.validate();
}

namespace {

/// Runs `f`, mapping planning-domain errors to their class name.
template <typename F>
std::optional<std::pair<std::string, std::string>> capture(F&& f) {
  try {
    f();
    return std::nullopt;
  } catch (const verify::PlanningFailed& e) {
    return std::pair<std::string, std::string>{"PlanningFailed", e.what()};
  } catch (const InfeasibleTrajectory& e) {
    return std::pair<std::string, std::string>{"InfeasibleTrajectory", e.what()};
  } catch (const NoFeasibleGrasp& e) {
    return std::pair<std::string, std::string>{"NoFeasibleGrasp", e.what()};
  } catch (const DegenerateInput& e) {
    return std::pair<std::string, std::string>{"DegenerateInput", e.what()};
  } catch (const EmptyRender& e) {
    return std::pair<std::string, std::string>{"EmptyRender", e.what()};
  } catch (const EmptyResult& e) {
    return std::pair<std::string, std::string>{"EmptyResult", e.what()};
  }
}

}  // namespace

EvalReport evaluate(const Scene& scene, const std::map<std::string, oracle::MotionScript>& scripts,
                    const kinematics::JointChain& chain, const EvalConfig& config) {
  config.validate();
  scene.task.validate();

  std::shared_ptr<const oracle::FlowGenerator> base =
      std::make_shared<oracle::ScriptedGenerator>(scripts, config.horizon);
  if (config.sigma_px > 0.0 || config.sigma_depth > 0.0) {
    base = std::make_shared<oracle::NoisyGenerator>(base, config.sigma_px, config.sigma_depth);
  }
  const verify::CorruptingGenerator corrupted(base, {0}, config.corruption_displacement);
  std::unique_ptr<verify::Verifier> verifier;
  if (config.verifier_endpoint.empty()) {
    verifier = std::make_unique<verify::GeometricVerifier>();
  } else {
    verifier = std::make_unique<verify::ExternalVerifier>(config.verifier_endpoint);
  }

  EvalReport report;
  report.task = scene.task.name;
  report.scene = scene.name;
  report.n_trials = config.n_trials;
  for (std::size_t i = 0; i < config.n_trials; ++i) {
    TrialRecord trial;
    trial.index = i;
    trial.seed = config.seed + i;
    trial.corrupted = verify::corruption_scheduled(i, config.corruption_rate);
    const Scene s = randomize_scene(scene, trial.seed, config.translation_range, config.yaw_range);

    const auto failure = capture(
        [&] {
          oracle::GeneratorRequest request;
          request.scene = &s;
          request.instruction = s.instruction;
          request.initial_points = object_initial_points(s, s.task.object, config.point_stride);
          request.seed = trial.seed;
          if (request.initial_points.size() < 3) throw EmptyResult("fewer than 3 initial points on the task object");
          planner::PlanConfig plan = config.plan;
          plan.workspace = s.workspace;
          plan.seed = trial.seed;
          const verify::ClosedLoopOptions loop{config.max_retries, config.splat_radius, &trial.verdicts};
          const oracle::FlowGenerator& generator =
              trial.corrupted ? static_cast<const oracle::FlowGenerator&>(corrupted) : *base;
          const verify::ClosedLoopResult r =
              verify::closed_loop_plan(generator, request, s, chain, plan, *verifier, loop);
          const Scene done = execute(s, r.trajectory, s.task.object, &chain);
          const SuccessResult sr = check_success(done, done.task);
          trial.success = sr.success;
          trial.diagnostics = sr.violations;
          trial.metrics = sr.metrics;
        });
    if (failure) {
      trial.success = false;
      trial.error = failure->first;
      trial.diagnostics = {failure->second};
    }
    trial.attempts = static_cast<int>(trial.verdicts.size());
    if (trial.success) ++report.successes;
    report.trials.push_back(std::move(trial));
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json trials = nlohmann::json::array();
  for (const TrialRecord& t : report.trials) {
    nlohmann::json verdicts = nlohmann::json::array();
    for (const verify::Verdict& v : t.verdicts) verdicts.push_back({{"accept", v.accept}, {"reason", v.reason}});
    trials.push_back({{"index", t.index},
                      {"seed", t.seed},
                      {"success", t.success},
                      {"corrupted", t.corrupted},
                      {"attempts", t.attempts},
                      {"error", t.error},
                      {"diagnostics", t.diagnostics},
                      {"verdicts", verdicts},
                      {"metrics", t.metrics}});
  }
  const nlohmann::json j = {{"task", report.task},
                            {"scene", report.scene},
                            {"n_trials", report.n_trials},
                            {"successes", report.successes},
                            {"failures", report.n_trials - report.successes},
                            {"success_rate", report.rate()},
                            {"config_digest", report.config_digest},
                            {"trials", trials}};
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  detail::write_file_text(path, report_to_json(report));
}

}  // namespace flowact::sim
