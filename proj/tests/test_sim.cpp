#include "flowact/errors.hpp"
#include "flowact/extraction.hpp"
#include "flowact/oracle.hpp"
#include "flowact/scene.hpp"
#include "flowact/sim.hpp"
#include "flowact/verify.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

using namespace flowact;
using namespace flowact::sim;

namespace {

const std::string kData = FLOWACT_DATA_DIR;
constexpr double kDeg = std::numbers::pi / 180.0;

Scene scene_for(const std::string& task) { return load_scene(kData + "/scenes/" + task + ".json"); }

std::map<std::string, oracle::MotionScript> scripts() { return oracle::load_script_library(kData + "/scripts"); }

kinematics::JointChain desk_arm() { return kinematics::load_chain(kData + "/chains/desk_arm.json"); }

// Scene with the task object moved along its script to the final pose.
Scene at_scripted_goal(const Scene& scene) {
  const auto poses = oracle::object_trajectory(scripts().at(scene.task.name), scene, 32);
  Scene out = scene;
  SceneObject& obj = out.object(scene.task.object);
  obj.history = poses;
  obj.pose = poses.back();
  return out;
}

planner::Trajectory carry(const Pose& grasp, const std::vector<Pose>& motions) {
  planner::Trajectory traj;
  double t = 0.0;
  traj.steps.push_back({t, grasp, planner::GripperCommand::close});
  for (const Pose& m : motions) traj.steps.push_back({t += 0.1, m * grasp, planner::GripperCommand::hold});
  traj.steps.push_back({t + 0.1, motions.empty() ? grasp : motions.back() * grasp, planner::GripperCommand::open});
  return traj;
}

double nearest(const std::vector<Vec3>& cloud, const Vec3& p) {
  double best = 1e9;
  for (const Vec3& q : cloud) best = std::min(best, (q - p).norm());
  return best;
}

}  // namespace

TEST(SceneFile, ShippedScenesLoad) {
  for (const std::string& task : task_names()) {
    const Scene s = scene_for(task);
    EXPECT_EQ(s.task.name, task);
    EXPECT_NO_THROW(s.task.validate());
    EXPECT_GT(s.object(s.task.object).cloud.size(), 100u);
    EXPECT_FALSE(s.object(s.task.object).grasps.empty());
    EXPECT_EQ(s.camera.intrinsics.width, 640u);
  }
}

TEST(SceneFile, MalformedRejected) {
  EXPECT_THROW(parse_scene("{\"name\": \"x\", "), ParseError);
  EXPECT_THROW(load_scene("/nonexistent/scene.json"), IoError);
}

TEST(TaskSpec, Validation) {
  TaskSpec t = scene_for("pour").task;
  EXPECT_NO_THROW(t.validate());
  t.pour_alignment = 0.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = scene_for("pour").task;
  t.name = "juggle";
  EXPECT_THROW(t.validate(), UnknownTask);
}

TEST(CheckSuccess, ScriptedGoalSucceeds) {
  for (const std::string& task : task_names()) {
    const Scene done = at_scripted_goal(scene_for(task));
    const SuccessResult r = check_success(done, done.task);
    EXPECT_TRUE(r.success) << task << ": " << r.summary();
    EXPECT_TRUE(r.violations.empty());
  }
}

TEST(CheckSuccess, UntouchedSceneFails) {
  for (const std::string& task : task_names()) {
    const Scene s = scene_for(task);
    const SuccessResult r = check_success(s, s.task);
    EXPECT_FALSE(r.success) << task;
    EXPECT_FALSE(r.violations.empty()) << task;
  }
}

TEST(CheckSuccess, DrawerOffAxisNamesClause) {
  Scene s = scene_for("drawer");
  SceneObject& d = s.object(s.task.object);
  const Vec3 axis = d.direction_world("axis");
  const Vec3 side = axis.cross(Vec3::UnitZ()).normalized();
  d.pose = Pose::from_translation(0.15 * axis + 0.05 * side) * d.pose;
  const SuccessResult r = check_success(s, s.task);
  EXPECT_FALSE(r.success);
  ASSERT_EQ(r.violations.size(), 1u) << r.summary();
  EXPECT_NE(r.violations[0].find("off its axis"), std::string::npos) << r.violations[0];
  EXPECT_NEAR(r.metrics.at("off_axis"), 0.05, 1e-9);
}

TEST(CheckSuccess, DrawerShortExtensionFails) {
  Scene s = scene_for("drawer");
  SceneObject& d = s.object(s.task.object);
  d.pose = Pose::from_translation(0.05 * d.direction_world("axis")) * d.pose;
  const SuccessResult r = check_success(s, s.task);
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.summary().find("along its axis"), std::string::npos);
}

TEST(CheckSuccess, PourSpilledDuringTransportFails) {
  Scene done = at_scripted_goal(scene_for("pour"));
  SceneObject& pot = done.object("teapot");
  // Tip the teapot midway through the carry, far from the cup.
  Pose spilled = pot.history[4];
  spilled.rotation = geometry::Rotation::from_axis_angle(Vec3::UnitY(), 40 * kDeg) * spilled.rotation;
  pot.history[4] = spilled;
  const SuccessResult r = check_success(done, done.task);
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.summary().find("transport tilt"), std::string::npos) << r.summary();
}

TEST(CheckSuccess, InsertTiltedPenFails) {
  Scene done = at_scripted_goal(scene_for("insert"));
  SceneObject& pen = done.object("pen");
  const Vec3 tip = pen.anchor_world("tip");
  const Pose tilt_about_tip = Pose::from_translation(tip) *
                              Pose{Vec3::Zero(), geometry::Rotation::from_axis_angle(Vec3::UnitX(), 15 * kDeg)} *
                              Pose::from_translation(-tip);
  pen.pose = tilt_about_tip * pen.pose;
  const SuccessResult r = check_success(done, done.task);
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.summary().find("from vertical"), std::string::npos) << r.summary();
}

TEST(CheckSuccess, HangMissedPegFails) {
  Scene done = at_scripted_goal(scene_for("hang"));
  SceneObject& mug = done.object("mug");
  mug.pose = Pose::from_translation({0.0, 0.0, 0.03}) * mug.pose;
  const SuccessResult r = check_success(done, done.task);
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.summary().find("from the peg"), std::string::npos) << r.summary();
}

TEST(CheckSuccess, PureFunction) {
  const Scene done = at_scripted_goal(scene_for("hang"));
  const SuccessResult a = check_success(done, done.task);
  const SuccessResult b = check_success(done, done.task);
  EXPECT_EQ(a.success, b.success);
  EXPECT_EQ(a.violations, b.violations);
  EXPECT_EQ(a.metrics, b.metrics);
}

TEST(CheckSuccess, MissingAnchorIsUnresolved) {
  Scene s = scene_for("pour");
  s.object("teapot").anchors.erase("spout");
  EXPECT_THROW(check_success(s, s.task), UnresolvedBinding);
  Scene t = scene_for("pour");
  t.task.target = "saucer";
  EXPECT_THROW(check_success(t, t.task), UnresolvedBinding);
}

TEST(Randomize, DeterministicAndBounded) {
  const Scene nominal = scene_for("drawer");
  const Scene a = randomize_scene(nominal, 17, 0.05, 30 * kDeg);
  const Scene b = randomize_scene(nominal, 17, 0.05, 30 * kDeg);
  for (std::size_t i = 0; i < nominal.objects.size(); ++i) {
    EXPECT_LT(testutil::pose_translation_error(a.objects[i].pose, b.objects[i].pose), 1e-15);
    const Pose delta = a.objects[i].pose * geometry::invert(nominal.objects[i].pose);
    if (!nominal.objects[i].movable) {
      EXPECT_LT(delta.translation.norm(), 1e-15);
      continue;
    }
    EXPECT_LE(delta.rotation.angle(), 30 * kDeg + 1e-12);
    EXPECT_NEAR(std::abs(delta.rotation.apply(Vec3::UnitZ()).z()), 1.0, 1e-12);  // yaw only
  }
  // Cabinet and drawer share a group and keep their relative pose.
  const Pose rel_nominal = geometry::invert(nominal.object("cabinet").pose) * nominal.object("drawer").pose;
  const Pose rel = geometry::invert(a.object("cabinet").pose) * a.object("drawer").pose;
  EXPECT_LT(testutil::pose_translation_error(rel, rel_nominal), 1e-12);
  EXPECT_LT(testutil::pose_rotation_error(rel, rel_nominal), 1e-12);
}

TEST(Randomize, GroupOriginShiftWithinRange) {
  const Scene nominal = scene_for("pour");
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = randomize_scene(nominal, seed, 0.05, 30 * kDeg);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const Vec3 d = s.objects[i].pose.translation - nominal.objects[i].pose.translation;
      EXPECT_LE(std::abs(d.x()), 0.05 + 1e-12);
      EXPECT_LE(std::abs(d.y()), 0.05 + 1e-12);
      EXPECT_NEAR(d.z(), 0.0, 1e-12);
    }
  }
}

TEST(Randomize, UngroupedObjectsMoveIndependently) {
  const Scene nominal = scene_for("pour");
  const Scene s = randomize_scene(nominal, 3, 0.05, 30 * kDeg);
  const Vec3 d_pot = s.object("teapot").pose.translation - nominal.object("teapot").pose.translation;
  const Vec3 d_cup = s.object("cup").pose.translation - nominal.object("cup").pose.translation;
  EXPECT_GT((d_pot - d_cup).norm(), 1e-6);
}

TEST(Execute, EmptyTrajectoryLeavesSceneUnchanged) {
  const Scene s = scene_for("pour");
  const Scene out = execute(s, {}, "teapot");
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    EXPECT_LT(testutil::pose_translation_error(out.objects[i].pose, s.objects[i].pose), 1e-15);
  }
}

TEST(Execute, PureTranslationMovesObjectIdentically) {
  const Scene s = scene_for("insert");
  const auto& pen = s.object("pen");
  const Vec3 shift(0.03, -0.02, 0.1);
  const Scene out = execute(s, carry(pen.world_grasps()[0].pose, {Pose::from_translation(shift)}), "pen");
  const Pose& moved = out.object("pen").pose;
  EXPECT_LT((moved.translation - (pen.pose.translation + shift)).norm(), 1e-12);
  EXPECT_LT(testutil::pose_rotation_error(moved, pen.pose), 1e-12);
  EXPECT_LT(testutil::pose_translation_error(out.object("holder").pose, s.object("holder").pose), 1e-15);
}

TEST(Execute, OpenGripperNeverMovesObjects) {
  const Scene s = scene_for("hang");
  const Pose grasp = s.object("mug").world_grasps()[0].pose;
  planner::Trajectory traj;
  traj.steps.push_back({0.0, grasp, planner::GripperCommand::open});
  traj.steps.push_back({0.1, Pose::from_translation({0.1, 0.0, 0.1}) * grasp, planner::GripperCommand::hold});
  traj.steps.push_back({0.2, Pose::from_translation({0.0, 0.1, 0.2}) * grasp, planner::GripperCommand::open});
  const Scene out = execute(s, traj, "mug", nullptr);
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    EXPECT_LT(testutil::pose_translation_error(out.objects[i].pose, s.objects[i].pose), 1e-15);
  }
}

TEST(Execute, ReleaseStopsFollowing) {
  const Scene s = scene_for("pour");
  const Pose grasp = s.object("teapot").world_grasps()[0].pose;
  planner::Trajectory traj = carry(grasp, {Pose::from_translation({0, 0, 0.05})});
  traj.steps.push_back({1.0, Pose::from_translation({0, 0, 0.2}) * grasp, planner::GripperCommand::hold});
  const Scene out = execute(s, traj, "teapot");
  EXPECT_NEAR(out.object("teapot").pose.translation.z() - s.object("teapot").pose.translation.z(), 0.05, 1e-12);
}

TEST(Execute, UnknownObjectThrows) { EXPECT_THROW(execute(scene_for("pour"), {}, "kettle"), UnknownObject); }

TEST(Execute, PlannedTrajectoryReachesFlowGoal) {
  const auto chain = desk_arm();
  const auto gen = std::make_shared<oracle::ScriptedGenerator>(scripts());
  for (const std::string& task : task_names()) {
    for (std::uint64_t seed : {0u, 1u}) {
      const Scene s = randomize_scene(scene_for(task), seed, 0.05, 30 * kDeg);
      oracle::GeneratorRequest req;
      req.scene = &s;
      req.instruction = s.instruction;
      req.initial_points = object_initial_points(s, s.task.object, 8);
      req.seed = seed;
      planner::PlanConfig plan;
      plan.workspace = s.workspace;
      plan.seed = seed;
      const auto r = verify::closed_loop_plan(*gen, req, s, chain, plan, verify::GeometricVerifier{});
      // Oracle: the rigid transform between the first and last flow frames.
      const flow::Flow3D world = flow::transformed(flow::lift_to_3d(r.flow), s.camera.pose);
      const Pose expected = planner::goal_transform_from_flow(world) * s.object(s.task.object).pose;
      const Scene done = execute(s, r.trajectory, s.task.object, &chain);
      const Pose& got = done.object(s.task.object).pose;
      EXPECT_LT(testutil::pose_translation_error(got, expected), 0.005) << task << " seed " << seed;
      EXPECT_LT(testutil::pose_rotation_error(got, expected), 2 * kDeg) << task << " seed " << seed;
    }
  }
}

TEST(GripperCloud, FingersStraddleTheGraspWidth) {
  const ColoredCloud g = gripper_cloud(0.04);
  ASSERT_GT(g.size(), 50u);
  double min_abs_y_in_fingers = 1e9;
  for (const Vec3& p : g.points) {
    if (p.z() > -0.045) min_abs_y_in_fingers = std::min(min_abs_y_in_fingers, std::abs(p.y()));
  }
  EXPECT_GE(min_abs_y_in_fingers, 0.02 - 1e-12);
}

TEST(Synthesize, StaticScriptHasNoMovingTracks) {
  const Scene s = scene_for("drawer");
  const auto script = oracle::parse_script(R"({"task": "drawer", "waypoints": [
    {"time": 0, "mode": "start"}, {"time": 1, "mode": "relative", "translation": [0, 0, 0]}]})");
  EpisodeOptions opt;
  opt.horizon = 8;
  const Episode ep = synthesize_episode(s, script, 1, opt);
  for (std::size_t m = 0; m < ep.record.tracks.num_points; ++m) {
    for (std::size_t t = 0; t < ep.record.tracks.num_frames; ++t) {
      const auto& p = ep.record.tracks.at(m, t);
      if (!p.visible) continue;
      EXPECT_NEAR(p.u, ep.record.tracks.at(m, 0).u, 1e-9);
      EXPECT_NEAR(p.v, ep.record.tracks.at(m, 0).v, 1e-9);
    }
  }
  EXPECT_TRUE(extraction::detect_moving_points(ep.record.tracks, 0.05).empty());
  EXPECT_THROW(extraction::extract_episode(ep.record.tracks, ep.record.depth, ep.record.gripper,
                                           ep.record.intrinsics, {}),
               NoMovingObject);
}

TEST(Synthesize, ScriptForAnotherTaskThrows) {
  EXPECT_THROW(synthesize_episode(scene_for("drawer"), scripts().at("pour"), 0), UnknownTask);
}

TEST(Synthesize, OutputsAreConsistent) {
  const auto lib = scripts();
  for (const std::string& task : task_names()) {
    const Episode ep = synthesize_episode(scene_for(task), lib.at(task), 5);
    const EpisodeRecord& rec = ep.record;
    EXPECT_NO_THROW(rec.tracks.validate()) << task;
    EXPECT_NO_THROW(flow::validate(ep.ground_truth)) << task;
    ASSERT_EQ(rec.depth.size(), rec.tracks.num_frames);
    ASSERT_EQ(ep.ground_truth.num_points, rec.tracks.num_points);
    ASSERT_EQ(ep.ground_truth.num_timesteps, rec.tracks.num_frames);
    ASSERT_EQ(rec.moving.size(), rec.tracks.num_points);
    EXPECT_EQ(rec.gripper.width, rec.intrinsics.width);
    EXPECT_EQ(rec.gripper.height, rec.intrinsics.height);
    EXPECT_GT(rec.gripper.count(), 0u);

    // Tracks lifted through the depth maps reproduce the ground-truth flow.
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t m = 0; m < rec.tracks.num_points; ++m) {
      for (std::size_t t = 0; t < rec.tracks.num_frames; ++t) {
        const auto& p = rec.tracks.at(m, t);
        const auto& g = ep.ground_truth.at(t, m);
        ASSERT_EQ(p.visible, g.visible);
        if (!p.visible) continue;
        const double d = rec.depth[t].at(static_cast<unsigned>(std::lround(p.u)), static_cast<unsigned>(std::lround(p.v)));
        ASSERT_GT(d, 0.0);
        const Vec3 lifted = geometry::unproject(rec.intrinsics, p.u, p.v, d);
        const Vec3 truth = geometry::unproject(ep.ground_truth.intrinsics, g.u, g.v, g.depth);
        worst = std::max(worst, (lifted - truth).norm());
        ++checked;
      }
    }
    EXPECT_LT(worst, 1e-6) << task;
    EXPECT_GT(checked, 1000u) << task;
  }
}

TEST(Synthesize, MovingLabelsAreExactlyTheObject) {
  const Scene s = scene_for("drawer");
  const Episode ep = synthesize_episode(s, scripts().at("drawer"), 2);
  const EpisodeRecord& rec = ep.record;
  const Scene& initial = rec.scene;
  const SceneObject& drawer = initial.object("drawer");
  const std::vector<Vec3> drawer_cloud = drawer.world_cloud().points;
  std::size_t labeled = 0;
  for (std::size_t m = 0; m < rec.tracks.num_points; ++m) {
    const auto& p0 = rec.tracks.at(m, 0);
    const double d = rec.depth[0].at(static_cast<unsigned>(std::lround(p0.u)), static_cast<unsigned>(std::lround(p0.v)));
    const Vec3 world = initial.camera.pose.apply(geometry::unproject(rec.intrinsics, p0.u, p0.v, d));
    double moved = 0.0;
    for (std::size_t t = 1; t < rec.tracks.num_frames; ++t) {
      const auto& p = rec.tracks.at(m, t);
      if (p.visible) moved = std::max(moved, std::hypot(p.u - p0.u, p.v - p0.v));
    }
    if (rec.moving[m]) {
      ++labeled;
      EXPECT_LT(nearest(drawer_cloud, world), 2.0 * drawer.spacing) << "track " << m;
    } else if (!rec.gripper.at(std::lround(p0.u), std::lround(p0.v))) {
      EXPECT_EQ(moved, 0.0) << "unlabeled track " << m << " moved";
    }
  }
  EXPECT_GT(labeled, 20u);
  // The labeled tracks span the ground-truth box.
  for (std::size_t m = 0; m < rec.tracks.num_points; ++m) {
    if (!rec.moving[m]) continue;
    EXPECT_TRUE(rec.object_bbox.contains(rec.tracks.at(m, 0).u, rec.tracks.at(m, 0).v));
  }
}

TEST(Synthesize, DeterministicPerSeed) {
  const auto lib = scripts();
  const Scene s = scene_for("insert");
  const Episode a = synthesize_episode(s, lib.at("insert"), 8);
  const Episode b = synthesize_episode(s, lib.at("insert"), 8);
  const Episode c = synthesize_episode(s, lib.at("insert"), 9);
  EXPECT_TRUE(a.record.tracks == b.record.tracks);
  EXPECT_TRUE(a.record.depth == b.record.depth);
  EXPECT_TRUE(a.record.gripper == b.record.gripper);
  EXPECT_EQ(flow::encode_flow(a.ground_truth), flow::encode_flow(b.ground_truth));
  EXPECT_FALSE(a.record.tracks == c.record.tracks);
}

TEST(Synthesize, ExtractionRecoversTheObject) {
  const auto lib = scripts();
  for (const std::string& task : task_names()) {
    const Episode ep = synthesize_episode(scene_for(task), lib.at(task), 21);
    const auto r = extraction::extract_episode(ep.record.tracks, ep.record.depth, ep.record.gripper,
                                               ep.record.intrinsics, {}, ep.record.instruction);
    EXPECT_GE(extraction::iou(r.bbox, ep.record.object_bbox), 0.5) << task;
    for (std::size_t idx : r.track_indices) EXPECT_TRUE(ep.record.moving[idx]) << task << " track " << idx;
  }
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_trials = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.max_retries = -1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.corruption_rate = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Evaluate, SingleTrialAndRate) {
  EvalConfig c;
  c.n_trials = 1;
  c.seed = 40;
  const EvalReport r = evaluate(scene_for("drawer"), scripts(), desk_arm(), c);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.n_trials, 1u);
  EXPECT_EQ(r.trials[0].seed, 40u);
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j.at("trials").size(), 1u);
  EXPECT_DOUBLE_EQ(j.at("success_rate").get<double>(),
                   static_cast<double>(j.at("successes").get<int>()) / j.at("n_trials").get<int>());
}

TEST(Evaluate, SameSeedSameReport) {
  EvalConfig c;
  c.n_trials = 3;
  c.seed = 12;
  c.sigma_px = 1.0;
  c.sigma_depth = 0.005;
  c.corruption_rate = 0.5;
  const Scene s = scene_for("hang");
  const auto lib = scripts();
  const auto chain = desk_arm();
  EXPECT_EQ(report_to_json(evaluate(s, lib, chain, c)), report_to_json(evaluate(s, lib, chain, c)));
}

TEST(Evaluate, UnreachableWorkspaceFailsEveryTrial) {
  Scene s = scene_for("insert");
  s.workspace = {{0.70, 0.35, 0.45}, {0.80, 0.45, 0.55}};  // far corner, away from every object
  EvalConfig c;
  c.n_trials = 3;
  const EvalReport r = evaluate(s, scripts(), desk_arm(), c);
  EXPECT_EQ(r.successes, 0u);
  for (const TrialRecord& t : r.trials) {
    EXPECT_TRUE(t.error == "InfeasibleTrajectory" || t.error == "NoFeasibleGrasp") << t.error;
    // The accepted verdict survives the planner failure.
    ASSERT_EQ(t.verdicts.size(), 1u);
    EXPECT_TRUE(t.verdicts[0].accept);
    EXPECT_EQ(t.attempts, 1);
  }
}

TEST(Evaluate, CorruptedTrialsRecoverWithRetries) {
  EvalConfig c;
  c.n_trials = 4;
  c.corruption_rate = 0.5;
  const EvalReport r = evaluate(scene_for("pour"), scripts(), desk_arm(), c);
  std::size_t corrupted = 0;
  for (const TrialRecord& t : r.trials) {
    if (!t.corrupted) continue;
    ++corrupted;
    ASSERT_GE(t.verdicts.size(), 2u);
    EXPECT_FALSE(t.verdicts[0].accept);
    EXPECT_TRUE(t.success) << t.error;
  }
  EXPECT_EQ(corrupted, 2u);
}

TEST(Report, WritesJsonFile) {
  EvalReport r;
  r.task = "pour";
  r.scene = "pour";
  r.n_trials = 2;
  r.successes = 1;
  r.trials.resize(2);
  r.trials[0].success = true;
  r.trials[1].index = 1;
  r.trials[1].error = "PlanningFailed";
  r.config_digest = "0123456789abcdef";
  const auto path = std::filesystem::temp_directory_path() / "flowact_test_report.json";
  write_report(r, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("successes"), 1);
  EXPECT_EQ(j.at("failures"), 1);
  EXPECT_DOUBLE_EQ(j.at("success_rate").get<double>(), 0.5);
  EXPECT_EQ(j.at("config_digest"), "0123456789abcdef");
  EXPECT_EQ(j.at("trials")[1].at("error"), "PlanningFailed");
  std::filesystem::remove(path);
}
