#include "flowact/errors.hpp"
#include "flowact/oracle.hpp"
#include "flowact/scene.hpp"
#include "flowact/sim.hpp"
#include "flowact/verify.hpp"
#include "test_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

using namespace flowact;
using namespace flowact::verify;

namespace {

const std::string kData = FLOWACT_DATA_DIR;

sim::Scene scene_for(const std::string& task) { return sim::load_scene(kData + "/scenes/" + task + ".json"); }

std::shared_ptr<const oracle::FlowGenerator> scripted() {
  return std::make_shared<oracle::ScriptedGenerator>(oracle::load_script_library(kData + "/scripts"));
}

kinematics::JointChain desk_arm() { return kinematics::load_chain(kData + "/chains/desk_arm.json"); }

oracle::GeneratorRequest request_for(const sim::Scene& scene, std::uint64_t seed = 0) {
  oracle::GeneratorRequest r;
  r.scene = &scene;
  r.instruction = scene.instruction;
  r.initial_points = sim::object_initial_points(scene, scene.task.object, 8);
  r.seed = seed;
  return r;
}

planner::PlanConfig plan_for(const sim::Scene& scene) {
  planner::PlanConfig c;
  c.workspace = scene.workspace;
  return c;
}

// World goal of the task object predicted by the clean scripted flow.
Pose scripted_object_goal(const sim::Scene& scene) {
  const flow::FlowSequence f = scripted()->generate(request_for(scene));
  return goal_from_flow(f, scene.camera) * scene.object(scene.task.object).pose;
}

sim::ColoredCloud single_point(const Vec3& p, sim::Color c) {
  sim::ColoredCloud cloud;
  cloud.points.push_back(p);
  cloud.colors.push_back(c);
  return cloud;
}

class CountingGenerator : public oracle::FlowGenerator {
 public:
  explicit CountingGenerator(std::shared_ptr<const oracle::FlowGenerator> inner) : inner_(std::move(inner)) {}
  flow::FlowSequence generate(const oracle::GeneratorRequest& r) const override {
    ++calls;
    return inner_->generate(r);
  }
  mutable int calls = 0;

 private:
  std::shared_ptr<const oracle::FlowGenerator> inner_;
};

class MockVerifier {
 public:
  MockVerifier() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockVerifier() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  httplib::Server& server() { return server_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Image small_image() {
  Image img;
  img.width = 4;
  img.height = 3;
  img.rgb.assign(4 * 3 * 3, kBackground);
  img.rgb[0] = 255;
  return img;
}

}  // namespace

TEST(Render, IdentityGoalEqualsPlainRender) {
  const sim::Scene scene = scene_for("pour");
  const auto& obj = scene.object(scene.task.object);
  const sim::ColoredCloud background = scene.world_cloud(obj.name);
  sim::ColoredCloud merged = background;
  merged.append(obj.world_cloud());
  // A point at the camera center has zero depth and is dropped.
  const sim::ColoredCloud nothing = single_point(scene.camera.pose.translation, {0, 0, 0});
  const Image with_goal = render_goal_state(background, obj.world_cloud(), Pose::identity(), scene.camera);
  const Image plain = render_goal_state(merged, nothing, Pose::identity(), scene.camera);
  EXPECT_TRUE(with_goal == plain);
  EXPECT_EQ(with_goal.width, scene.camera.intrinsics.width);
  EXPECT_EQ(with_goal.height, scene.camera.intrinsics.height);
}

TEST(Render, NearerPointWins) {
  sim::Camera cam;
  cam.intrinsics = {100.0, 100.0, 32.0, 24.0, 64, 48};
  const sim::ColoredCloud near = single_point({0.0, 0.0, 1.0}, {255, 0, 0});
  const sim::ColoredCloud far = single_point({0.0, 0.0, 2.0}, {0, 0, 255});
  const Image a = render_goal_state(near, far, Pose::identity(), cam, 0);
  const Image b = render_goal_state(far, near, Pose::identity(), cam, 0);
  EXPECT_EQ(a.at(32, 24), (sim::Color{255, 0, 0}));
  EXPECT_EQ(b.at(32, 24), (sim::Color{255, 0, 0}));
  EXPECT_EQ(a.at(0, 0), (sim::Color{kBackground, kBackground, kBackground}));
}

TEST(Render, SplatRadiusCoversSquare) {
  sim::Camera cam;
  cam.intrinsics = {100.0, 100.0, 32.0, 24.0, 64, 48};
  const Image img = render_goal_state(single_point({0, 0, 1}, {9, 9, 9}), single_point({0, 0, -1}, {1, 1, 1}),
                                      Pose::identity(), cam, 2);
  std::size_t painted = 0;
  for (unsigned v = 0; v < img.height; ++v) {
    for (unsigned u = 0; u < img.width; ++u) painted += img.at(u, v)[0] == 9;
  }
  EXPECT_EQ(painted, 25u);
}

TEST(Render, EmptyRenderThrows) {
  sim::Camera cam;
  cam.intrinsics = {100.0, 100.0, 32.0, 24.0, 64, 48};
  EXPECT_THROW(render_goal_state(single_point({0, 0, -1}, {1, 1, 1}), single_point({50, 0, 1}, {1, 1, 1}),
                                 Pose::identity(), cam),
               EmptyRender);
}

TEST(Render, DeterministicAndPngStable) {
  const sim::Scene scene = scene_for("hang");
  const auto& obj = scene.object(scene.task.object);
  const Pose goal = Pose::from_translation({0.05, 0.02, 0.1});
  const Image a = render_goal_state(scene.world_cloud(obj.name), obj.world_cloud(), goal, scene.camera);
  const Image b = render_goal_state(scene.world_cloud(obj.name), obj.world_cloud(), goal, scene.camera);
  EXPECT_TRUE(a == b);
  const auto png = encode_png(a);
  EXPECT_EQ(png, encode_png(b));
  const std::vector<std::uint8_t> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  ASSERT_GT(png.size(), sig.size());
  EXPECT_TRUE(std::equal(sig.begin(), sig.end(), png.begin()));
}

TEST(Render, PourGoalPutsSpoutOverCupOpening) {
  const sim::Scene scene = scene_for("pour");
  const auto& pot = scene.object("teapot");
  const auto& cup = scene.object("cup");
  const Pose object_goal = scripted_object_goal(scene);
  const Pose goal = object_goal * geometry::invert(pot.pose);
  const Image img = render_goal_state(scene.world_cloud(pot.name), pot.world_cloud(), goal, scene.camera);
  const Image without = render_goal_state(scene.world_cloud(pot.name), single_point(scene.camera.pose.translation, {}),
                                          Pose::identity(), scene.camera);

  const Pose to_cam = geometry::invert(scene.camera.pose);
  const auto& k = scene.camera.intrinsics;
  const Vec3 center = cup.anchor_world("opening");
  const Vec3 spout = object_goal.apply(pot.anchor("spout"));
  // Pixel region of the column above the opening, from the rim up to the spout height.
  double u_lo = 1e9, u_hi = -1e9, v_lo = 1e9, v_hi = -1e9;
  for (const double dz : {0.0, spout.z() - center.z()}) {
    for (int i = 0; i < 64; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 64.0;
      const Vec3 rim = center + Vec3(0.03 * std::cos(a), 0.03 * std::sin(a), dz);
      const auto px = geometry::project(k, to_cam.apply(rim));
      u_lo = std::min(u_lo, px.u);
      u_hi = std::max(u_hi, px.u);
      v_lo = std::min(v_lo, px.v);
      v_hi = std::max(v_hi, px.v);
    }
  }
  ASSERT_GT(spout.z(), center.z());
  const auto sp = geometry::project(k, to_cam.apply(spout));
  EXPECT_GE(sp.u, u_lo);
  EXPECT_LE(sp.u, u_hi);
  EXPECT_GE(sp.v, v_lo);
  EXPECT_LE(sp.v, v_hi);
  const auto u = static_cast<unsigned>(std::lround(sp.u));
  const auto v = static_cast<unsigned>(std::lround(sp.v));
  EXPECT_NE(img.at(u, v), without.at(u, v)) << "the teapot is drawn at the spout pixel";
}

TEST(Png, WritesFile) {
  const auto path = std::filesystem::temp_directory_path() / "flowact_test_goal.png";
  write_png(small_image(), path);
  EXPECT_GT(std::filesystem::file_size(path), 8u);
  std::filesystem::remove(path);
  EXPECT_THROW(write_png(small_image(), "/nonexistent/dir/goal.png"), IoError);
}

TEST(Base64, KnownVectors) {
  auto b = [](const std::string& s) { return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
  EXPECT_EQ(b(""), "");
  EXPECT_EQ(b("f"), "Zg==");
  EXPECT_EQ(b("fo"), "Zm8=");
  EXPECT_EQ(b("foobar"), "Zm9vYmFy");
}

TEST(GeometricVerify, DrawerExtendedAlongAxisAccepts) {
  const sim::Scene scene = scene_for("drawer");
  const auto& drawer = scene.object(scene.task.object);
  const Vec3 axis = drawer.direction_world("axis");
  const Pose goal = Pose::from_translation(axis * (scene.task.drawer_extension + 0.01)) * drawer.pose;
  const Verdict v = geometric_verify(goal, scene, scene.task);
  EXPECT_TRUE(v.accept) << v.reason;
}

TEST(GeometricVerify, PourSpoutTenCentimetersOffRejects) {
  const sim::Scene scene = scene_for("pour");
  const Pose good = scripted_object_goal(scene);
  ASSERT_TRUE(geometric_verify(good, scene, scene.task).accept);
  const Pose off = Pose::from_translation({0.10, 0.0, 0.0}) * good;
  const Verdict v = geometric_verify(off, scene, scene.task);
  EXPECT_FALSE(v.accept);
  EXPECT_NE(v.reason.find("spout is 0.1"), std::string::npos) << v.reason;
}

TEST(GeometricVerify, IdentityGoalRejectsEveryTask) {
  for (const std::string& task : sim::task_names()) {
    const sim::Scene scene = scene_for(task);
    const Verdict v = geometric_verify(scene.object(scene.task.object).pose, scene, scene.task);
    EXPECT_FALSE(v.accept) << task;
    EXPECT_FALSE(v.reason.empty());
  }
}

TEST(GeometricVerify, UnknownTaskThrows) {
  const sim::Scene scene = scene_for("drawer");
  sim::TaskSpec spec = scene.task;
  spec.name = "juggle";
  EXPECT_THROW(geometric_verify(scene.object(spec.object).pose, scene, spec), UnknownTask);
}

TEST(GeometricVerify, AgreesWithExecutedCheck) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const std::string& task : sim::task_names()) {
    const sim::Scene scene = scene_for(task);
    const auto& obj = scene.object(scene.task.object);
    const Pose nominal = scripted_object_goal(scene);
    const Pose grasp = obj.world_grasps().front().pose;
    int accepted = 0;
    for (int i = 0; i < 50; ++i) {
      const double scale = i % 2 == 0 ? 0.2 : 1.0;
      const Vec3 dt = scale * 0.03 * Vec3(unit(rng), unit(rng), unit(rng));
      const Vec3 dr = scale * 0.25 * Vec3(unit(rng), unit(rng), unit(rng));
      const Pose object_goal = Pose{dt, geometry::Rotation::from_rotation_vector(dr)} * nominal;
      const Verdict hypothetical = geometric_verify(object_goal, scene, scene.task);

      // Move the object there with a gripper.
      const Pose motion = object_goal * geometry::invert(obj.pose);
      planner::Trajectory traj;
      traj.steps.push_back({0.0, grasp, planner::GripperCommand::close});
      traj.steps.push_back({0.1, motion * grasp, planner::GripperCommand::hold});
      traj.steps.push_back({0.2, motion * grasp, planner::GripperCommand::open});
      const sim::Scene moved = sim::execute(scene, traj, obj.name);
      const sim::SuccessResult executed = sim::check_success(moved, moved.task);
      EXPECT_EQ(hypothetical.accept, executed.success) << task << " goal " << i << ": " << hypothetical.reason;
      accepted += hypothetical.accept;
    }
    EXPECT_GT(accepted, 0) << task;
    EXPECT_LT(accepted, 50) << task;
  }
}

TEST(ExternalVerify, MockAccept) {
  MockVerifier mock;
  nlohmann::json seen;
  mock.server().Post("/verify", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"verdict": "accept", "reason": "looks right"})", "application/json");
  });
  const Image img = small_image();
  const Verdict v = external_verify(mock.endpoint("/verify"), img, "pour tea into the cup", 5.0);
  EXPECT_TRUE(v.accept);
  EXPECT_EQ(v.reason, "looks right");
  EXPECT_EQ(seen.at("schema"), kVerifySchema);
  EXPECT_EQ(seen.at("instruction"), "pour tea into the cup");
  EXPECT_EQ(seen.at("image_png_base64"), base64_encode(encode_png(img)));
}

TEST(ExternalVerify, MockReject) {
  MockVerifier mock;
  mock.server().Post("/v", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"verdict": "reject", "reason": "spout misses the cup"})", "application/json");
  });
  const Verdict v = external_verify(mock.endpoint("/v"), small_image(), "pour", 5.0);
  EXPECT_FALSE(v.accept);
  EXPECT_EQ(v.reason, "spout misses the cup");
}

TEST(ExternalVerify, MalformedBodyRejectsWithParseReason) {
  MockVerifier mock;
  mock.server().Post("/v", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>oops</html>", "text/html");
  });
  mock.server().Post("/missing", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"reason": "no verdict"})", "application/json");
  });
  const Verdict a = external_verify(mock.endpoint("/v"), small_image(), "pour", 5.0);
  EXPECT_FALSE(a.accept);
  EXPECT_NE(a.reason.find("parse"), std::string::npos) << a.reason;
  const Verdict b = external_verify(mock.endpoint("/missing"), small_image(), "pour", 5.0);
  EXPECT_FALSE(b.accept);
  EXPECT_FALSE(b.reason.empty());
}

TEST(ExternalVerify, Non200Rejects) {
  MockVerifier mock;
  mock.server().Post("/v", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content(R"({"verdict": "accept", "reason": "ignored"})", "application/json");
  });
  const Verdict v = external_verify(mock.endpoint("/v"), small_image(), "pour", 5.0);
  EXPECT_FALSE(v.accept);
  EXPECT_NE(v.reason.find("500"), std::string::npos) << v.reason;
}

TEST(ExternalVerify, UnreachableIsTransportFailure) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  const Verdict v = external_verify("http://127.0.0.1:" + std::to_string(port) + "/v", small_image(), "pour", 1.0);
  EXPECT_FALSE(v.accept);
  EXPECT_NE(v.reason.find("transport failure"), std::string::npos) << v.reason;
}

TEST(ExternalVerify, TimeoutIsTransportFailure) {
  MockVerifier mock;
  mock.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(R"({"verdict": "accept", "reason": "late"})", "application/json");
  });
  const Verdict v = external_verify(mock.endpoint("/slow"), small_image(), "pour", 0.3);
  EXPECT_FALSE(v.accept);
  EXPECT_NE(v.reason.find("transport failure"), std::string::npos) << v.reason;
}

TEST(Corruption, DirectionIsUnitWithUpwardElevation) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Vec3 d = corruption_direction(seed);
    EXPECT_NEAR(d.norm(), 1.0, 1e-12);
    const double elevation = std::asin(std::clamp(d.z(), -1.0, 1.0));
    EXPECT_GE(elevation, std::numbers::pi / 6 - 1e-12);
    EXPECT_LE(elevation, std::numbers::pi / 2 + 1e-12);
  }
  EXPECT_EQ(corruption_direction(3), corruption_direction(3));
}

TEST(Corruption, ScheduleSpreadsRate) {
  auto count = [](double rate, std::size_t n) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += corruption_scheduled(i, rate);
    return c;
  };
  EXPECT_EQ(count(0.0, 40), 0u);
  EXPECT_EQ(count(1.0, 40), 40u);
  EXPECT_EQ(count(0.5, 40), 20u);
  EXPECT_EQ(count(0.5, 10), 5u);
  EXPECT_EQ(count(0.25, 40), 10u);
}

TEST(Corruption, DisplacesGoalByConfiguredDistance) {
  const sim::Scene scene = scene_for("insert");
  const auto inner = scripted();
  const CorruptingGenerator gen(inner, {0}, 0.10);
  EXPECT_TRUE(gen.corrupts(0));
  EXPECT_FALSE(gen.corrupts(1));
  const auto req = request_for(scene, 5);
  const Pose clean = goal_from_flow(inner->resample(req, 0), scene.camera);
  const Pose bad = goal_from_flow(gen.resample(req, 0), scene.camera);
  EXPECT_NEAR((bad.translation - clean.translation).norm(), 0.10, 1e-6);
  EXPECT_LT(testutil::pose_rotation_error(bad, clean), 1e-6);
  const Pose later = goal_from_flow(gen.resample(req, 1), scene.camera);
  EXPECT_LT(testutil::pose_translation_error(later, goal_from_flow(inner->resample(req, 1), scene.camera)), 1e-12);
}

TEST(GoalFromFlow, MatchesScriptedFinalPose) {
  const auto lib = oracle::load_script_library(kData + "/scripts");
  for (const std::string& task : sim::task_names()) {
    const sim::Scene scene = scene_for(task);
    const auto poses = oracle::object_trajectory(lib.at(task), scene, 32);
    const Pose predicted = scripted_object_goal(scene);
    EXPECT_LT(testutil::pose_translation_error(predicted, poses.back()), 1e-6) << task;
    EXPECT_LT(testutil::pose_rotation_error(predicted, poses.back()), 1e-6) << task;
  }
}

TEST(ClosedLoop, CleanFlowAcceptedOnFirstAttempt) {
  const sim::Scene scene = scene_for("drawer");
  const auto chain = desk_arm();
  const ClosedLoopResult r =
      closed_loop_plan(*scripted(), request_for(scene), scene, chain, plan_for(scene), GeometricVerifier{});
  EXPECT_EQ(r.attempts, 1);
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_TRUE(r.verdicts[0].accept);
  EXPECT_FALSE(r.trajectory.steps.empty());
  EXPECT_EQ(r.goal_image.width, scene.camera.intrinsics.width);
}

TEST(ClosedLoop, OneCorruptedAttemptThenSuccess) {
  for (const std::string& task : sim::task_names()) {
    const sim::Scene scene = scene_for(task);
    const auto chain = desk_arm();
    const CorruptingGenerator gen(scripted(), {0});
    const ClosedLoopResult r =
        closed_loop_plan(gen, request_for(scene, 9), scene, chain, plan_for(scene), GeometricVerifier{});
    EXPECT_EQ(r.attempts, 2) << task;
    ASSERT_EQ(r.verdicts.size(), 2u) << task;
    EXPECT_FALSE(r.verdicts[0].accept);
    EXPECT_FALSE(r.verdicts[0].reason.empty());
    EXPECT_TRUE(r.verdicts[1].accept);
  }
}

TEST(ClosedLoop, NoRetriesFailsWithOneVerdict) {
  const sim::Scene scene = scene_for("pour");
  const CorruptingGenerator gen(scripted(), {0});
  try {
    closed_loop_plan(gen, request_for(scene), scene, desk_arm(), plan_for(scene), GeometricVerifier{}, {0, 2});
    FAIL() << "expected PlanningFailed";
  } catch (const PlanningFailed& e) {
    ASSERT_EQ(e.verdicts().size(), 1u);
    EXPECT_FALSE(e.verdicts()[0].accept);
  }
}

TEST(ClosedLoop, AtMostRetriesPlusOneGeneratorCalls) {
  const sim::Scene scene = scene_for("hang");
  for (int retries = 0; retries <= 3; ++retries) {
    auto always_bad = std::make_shared<CorruptingGenerator>(scripted(), std::vector<int>{0, 1, 2, 3, 4, 5});
    const CountingGenerator counting(always_bad);
    EXPECT_THROW(closed_loop_plan(counting, request_for(scene), scene, desk_arm(), plan_for(scene),
                                  GeometricVerifier{}, {retries, 2}),
                 PlanningFailed);
    EXPECT_EQ(counting.calls, retries + 1);
  }
}

TEST(ClosedLoop, ExternalVerifierThroughMock) {
  MockVerifier mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v", [&](const httplib::Request&, httplib::Response& res) {
    const bool accept = calls.fetch_add(1) > 0;
    res.set_content(accept ? R"({"verdict": "accept", "reason": "ok"})" : R"({"verdict": "reject", "reason": "no"})",
                    "application/json");
  });
  const sim::Scene scene = scene_for("drawer");
  const ClosedLoopResult r = closed_loop_plan(*scripted(), request_for(scene), scene, desk_arm(), plan_for(scene),
                                              ExternalVerifier(mock.endpoint("/v"), 5.0));
  EXPECT_EQ(r.attempts, 2);
  EXPECT_EQ(calls.load(), 2);
}
