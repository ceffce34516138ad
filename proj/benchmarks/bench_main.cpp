#include "flowact/geometry.hpp"
#include "flowact/kinematics.hpp"
#include "flowact/planner.hpp"
#include "flowact/scene.hpp"
#include "flowact/verify.hpp"
#include "test_util.hpp"

#include <benchmark/benchmark.h>

#include <string>

using namespace flowact;
using geometry::Pose;
using geometry::Vec3;

namespace {

const std::string kData = FLOWACT_DATA_DIR;

void BM_Kabsch(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto cloud = testutil::random_cloud(rng, static_cast<std::size_t>(state.range(0)));
  const auto moved = geometry::transform_points(testutil::random_pose(rng), cloud);
  for (auto _ : state) benchmark::DoNotOptimize(geometry::estimate_rigid_transform(cloud, moved));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Kabsch)->Arg(32)->Arg(256)->Arg(4096);

void BM_FarthestPointSample(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto cloud = testutil::random_cloud(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(geometry::farthest_point_sample(cloud, 64));
}
BENCHMARK(BM_FarthestPointSample)->Arg(1000)->Arg(10000);

void BM_SolvePoseAtT(benchmark::State& state) {
  std::mt19937_64 rng(3);
  planner::PointSet k, target;
  k.points = testutil::random_cloud(rng, 16, 0.1);
  target.points = geometry::transform_points(testutil::random_pose(rng, 0.5), k.points);
  planner::PlanConfig c;
  c.workspace = {{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
  c.rotation = planner::RotationBounds::unrestricted();
  c.w_ik = 0.0;
  c.w_col = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(planner::solve_pose_at_t(k, target, Pose::identity(), c));
}
BENCHMARK(BM_SolvePoseAtT)->Unit(benchmark::kMillisecond);

void BM_SolveIk(benchmark::State& state) {
  const auto chain = kinematics::load_chain(kData + "/chains/desk_arm.json");
  std::mt19937_64 rng(4);
  std::vector<Pose> targets;
  for (int i = 0; i < 64; ++i) {
    kinematics::JointState q(static_cast<Eigen::Index>(chain.size()));
    for (std::size_t j = 0; j < chain.size(); ++j) {
      std::uniform_real_distribution<double> d(chain.joints[j].lower, chain.joints[j].upper);
      q[static_cast<Eigen::Index>(j)] = d(rng);
    }
    targets.push_back(kinematics::forward_kinematics(chain, q));
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kinematics::solve_ik(chain, targets[i++ % targets.size()], chain.neutral()));
}
BENCHMARK(BM_SolveIk)->Unit(benchmark::kMicrosecond);

void BM_RenderGoalState(benchmark::State& state) {
  const sim::Scene scene = sim::load_scene(kData + "/scenes/pour.json");
  const auto& obj = scene.object(scene.task.object);
  const auto rest = scene.world_cloud(obj.name);
  const auto moving = obj.world_cloud();
  const Pose goal = Pose::from_translation({0.0, 0.05, 0.1});
  for (auto _ : state) benchmark::DoNotOptimize(verify::render_goal_state(rest, moving, goal, scene.camera, 2));
}
BENCHMARK(BM_RenderGoalState)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
