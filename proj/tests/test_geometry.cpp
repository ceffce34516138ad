#include "flowact/errors.hpp"
#include "flowact/geometry.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

using namespace flowact;
using namespace flowact::geometry;
using testutil::random_cloud;
using testutil::random_pose;
using testutil::random_rotation;

namespace {

constexpr double kPi = std::numbers::pi;

// Textbook 3x3 product R = Rz Ry Rx built from elementary matrices.
Mat3 euler_matrix(double rx, double ry, double rz) {
  Mat3 x, y, z;
  x << 1, 0, 0, 0, std::cos(rx), -std::sin(rx), 0, std::sin(rx), std::cos(rx);
  y << std::cos(ry), 0, std::sin(ry), 0, 1, 0, -std::sin(ry), 0, std::cos(ry);
  z << std::cos(rz), -std::sin(rz), 0, std::sin(rz), std::cos(rz), 0, 0, 0, 1;
  return z * y * x;
}

double min_pairwise(const std::vector<Vec3>& pts, const std::vector<std::size_t>& idx) {
  double best = 1e300;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j) best = std::min(best, (pts[idx[i]] - pts[idx[j]]).norm());
  return best;
}

}  // namespace

TEST(Rotation, CanonicalAndUnitNorm) {
  const Rotation r = Rotation::from_quaternion(-2.0, 0.4, -1.0, 0.2);
  EXPECT_GE(r.quaternion().w(), 0.0);
  EXPECT_NEAR(r.quaternion().norm(), 1.0, 1e-12);
}

TEST(Rotation, RotationVectorRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const Rotation r = random_rotation(rng);
    const Rotation back = Rotation::from_rotation_vector(r.rotation_vector());
    EXPECT_LT(angle_between(r, back), 1e-9);
    EXPECT_LE(r.angle(), kPi + 1e-12);
  }
}

TEST(Pose, ComposeExamples) {
  const Pose p = Pose::from_translation({1, 0, 0}) * Pose::from_translation({0, 2, 0});
  EXPECT_LT((p.translation - Vec3(1, 2, 0)).norm(), 1e-15);
  std::mt19937_64 rng(1);
  const Pose q = random_pose(rng);
  const Pose id = Pose::identity() * q;
  EXPECT_LT(testutil::pose_translation_error(id, q), 1e-12);
  const Pose z = q * invert(q);
  EXPECT_LT(z.translation.norm(), 1e-9);
  EXPECT_LT(z.rotation.angle(), 1e-9);
}

TEST(Pose, ComposeAppliesRightOperandFirst) {
  const Pose rot{Vec3::Zero(), Rotation::from_axis_angle(Vec3::UnitZ(), kPi / 2)};
  const Pose shift = Pose::from_translation({1, 0, 0});
  const Vec3 p = (rot * shift).apply(Vec3::Zero());
  EXPECT_LT((p - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(Pose, GroupAxiomsOnRandomSamples) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose l = (a * b) * c, r = a * (b * c);
    EXPECT_LT(testutil::pose_translation_error(l, r), 1e-9);
    EXPECT_LT(testutil::pose_rotation_error(l, r), 1e-9);
    const Pose e = invert(a) * a;
    EXPECT_LT(e.translation.norm(), 1e-9);
    EXPECT_LT(e.rotation.angle(), 1e-9);
  }
}

TEST(Pose, MatrixRoundTrip) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = Pose::from_matrix(a.matrix());
    EXPECT_LT(testutil::pose_translation_error(a, b), 1e-12);
    EXPECT_LT(testutil::pose_rotation_error(a, b), 1e-9);
  }
}

TEST(Screw, ExpLogRoundTripAndEndpoints) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose back = se3_exp(se3_log(a));
    EXPECT_LT(testutil::pose_translation_error(a, back), 1e-9);
    EXPECT_LT(testutil::pose_rotation_error(a, back), 1e-9);
    const Pose s0 = interpolate_screw(a, b, 0.0), s1 = interpolate_screw(a, b, 1.0);
    EXPECT_LT(testutil::pose_translation_error(s0, a), 1e-9);
    EXPECT_LT(testutil::pose_translation_error(s1, b), 1e-9);
    EXPECT_LT(testutil::pose_rotation_error(s1, b), 1e-9);
  }
}

TEST(Screw, ConstantTwistHalfStepsCompose) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose half = interpolate_screw(a, b, 0.5);
    // Two equal steps of the relative motion reproduce the full motion.
    const Pose step = half * invert(a);
    const Pose full = step * step * a;
    EXPECT_LT(testutil::pose_translation_error(full, b), 1e-8);
    EXPECT_LT(testutil::pose_rotation_error(full, b), 1e-8);
  }
}

TEST(Euler, Examples) {
  EXPECT_LT(euler_to_rotation({0, 0, 0}).angle(), 1e-15);
  const Rotation r = euler_to_rotation({0, 0, kPi / 2});
  EXPECT_LT((r.apply(Vec3::UnitX()) - Vec3::UnitY()).norm(), 1e-12);
}

TEST(Euler, MatchesElementaryMatrixProduct) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(-kPi, kPi);
  for (int i = 0; i < 200; ++i) {
    const double rx = d(rng), ry = d(rng) / 2, rz = d(rng);
    EXPECT_LT((euler_to_rotation({rx, ry, rz}).matrix() - euler_matrix(rx, ry, rz)).norm(), 1e-12);
  }
}

TEST(Euler, RoundTripIsFixedPointAfterOneCycle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Rotation r = random_rotation(rng);
    const EulerXYZ e = rotation_to_euler(r);
    EXPECT_GT(e.rx, -kPi);
    EXPECT_LE(e.rx, kPi);
    EXPECT_GE(e.ry, -kPi / 2);
    EXPECT_LE(e.ry, kPi / 2);
    const Rotation r2 = euler_to_rotation(e);
    EXPECT_LT(angle_between(r, r2), 1e-9);
    const EulerXYZ e2 = rotation_to_euler(r2);
    EXPECT_NEAR(e.rx, e2.rx, 1e-9);
    EXPECT_NEAR(e.ry, e2.ry, 1e-9);
    EXPECT_NEAR(e.rz, e2.rz, 1e-9);
  }
}

TEST(Euler, GimbalLockSetsRollToZero) {
  const Rotation r = euler_to_rotation({0.7, kPi / 2, -0.3});
  const EulerXYZ e = rotation_to_euler(r);
  EXPECT_EQ(e.rx, 0.0);
  EXPECT_LT(angle_between(euler_to_rotation(e), r), 1e-9);
}

TEST(Camera, ProjectExamples) {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  const PixelDepth a = project(k, {0, 0, 1});
  EXPECT_DOUBLE_EQ(a.u, 50);
  EXPECT_DOUBLE_EQ(a.v, 50);
  EXPECT_DOUBLE_EQ(a.depth, 1);
  const PixelDepth b = project(k, {1, 0, 1});
  EXPECT_DOUBLE_EQ(b.u, 150);
  EXPECT_DOUBLE_EQ(b.v, 50);
  EXPECT_THROW(project(k, {0, 0, 0}), BehindCamera);
  EXPECT_THROW(project(k, {0, 0, -1}), BehindCamera);
  EXPECT_LT((unproject(k, 50, 50, 1) - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((unproject(k, 150, 50, 1) - Vec3(1, 0, 1)).norm(), 1e-15);
  EXPECT_THROW(unproject(k, 1, 1, 0.0), NonPositiveDepth);
}

TEST(Camera, RoundTrip) {
  const CameraIntrinsics k{520, 515, 319.5, 241, 640, 480};
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> xy(-2, 2), z(0.1, 5);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(xy(rng), xy(rng), z(rng));
    const PixelDepth pd = project(k, p);
    EXPECT_LT((unproject(k, pd.u, pd.v, pd.depth) - p).norm(), 1e-9);
    const Vec3 q = unproject(k, pd.u, pd.v, pd.depth);
    const PixelDepth pd2 = project(k, q);
    EXPECT_NEAR(pd2.u, pd.u, 1e-9);
    EXPECT_NEAR(pd2.v, pd.v, 1e-9);
  }
}

TEST(Camera, ValidateRejectsBadIntrinsics) {
  EXPECT_THROW((CameraIntrinsics{0, 1, 0, 0, 10, 10}.validate()), InvalidArgument);
  EXPECT_THROW((CameraIntrinsics{1, 1, 10, 0, 10, 10}.validate()), InvalidArgument);
  EXPECT_NO_THROW((CameraIntrinsics{1, 1, 9.5, 0, 10, 10}.validate()));
}

TEST(Camera, LookAtPointsOpticalAxisAtTarget) {
  const Vec3 eye(0.5, -0.7, 0.6), target(0.4, 0.1, 0.05);
  const Pose cam = look_at(eye, target);
  const Vec3 in_cam = invert(cam).apply(target);
  EXPECT_NEAR(in_cam.x(), 0.0, 1e-12);
  EXPECT_NEAR(in_cam.y(), 0.0, 1e-12);
  EXPECT_GT(in_cam.z(), 0.0);
  // World up maps to image up (negative v).
  const Vec3 above = invert(cam).apply(target + Vec3(0, 0, 0.1));
  EXPECT_LT(above.y(), 0.0);
}

TEST(Kabsch, Examples) {
  const std::vector<Vec3> src{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_LT(estimate_rigid_transform(src, src).rotation.angle(), 1e-12);

  std::vector<Vec3> shifted;
  for (const auto& p : src) shifted.push_back(p + Vec3(1, 0, 0));
  const Pose t = estimate_rigid_transform(src, shifted);
  EXPECT_LT((t.translation - Vec3(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT(t.rotation.angle(), 1e-12);

  const Rotation rz = Rotation::from_axis_angle(Vec3::UnitZ(), kPi / 2);
  std::vector<Vec3> rotated;
  for (const auto& p : src) rotated.push_back(rz.apply(p));
  const Pose r = estimate_rigid_transform(src, rotated);
  EXPECT_LT((r.rotation.apply(Vec3::UnitX()) - Vec3::UnitY()).norm(), 1e-9);
  EXPECT_LT(r.translation.norm(), 1e-9);
}

TEST(Kabsch, RecoversRandomPoses) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    const Pose truth = random_pose(rng, 2.0);
    const auto src = random_cloud(rng, 32);
    const auto dst = transform_points(truth, src);
    const Pose est = estimate_rigid_transform(src, dst);
    ASSERT_LT(testutil::pose_rotation_error(est, truth), 1e-9);
    ASSERT_LT(testutil::pose_translation_error(est, truth), 1e-9);
    ASSERT_NEAR(est.rotation.matrix().determinant(), 1.0, 1e-9);
  }
}

TEST(Kabsch, MirrorImageStillGivesProperRotation) {
  std::mt19937_64 rng(29);
  const auto src = random_cloud(rng, 20);
  std::vector<Vec3> mirrored;
  for (const auto& p : src) mirrored.emplace_back(-p.x(), p.y(), p.z());
  const Pose est = estimate_rigid_transform(src, mirrored);
  EXPECT_NEAR(est.rotation.matrix().determinant(), 1.0, 1e-9);
}

TEST(Kabsch, EquivariantUnderCommonTransform) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const Pose g = random_pose(rng);
    const auto src = random_cloud(rng, 12);
    auto dst = transform_points(random_pose(rng), src);
    for (auto& p : dst) p += testutil::random_vec(rng, -0.05, 0.05);
    const Pose t = estimate_rigid_transform(src, dst);
    const Pose tg = estimate_rigid_transform(transform_points(g, src), transform_points(g, dst));
    const Pose expected = g * t * invert(g);
    EXPECT_LT(testutil::pose_translation_error(tg, expected), 1e-8);
    EXPECT_LT(testutil::pose_rotation_error(tg, expected), 1e-8);
  }
}

TEST(Kabsch, ZeroWeightPointsAreIgnored) {
  std::mt19937_64 rng(37);
  const Pose truth = random_pose(rng);
  auto src = random_cloud(rng, 10);
  auto dst = transform_points(truth, src);
  src.push_back({5, 5, 5});
  dst.push_back({-40, 12, 3});
  std::vector<double> w(src.size(), 1.0);
  w.back() = 0.0;
  const Pose est = estimate_rigid_transform(src, dst, w);
  EXPECT_LT(testutil::pose_rotation_error(est, truth), 1e-9);
  EXPECT_LT(testutil::pose_translation_error(est, truth), 1e-9);

  PointSet a{src, w}, b{dst, {}};
  const Pose est2 = estimate_rigid_transform(a, b);
  EXPECT_LT(testutil::pose_translation_error(est2, truth), 1e-9);
}

TEST(Kabsch, WeightedMatchesBruteForceObjective) {
  // Weighted optimum: perturbing the estimate never lowers the weighted objective.
  std::mt19937_64 rng(41);
  const auto src = random_cloud(rng, 15);
  auto dst = transform_points(random_pose(rng), src);
  std::uniform_real_distribution<double> wd(0.1, 1.0);
  std::vector<double> w;
  for (auto& p : dst) {
    p += testutil::random_vec(rng, -0.1, 0.1);
    w.push_back(wd(rng));
  }
  auto objective = [&](const Pose& t) {
    double s = 0;
    for (std::size_t i = 0; i < src.size(); ++i) s += w[i] * (t.apply(src[i]) - dst[i]).squaredNorm();
    return s;
  };
  const Pose est = estimate_rigid_transform(src, dst, w);
  const double best = objective(est);
  for (int i = 0; i < 500; ++i) {
    const Pose d{testutil::random_vec(rng, -1e-3, 1e-3),
                 Rotation::from_rotation_vector(testutil::random_vec(rng, -1e-3, 1e-3))};
    EXPECT_GE(objective(d * est), best - 1e-12);
  }
}

TEST(Kabsch, Errors) {
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(estimate_rigid_transform(two, two), DegenerateInput);
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_THROW(estimate_rigid_transform(line, line), DegenerateInput);
  const std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(estimate_rigid_transform(three, two), SizeMismatch);
  const std::vector<double> w{1.0, 1.0, 0.0};
  EXPECT_THROW(estimate_rigid_transform(three, three, w), DegenerateInput);
}

TEST(Fps, Examples) {
  const std::vector<Vec3> square{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  EXPECT_EQ(farthest_point_sample(square, 2, 0), (std::vector<std::size_t>{0, 3}));
  const auto all = farthest_point_sample(square, 4, 0);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 3, 1, 2}));
  EXPECT_THROW(farthest_point_sample(square, 0, 0), InvalidCount);
  EXPECT_THROW(farthest_point_sample(square, 5, 0), InvalidCount);
  EXPECT_THROW(farthest_point_sample(square, 2, 4), IndexOutOfRange);
}

TEST(Fps, BeatsRandomSubsets) {
  std::mt19937_64 rng(43);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = random_cloud(rng, 100);
    const auto fps = farthest_point_sample(pts, 16, 0);
    std::vector<std::size_t> perm(pts.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(16);
    if (min_pairwise(pts, fps) >= min_pairwise(pts, perm)) ++wins;
  }
  EXPECT_GE(wins, 99);
}

TEST(Fps, DeterministicAndDistinct) {
  std::mt19937_64 rng(47);
  const auto pts = random_cloud(rng, 64);
  const auto a = farthest_point_sample(pts, 20, 5);
  const auto b = farthest_point_sample(pts, 20, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.front(), 5u);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
}
