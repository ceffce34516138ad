#include "flowact/geometry.hpp"

#include "flowact/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace flowact::geometry {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

double wrap_pi(double a) {
  // Map into (-pi, pi].
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    q_ = Eigen::Quaterniond::Identity();
    return;
  }
  q_.coeffs() /= n;
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  return Rotation(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) { return Rotation(q); }

Rotation Rotation::from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
}

Rotation Rotation::from_rotation_vector(const Vec3& v) {
  const double theta = v.norm();
  if (theta < 1e-12) {
    // First-order expansion keeps the map smooth through zero.
    return Rotation(Eigen::Quaterniond(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z()));
  }
  return from_axis_angle(v / theta, theta);
}

Vec3 Rotation::rotation_vector() const {
  const Vec3 im = q_.vec();
  const double n = im.norm();
  if (n < 1e-12) return 2.0 * im / q_.w();
  const double theta = 2.0 * std::atan2(n, q_.w());
  return im * (theta / n);
}

double Rotation::angle() const { return 2.0 * std::atan2(q_.vec().norm(), q_.w()); }

double angle_between(const Rotation& a, const Rotation& b) { return (a.inverse() * b).angle(); }

Pose Pose::from_matrix(const Mat4& m) {
  return {m.block<3, 1>(0, 3), Rotation::from_matrix(m.block<3, 3>(0, 0))};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation.matrix();
  m.block<3, 1>(0, 3) = translation;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation.apply(b.translation) + a.translation, a.rotation * b.rotation};
}

Pose invert(const Pose& p) {
  const Rotation inv = p.rotation.inverse();
  return {-inv.apply(p.translation), inv};
}

Pose se3_exp(const Twist& xi) {
  const double theta = xi.angular.norm();
  const Mat3 w = skew(xi.angular);
  Mat3 v;
  if (theta < 1e-8) {
    v = Mat3::Identity() + 0.5 * w + w * w / 6.0;
  } else {
    const double t2 = theta * theta;
    v = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w +
        (theta - std::sin(theta)) / (t2 * theta) * w * w;
  }
  return {v * xi.linear, Rotation::from_rotation_vector(xi.angular)};
}

Twist se3_log(const Pose& p) {
  const Vec3 omega = p.rotation.rotation_vector();
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  Mat3 v_inv;
  if (theta < 1e-8) {
    v_inv = Mat3::Identity() - 0.5 * w + w * w / 12.0;
  } else {
    const double half = 0.5 * theta;
    const double coef = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    v_inv = Mat3::Identity() - 0.5 * w + coef * w * w;
  }
  return {v_inv * p.translation, omega};
}

Pose interpolate_screw(const Pose& a, const Pose& b, double s) {
  const Twist xi = se3_log(compose(b, invert(a)));
  return compose(se3_exp({s * xi.linear, s * xi.angular}), a);
}

Rotation euler_to_rotation(const EulerXYZ& e) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(e.rz, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(e.ry, Vec3::UnitY()) *
                               Eigen::AngleAxisd(e.rx, Vec3::UnitX());
  return Rotation::from_quaternion(q);
}

EulerXYZ rotation_to_euler(const Rotation& r) {
  const Mat3 m = r.matrix();
  EulerXYZ e;
  const double s = std::clamp(-m(2, 0), -1.0, 1.0);
  e.ry = std::asin(s);
  const double c = std::hypot(m(0, 0), m(1, 0));
  if (c > 1e-9) {
    e.rx = std::atan2(m(2, 1), m(2, 2));
    e.rz = std::atan2(m(1, 0), m(0, 0));
  } else {
    e.rx = 0.0;
    e.rz = std::atan2(-m(0, 1), m(1, 1));
  }
  e.rx = wrap_pi(e.rx);
  e.rz = wrap_pi(e.rz);
  return e;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera focal lengths must be positive");
  if (width == 0 || height == 0) throw InvalidArgument("camera image size must be nonzero");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InvalidArgument("camera principal point must lie inside the image");
  }
}

PixelDepth project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > 0.0)) throw BehindCamera("point is not in front of the camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

Vec3 unproject(const CameraIntrinsics& k, double u, double v, double depth) {
  if (!(depth > 0.0)) throw NonPositiveDepth("depth must be positive, got " + std::to_string(depth));
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

Pose estimate_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst,
                              std::span<const double> weights) {
  if (src.size() != dst.size()) {
    throw SizeMismatch("point sets differ in size: " + std::to_string(src.size()) + " vs " +
                       std::to_string(dst.size()));
  }
  if (!weights.empty() && weights.size() != src.size()) {
    throw SizeMismatch("weight count does not match point count");
  }
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  double total = 0.0;
  std::size_t used = 0;
  Vec3 src_c = Vec3::Zero();
  Vec3 dst_c = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weight(i);
    if (!(w > 0.0)) continue;
    total += w;
    ++used;
    src_c += w * src[i];
    dst_c += w * dst[i];
  }
  if (used < 3) throw DegenerateInput("rigid registration needs at least 3 weighted points");
  src_c /= total;
  dst_c /= total;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weight(i);
    if (!(w > 0.0)) continue;
    h += w * (src[i] - src_c) * (dst[i] - dst_c).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  if (!(sigma(0) > 0.0) || sigma(1) <= 1e-10 * sigma(0)) {
    throw DegenerateInput("points are collinear or coincident");
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();

  Pose out;
  out.rotation = Rotation::from_matrix(r);
  out.translation = dst_c - out.rotation.apply(src_c);
  return out;
}

Pose estimate_rigid_transform(const PointSet& src, const PointSet& dst) {
  std::vector<double> w;
  if (src.weighted() || dst.weighted()) {
    w.assign(src.size(), 1.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src.weighted() && i < src.weights.size()) w[i] *= src.weights[i];
      if (dst.weighted() && i < dst.weights.size()) w[i] *= dst.weights[i];
    }
  }
  return estimate_rigid_transform(src.points, dst.points, w);
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t n,
                                               std::size_t start_index) {
  if (n < 1 || n > points.size()) {
    throw InvalidCount("cannot sample " + std::to_string(n) + " of " +
                       std::to_string(points.size()) + " points");
  }
  if (start_index >= points.size()) throw IndexOutOfRange("FPS start index out of range");

  std::vector<std::size_t> picked;
  picked.reserve(n);
  std::vector<double> min_d2(points.size(), std::numeric_limits<double>::infinity());
  std::size_t current = start_index;
  for (std::size_t k = 0; k < n; ++k) {
    picked.push_back(current);
    min_d2[current] = -1.0;
    std::size_t best = 0;
    double best_d2 = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (min_d2[i] < 0.0) continue;
      min_d2[i] = std::min(min_d2[i], (points[i] - points[current]).squaredNorm());
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(world_up);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {eye, Rotation::from_matrix(r)};
}

std::vector<Vec3> transform_points(const Pose& p, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& q : points) out.push_back(p.apply(q));
  return out;
}

}  // namespace flowact::geometry
