#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace flowact::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Unit quaternion rotation, canonicalized so that w >= 0.
class Rotation {
 public:
  Rotation() = default;

  static Rotation identity() { return Rotation(); }
  /// Normalizes and canonicalizes (w, x, y, z).
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);
  static Rotation from_matrix(const Mat3& m);
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  /// Exponential map of a rotation vector (axis * angle).
  static Rotation from_rotation_vector(const Vec3& v);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  /// Logarithm map; the returned angle lies in [0, pi].
  Vec3 rotation_vector() const;
  double angle() const;

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Vec3 apply(const Vec3& v) const { return q_ * v; }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

 private:
  explicit Rotation(const Eigen::Quaterniond& q);
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Angle of the relative rotation a^-1 b, in [0, pi].
double angle_between(const Rotation& a, const Rotation& b);

/// Rigid transform: x -> rotation * x + translation.
struct Pose {
  Vec3 translation = Vec3::Zero();
  Rotation rotation;

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {t, Rotation::identity()}; }
  static Pose from_matrix(const Mat4& m);

  Vec3 apply(const Vec3& p) const { return rotation.apply(p) + translation; }
  Mat4 matrix() const;
};

/// a ∘ b: applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Twist (v, w) of the SE(3) exponential coordinates.
struct Twist {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
};

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& p);
/// Constant-twist interpolation from a (s = 0) to b (s = 1) along the world-frame screw b a^-1.
Pose interpolate_screw(const Pose& a, const Pose& b, double s);

/// Extrinsic X-Y-Z Euler angles (roll about world x, then pitch about world y,
/// then yaw about world z): R = Rz(rz) * Ry(ry) * Rx(rx).
struct EulerXYZ {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;
};

Rotation euler_to_rotation(const EulerXYZ& e);
/// Angles in (-pi, pi], ry in [-pi/2, pi/2]. At gimbal lock rx is set to 0.
EulerXYZ rotation_to_euler(const Rotation& r);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  unsigned width = 1;
  unsigned height = 1;

  /// Throws InvalidArgument if the invariants are violated.
  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < static_cast<double>(width) && v < static_cast<double>(height);
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Pinhole projection of a camera-frame point (z forward). Throws BehindCamera if z <= 0.
PixelDepth project(const CameraIntrinsics& k, const Vec3& p);
/// Throws NonPositiveDepth if depth <= 0.
Vec3 unproject(const CameraIntrinsics& k, double u, double v, double depth);

/// Ordered points with optional per-point weights in [0, 1]. Empty weights mean all ones.
struct PointSet {
  std::vector<Vec3> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  bool weighted() const { return !weights.empty(); }
};

/// Weighted least-squares rigid transform T minimizing sum w_i |T src_i - dst_i|^2.
/// Zero-weight points are dropped before centering. The rotation is always proper.
/// Throws SizeMismatch, DegenerateInput (fewer than 3 usable points, or collinear).
Pose estimate_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst,
                              std::span<const double> weights = {});
Pose estimate_rigid_transform(const PointSet& src, const PointSet& dst);

/// Greedy farthest point sampling. First pick is start_index; ties go to the lowest index.
/// Throws InvalidCount unless 1 <= n <= points.size(), IndexOutOfRange for a bad start.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t n,
                                               std::size_t start_index = 0);

/// Camera pose (camera -> world) for a camera at `eye` looking at `target`, image y pointing
/// down and the world z axis pointing up in the image.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = Vec3::UnitZ());

std::vector<Vec3> transform_points(const Pose& p, std::span<const Vec3> points);

}  // namespace flowact::geometry
