#include "flowact/scene.hpp"

#include "binary_io.hpp"
#include "flowact/errors.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace flowact::sim {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

void ColoredCloud::append(const ColoredCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
}

ColoredCloud transformed(const ColoredCloud& cloud, const Pose& pose) {
  ColoredCloud out;
  out.colors = cloud.colors;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(pose.apply(p));
  return out;
}

ColoredCloud sample_shape(const Shape& shape, double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("sampling spacing must be positive");
  std::vector<Vec3> local;
  auto steps = [&](double extent) { return std::max(1, static_cast<int>(std::ceil(extent / spacing))); };

  if (shape.kind == Shape::Kind::box) {
    const Vec3 h = 0.5 * shape.size;
    if ((shape.size.array() <= 0.0).any()) throw InvalidArgument("box size must be positive");
    // Each face: fixed axis, two spanning axes.
    for (int axis = 0; axis < 3; ++axis) {
      const int a = (axis + 1) % 3, b = (axis + 2) % 3;
      const int na = steps(shape.size[a]), nb = steps(shape.size[b]);
      for (int side : {-1, 1}) {
        if (axis == 2 && side == 1 && shape.open_top) continue;
        for (int i = 0; i <= na; ++i) {
          for (int j = 0; j <= nb; ++j) {
            Vec3 p;
            p[axis] = side * h[axis];
            p[a] = -h[a] + shape.size[a] * i / na;
            p[b] = -h[b] + shape.size[b] * j / nb;
            local.push_back(p);
          }
        }
      }
    }
  } else {
    const double r = shape.size.x(), height = shape.size.z();
    if (!(r > 0.0) || !(height > 0.0)) throw InvalidArgument("cylinder radius and height must be positive");
    const int nt = std::max(6, static_cast<int>(std::ceil(2.0 * kPi * r / spacing)));
    const int nz = steps(height);
    for (int k = 0; k <= nz; ++k) {
      for (int i = 0; i < nt; ++i) {
        const double th = 2.0 * kPi * i / nt;
        local.emplace_back(r * std::cos(th), r * std::sin(th), height * k / nz);
      }
    }
    const int nr = steps(r);
    for (double z : {0.0, height}) {
      if (z > 0.0 && shape.open_top) continue;
      local.emplace_back(0.0, 0.0, z);
      for (int k = 1; k <= nr; ++k) {
        const double rk = r * k / nr;
        const int n = std::max(6, static_cast<int>(std::ceil(2.0 * kPi * rk / spacing)));
        for (int i = 0; i < n; ++i) {
          const double th = 2.0 * kPi * i / n;
          local.emplace_back(rk * std::cos(th), rk * std::sin(th), z);
        }
      }
    }
  }
  ColoredCloud out;
  out.points.reserve(local.size());
  for (const Vec3& p : local) out.points.push_back(shape.pose.apply(p));
  out.colors.assign(out.points.size(), shape.color);
  return out;
}

const Vec3& SceneObject::anchor(const std::string& anchor_name) const {
  const auto it = anchors.find(anchor_name);
  if (it == anchors.end()) throw UnresolvedBinding("object '" + name + "' has no anchor '" + anchor_name + "'");
  return it->second;
}

std::vector<planner::GraspCandidate> SceneObject::world_grasps() const {
  std::vector<planner::GraspCandidate> out = grasps;
  for (auto& g : out) g.pose = pose * g.pose;
  return out;
}

void TaskSpec::validate() const {
  if (std::find(task_names().begin(), task_names().end(), name) == task_names().end()) {
    throw UnknownTask("unknown task: " + name);
  }
  for (double v : {pour_alignment, pour_tilt, spill_tilt, pour_height, insert_angle, holder_radius, holder_depth,
                   hang_distance, hang_angle, drawer_extension, drawer_off_axis}) {
    if (!(v > 0.0)) throw InvalidArgument("task tolerances must be positive");
  }
}

SceneObject& Scene::object(const std::string& object_name) { return objects[object_index(object_name)]; }

const SceneObject& Scene::object(const std::string& object_name) const { return objects[object_index(object_name)]; }

std::size_t Scene::object_index(const std::string& object_name) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].name == object_name) return i;
  }
  throw UnknownObject("no object named '" + object_name + "' in scene");
}

ColoredCloud Scene::world_cloud(const std::string& exclude) const {
  ColoredCloud out;
  for (const SceneObject& o : objects) {
    if (o.name != exclude) out.append(o.world_cloud());
  }
  return out;
}

namespace {

Color color_from_json(const nlohmann::json& j) {
  Color c{};
  for (int i = 0; i < 3; ++i) c[static_cast<std::size_t>(i)] = j.at(i).get<std::uint8_t>();
  return c;
}

Shape shape_from_json(const nlohmann::json& j) {
  Shape s;
  const std::string type = j.at("type").get<std::string>();
  if (j.contains("pose")) s.pose = detail::pose_from_json(j.at("pose"));
  if (type == "box") {
    s.kind = Shape::Kind::box;
    s.size = detail::vec3_from_json(j.at("size"));
  } else if (type == "cylinder") {
    s.kind = Shape::Kind::cylinder;
    s.size = {j.at("radius").get<double>(), 0.0, j.at("height").get<double>()};
  } else {
    throw SchemaError("type", "unknown shape type " + type);
  }
  if (j.contains("color")) s.color = color_from_json(j.at("color"));
  s.open_top = j.value("open_top", false);
  return s;
}

}  // namespace

Scene parse_scene(const std::string& json_text) {
  const nlohmann::json j = detail::parse_json(json_text, "scene");
  Scene scene;
  try {
    scene.name = j.value("name", std::string("scene"));
    scene.instruction = j.value("instruction", std::string());
    const auto& cam = j.at("camera");
    auto& k = scene.camera.intrinsics;
    k.width = cam.at("width").get<unsigned>();
    k.height = cam.at("height").get<unsigned>();
    k.fx = cam.at("fx").get<double>();
    k.fy = cam.value("fy", k.fx);
    k.cx = cam.value("cx", 0.5 * (k.width - 1));
    k.cy = cam.value("cy", 0.5 * (k.height - 1));
    if (cam.contains("pose")) {
      scene.camera.pose = detail::pose_from_json(cam.at("pose"));
    } else {
      scene.camera.pose =
          geometry::look_at(detail::vec3_from_json(cam.at("eye")), detail::vec3_from_json(cam.at("target")));
    }
    if (j.contains("workspace")) {
      scene.workspace.lo = detail::vec3_from_json(j.at("workspace").at("lo"));
      scene.workspace.hi = detail::vec3_from_json(j.at("workspace").at("hi"));
    }
    if (j.contains("task")) {
      const auto& t = j.at("task");
      TaskSpec& task = scene.task;
      task.name = t.at("name").get<std::string>();
      task.object = t.at("object").get<std::string>();
      task.target = t.value("target", std::string());
      const double deg = kPi / 180.0;
      task.pour_alignment = t.value("pour_alignment", task.pour_alignment);
      task.pour_tilt = t.value("pour_tilt_deg", task.pour_tilt / deg) * deg;
      task.spill_tilt = t.value("spill_tilt_deg", task.spill_tilt / deg) * deg;
      task.pour_height = t.value("pour_height", task.pour_height);
      task.insert_angle = t.value("insert_angle_deg", task.insert_angle / deg) * deg;
      task.holder_radius = t.value("holder_radius", task.holder_radius);
      task.holder_depth = t.value("holder_depth", task.holder_depth);
      task.hang_distance = t.value("hang_distance", task.hang_distance);
      task.hang_angle = t.value("hang_angle_deg", task.hang_angle / deg) * deg;
      task.drawer_extension = t.value("drawer_extension", task.drawer_extension);
      task.drawer_off_axis = t.value("drawer_off_axis", task.drawer_off_axis);
    }
    for (const auto& oj : j.at("objects")) {
      SceneObject o;
      o.name = oj.at("name").get<std::string>();
      if (oj.contains("pose")) o.pose = detail::pose_from_json(oj.at("pose"));
      o.initial_pose = o.pose;
      o.history = {o.pose};
      o.movable = oj.value("movable", true);
      o.group = oj.value("group", o.name);
      o.spacing = oj.value("spacing", o.spacing);
      for (const auto& sj : oj.value("shapes", nlohmann::json::array())) {
        o.shapes.push_back(shape_from_json(sj));
        o.cloud.append(sample_shape(o.shapes.back(), o.spacing));
      }
      if (oj.contains("anchors")) {
        for (const auto& [name, v] : oj.at("anchors").items()) o.anchors[name] = detail::vec3_from_json(v);
      }
      for (const auto& gj : oj.value("grasps", nlohmann::json::array())) {
        planner::GraspCandidate g;
        g.pose = detail::pose_from_json(gj.at("pose"));
        g.width = gj.value("width", g.width);
        g.score = gj.value("score", g.score);
        g.validate();
        o.grasps.push_back(g);
      }
      for (const SceneObject& other : scene.objects) {
        if (other.name == o.name) throw SchemaError("objects", "duplicate object name " + o.name);
      }
      scene.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("scene", e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError("scene", e.what());
  }
  try {
    scene.camera.intrinsics.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("camera", e.what());
  }
  if (!scene.task.name.empty()) {
    scene.task.validate();
    scene.object(scene.task.object);
    if (!scene.task.target.empty()) scene.object(scene.task.target);
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& path) { return parse_scene(detail::read_file_text(path)); }

Scene randomize_scene(const Scene& scene, std::uint64_t seed, double translation_range, double yaw_range) {
  Scene out = scene;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(-translation_range, translation_range);
  std::uniform_real_distribution<double> yaw(-yaw_range, yaw_range);
  std::map<std::string, Pose> deltas;
  for (SceneObject& o : out.objects) {
    if (!o.movable) continue;
    const std::string key = o.group.empty() ? "object:" + o.name : o.group;
    auto it = deltas.find(key);
    if (it == deltas.end()) {
      const Vec3 c = o.pose.translation;
      const double dx = shift(rng), dy = shift(rng), a = yaw(rng);
      const Pose delta = Pose::from_translation(c + Vec3(dx, dy, 0.0)) *
                         Pose{Vec3::Zero(), geometry::Rotation::from_axis_angle(Vec3::UnitZ(), a)} *
                         Pose::from_translation(-c);
      it = deltas.emplace(key, delta).first;
    }
    o.pose = it->second * o.pose;
    o.initial_pose = o.pose;
    o.history = {o.pose};
  }
  return out;
}

std::string SuccessResult::summary() const {
  std::ostringstream s;
  s << (success ? "success" : "failure");
  for (const std::string& v : violations) s << "; " << v;
  return s.str();
}

double tilt(const Pose& pose) {
  const double c = std::clamp(pose.rotation.apply(Vec3::UnitZ()).z(), -1.0, 1.0);
  return std::acos(c);
}

namespace {

const SceneObject& bound(const Scene& scene, const std::string& name, const char* role) {
  if (name.empty()) throw UnresolvedBinding(std::string("task has no ") + role + " binding");
  try {
    return scene.object(name);
  } catch (const UnknownObject&) {
    throw UnresolvedBinding(std::string(role) + " '" + name + "' is not in the scene");
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace

SuccessResult check_success(const Scene& scene, const TaskSpec& task) {
  task.validate();
  SuccessResult r;
  const SceneObject& obj = bound(scene, task.object, "object");
  auto fail = [&](const std::string& why) { r.violations.push_back(why); };

  if (task.name == "pour") {
    const SceneObject& cup = bound(scene, task.target, "target");
    const Vec3 opening = cup.anchor_world("opening");
    auto spout_offset = [&](const Pose& p) -> Vec3 { return p.apply(obj.anchor("spout")) - opening; };
    const Vec3 d = spout_offset(obj.pose);
    const double horizontal = d.head<2>().norm();
    const double final_tilt = tilt(obj.pose);
    r.metrics["alignment"] = horizontal;
    r.metrics["spout_height"] = d.z();
    r.metrics["tilt_deg"] = deg(final_tilt);
    if (horizontal > task.pour_alignment) {
      fail("spout is " + fmt(horizontal) + " m from the opening (tolerance " + fmt(task.pour_alignment) + ")");
    }
    if (d.z() < 0.0 || d.z() > task.pour_height) {
      fail("spout height above the opening is " + fmt(d.z()) + " m (allowed 0 to " + fmt(task.pour_height) + ")");
    }
    if (final_tilt < task.pour_tilt) {
      fail("pour tilt " + fmt(deg(final_tilt)) + " deg below " + fmt(deg(task.pour_tilt)) + " deg");
    }
    double transport = 0.0;
    for (const Pose& p : obj.history) {
      if (spout_offset(p).head<2>().norm() > 2.0 * task.pour_alignment) transport = std::max(transport, tilt(p));
    }
    r.metrics["transport_tilt_deg"] = deg(transport);
    if (transport >= task.spill_tilt) {
      fail("transport tilt " + fmt(deg(transport)) + " deg reaches the spill threshold " + fmt(deg(task.spill_tilt)));
    }
  } else if (task.name == "insert") {
    const SceneObject& holder = bound(scene, task.target, "target");
    const Vec3 axis = obj.direction_world("axis");
    const double angle = std::acos(std::clamp(axis.z(), -1.0, 1.0));
    const Vec3 tip = obj.anchor_world("tip");
    const Vec3 opening = holder.anchor_world("opening");
    const Vec3 holder_axis = holder.pose.rotation.apply(Vec3::UnitZ());
    const Vec3 rel = tip - opening;
    const double depth = -rel.dot(holder_axis);
    const double radial = (rel + depth * holder_axis).norm();
    r.metrics["angle_deg"] = deg(angle);
    r.metrics["radial"] = radial;
    r.metrics["depth"] = depth;
    if (angle > task.insert_angle) {
      fail("pen axis is " + fmt(deg(angle)) + " deg from vertical (tolerance " + fmt(deg(task.insert_angle)) + ")");
    }
    if (radial > task.holder_radius) {
      fail("tip is " + fmt(radial) + " m off the holder axis (radius " + fmt(task.holder_radius) + ")");
    }
    if (depth < 0.0 || depth > task.holder_depth) {
      fail("tip depth in the holder is " + fmt(depth) + " m (allowed 0 to " + fmt(task.holder_depth) + ")");
    }
  } else if (task.name == "hang") {
    const SceneObject& rack = bound(scene, task.target, "target");
    const double dist = (obj.anchor_world("handle") - rack.anchor_world("peg")).norm();
    const double c = std::abs(obj.direction_world("handle_axis").dot(rack.direction_world("peg_axis")));
    const double angle = std::acos(std::clamp(c, -1.0, 1.0));
    r.metrics["distance"] = dist;
    r.metrics["angle_deg"] = deg(angle);
    if (dist > task.hang_distance) {
      fail("handle is " + fmt(dist) + " m from the peg (tolerance " + fmt(task.hang_distance) + ")");
    }
    if (angle > task.hang_angle) {
      fail("handle axis is " + fmt(deg(angle)) + " deg off the peg axis (tolerance " + fmt(deg(task.hang_angle)) + ")");
    }
  } else {
    const Vec3 axis = obj.initial_pose.rotation.apply(obj.anchor("axis")).normalized();
    const Vec3 d = obj.pose.translation - obj.initial_pose.translation;
    const double along = d.dot(axis);
    const double off = (d - along * axis).norm();
    r.metrics["extension"] = along;
    r.metrics["off_axis"] = off;
    if (along < task.drawer_extension) {
      fail("drawer extended " + fmt(along) + " m along its axis (required " + fmt(task.drawer_extension) + ")");
    }
    if (off >= task.drawer_off_axis) {
      fail("drawer moved " + fmt(off) + " m off its axis (tolerance " + fmt(task.drawer_off_axis) + ")");
    }
  }
  r.success = r.violations.empty();
  return r;
}

RenderBuffers make_buffers(const CameraIntrinsics& k) {
  RenderBuffers b;
  b.width = k.width;
  b.height = k.height;
  const std::size_t n = static_cast<std::size_t>(k.width) * k.height;
  b.depth.assign(n, 0.0f);
  b.object.assign(n, -1);
  b.point.assign(n, -1);
  return b;
}

void splat_cloud(RenderBuffers& buffers, const Camera& camera, const std::vector<Vec3>& world_points, double spacing,
                 std::int32_t object_id) {
  const Pose world_to_cam = geometry::invert(camera.pose);
  const CameraIntrinsics& k = camera.intrinsics;
  const long w = buffers.width, h = buffers.height;
  for (std::size_t i = 0; i < world_points.size(); ++i) {
    const Vec3 p = world_to_cam.apply(world_points[i]);
    if (p.z() <= 1e-6) continue;
    const double u = k.fx * p.x() / p.z() + k.cx;
    const double v = k.fy * p.y() / p.z() + k.cy;
    const long r = std::max(1L, static_cast<long>(std::ceil(0.6 * k.fx * spacing / p.z())));
    const long cu = std::lround(u), cv = std::lround(v);
    if (cu + r < 0 || cv + r < 0 || cu - r >= w || cv - r >= h) continue;
    const float z = static_cast<float>(p.z());
    for (long y = std::max(0L, cv - r); y <= std::min(h - 1, cv + r); ++y) {
      for (long x = std::max(0L, cu - r); x <= std::min(w - 1, cu + r); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * buffers.width + static_cast<std::size_t>(x);
        if (buffers.depth[idx] == 0.0f || z < buffers.depth[idx]) {
          buffers.depth[idx] = z;
          buffers.object[idx] = object_id;
          buffers.point[idx] = static_cast<std::int32_t>(i);
        }
      }
    }
  }
}

RenderBuffers render_scene(const Scene& scene) {
  RenderBuffers b = make_buffers(scene.camera.intrinsics);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    splat_cloud(b, scene.camera, o.world_cloud().points, o.spacing, static_cast<std::int32_t>(i));
  }
  return b;
}

std::vector<geometry::Vec2> object_initial_points(const Scene& scene, const std::string& object, unsigned stride) {
  if (stride < 1) throw InvalidArgument("stride must be at least 1");
  const auto id = static_cast<std::int32_t>(scene.object_index(object));
  const RenderBuffers b = render_scene(scene);
  std::vector<geometry::Vec2> out;
  for (unsigned v = 0; v < b.height; v += stride) {
    for (unsigned u = 0; u < b.width; u += stride) {
      if (b.object[b.index(u, v)] == id) out.emplace_back(u, v);
    }
  }
  return out;
}

}  // namespace flowact::sim
