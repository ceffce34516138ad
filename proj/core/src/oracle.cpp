#include "flowact/oracle.hpp"

#include "binary_io.hpp"
#include "flowact/errors.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace flowact::oracle {

void MotionScript::validate() const {
  if (waypoints.size() < 2) throw InvalidArgument("motion script needs at least 2 waypoints");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (!(waypoints[i].time > waypoints[i - 1].time)) {
      throw InvalidArgument("waypoint times must be strictly increasing");
    }
  }
  for (const Waypoint& w : waypoints) {
    if (w.mode == Waypoint::Mode::anchor && (w.anchor.empty() || w.target_anchor.empty())) {
      throw InvalidArgument("anchor waypoint needs anchor and target_anchor");
    }
  }
}

MotionScript parse_script(const std::string& json_text) {
  const nlohmann::json j = detail::parse_json(json_text, "motion script");
  MotionScript script;
  try {
    script.task = j.at("task").get<std::string>();
    for (const auto& wj : j.at("waypoints")) {
      Waypoint w;
      w.time = wj.at("time").get<double>();
      const std::string mode = wj.value("mode", std::string("relative"));
      if (mode == "start") {
        w.mode = Waypoint::Mode::start;
      } else if (mode == "relative") {
        w.mode = Waypoint::Mode::relative;
      } else if (mode == "anchor") {
        w.mode = Waypoint::Mode::anchor;
      } else {
        throw SchemaError("mode", "unknown waypoint mode " + mode);
      }
      if (wj.contains("translation")) w.translation = detail::vec3_from_json(wj.at("translation"));
      const std::string frame = wj.value("frame", std::string("world"));
      if (frame == "world") {
        w.frame = Waypoint::Frame::world;
      } else if (frame == "object") {
        w.frame = Waypoint::Frame::object;
      } else if (frame == "target") {
        w.frame = Waypoint::Frame::target;
      } else {
        throw SchemaError("frame", "unknown frame " + frame);
      }
      w.rotation = detail::pose_from_json(wj).rotation;
      w.anchor = wj.value("anchor", std::string());
      w.target_anchor = wj.value("target_anchor", std::string());
      if (wj.contains("align")) {
        const auto& a = wj.at("align");
        w.align_axis = a.at("axis").get<std::string>();
        if (a.contains("direction")) {
          w.align_direction = detail::vec3_from_json(a.at("direction")).normalized();
        } else {
          w.align_target_axis = a.at("target_axis").get<std::string>();
        }
      }
      script.waypoints.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("waypoints", e.what());
  }
  try {
    script.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("waypoints", e.what());
  }
  return script;
}

MotionScript load_script(const std::filesystem::path& path) { return parse_script(detail::read_file_text(path)); }

std::map<std::string, MotionScript> load_script_library(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, MotionScript> out;
  for (const auto& f : files) {
    MotionScript s = load_script(f);
    out[s.task] = std::move(s);
  }
  return out;
}

std::vector<Pose> resolve_waypoints(const MotionScript& script, const sim::Scene& scene) {
  script.validate();
  const sim::SceneObject& obj = scene.object(scene.task.object);
  const sim::SceneObject* target = scene.task.target.empty() ? nullptr : &scene.object(scene.task.target);
  auto need_target = [&]() -> const sim::SceneObject& {
    if (target == nullptr) throw UnresolvedBinding("script refers to the target but the task has none");
    return *target;
  };
  const Pose start = obj.pose;

  std::vector<Pose> out;
  for (const Waypoint& w : script.waypoints) {
    if (w.mode == Waypoint::Mode::start) {
      out.push_back(start);
      continue;
    }
    Rotation r = start.rotation * w.rotation;
    if (!w.align_axis.empty()) {
      const Vec3 from = r.apply(obj.anchor(w.align_axis)).normalized();
      const Vec3 to = w.align_direction ? *w.align_direction : need_target().direction_world(w.align_target_axis);
      r = Rotation::from_quaternion(Eigen::Quaterniond::FromTwoVectors(from, to)) * r;
    }
    Vec3 offset = w.translation;
    if (w.frame == Waypoint::Frame::object) offset = start.rotation.apply(offset);
    if (w.frame == Waypoint::Frame::target) offset = need_target().pose.rotation.apply(offset);

    Pose p{start.translation + offset, r};
    if (w.mode == Waypoint::Mode::anchor) {
      const Vec3 goal = need_target().anchor_world(w.target_anchor) + offset;
      p.translation = goal - r.apply(obj.anchor(w.anchor));
    }
    out.push_back(p);
  }
  return out;
}

std::vector<Pose> object_trajectory(const MotionScript& script, const sim::Scene& scene, std::size_t horizon) {
  if (horizon < 2) throw InvalidArgument("horizon must be at least 2");
  const std::vector<Pose> keys = resolve_waypoints(script, scene);
  const auto& wps = script.waypoints;
  const double t0 = wps.front().time, t1 = wps.back().time;
  std::vector<Pose> out;
  out.reserve(horizon);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < horizon; ++k) {
    if (k == 0) {
      out.push_back(keys.front());
      continue;
    }
    if (k + 1 == horizon) {
      out.push_back(keys.back());
      continue;
    }
    const double s = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(horizon - 1);
    while (seg + 2 < wps.size() && s > wps[seg + 1].time) ++seg;
    const double u = (s - wps[seg].time) / (wps[seg + 1].time - wps[seg].time);
    out.push_back(geometry::interpolate_screw(keys[seg], keys[seg + 1], std::clamp(u, 0.0, 1.0)));
  }
  return out;
}

std::string task_for_instruction(const std::string& instruction) {
  std::string lower = instruction;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const std::string& task : sim::task_names()) {
    if (lower.find(task) != std::string::npos) return task;
  }
  throw UnknownTask("no task script matches instruction: \"" + instruction + "\"");
}

void GeneratorRequest::validate() const {
  if (initial_points.empty()) throw InvalidArgument("generator request has no initial points");
  if (attempt < 0) throw InvalidArgument("attempt index must be non-negative");
}

flow::FlowSequence FlowGenerator::resample(const GeneratorRequest& request, int attempt) const {
  if (attempt < 0) throw InvalidArgument("attempt index must be non-negative");
  GeneratorRequest r = request;
  r.seed = request.seed + static_cast<std::uint64_t>(attempt);
  r.attempt = attempt;
  return generate(r);
}

ScriptedGenerator::ScriptedGenerator(std::map<std::string, MotionScript> scripts, std::size_t horizon)
    : scripts_(std::move(scripts)), horizon_(horizon) {
  if (horizon_ < 2) throw InvalidArgument("horizon must be at least 2");
  for (const auto& [task, script] : scripts_) script.validate();
}

const MotionScript& ScriptedGenerator::script(const std::string& task) const {
  const auto it = scripts_.find(task);
  if (it == scripts_.end()) throw UnknownTask("no motion script for task " + task);
  return it->second;
}

flow::FlowSequence ScriptedGenerator::generate(const GeneratorRequest& request) const {
  request.validate();
  if (request.scene == nullptr) throw InvalidArgument("scripted generation needs a scene");
  const sim::Scene& scene = *request.scene;
  const MotionScript& s = script(task_for_instruction(request.instruction));
  const std::vector<Pose> poses = object_trajectory(s, scene, horizon_);
  const Pose start_inv = geometry::invert(poses.front());

  const auto& k = scene.camera.intrinsics;
  const Pose world_to_cam = geometry::invert(scene.camera.pose);
  const sim::RenderBuffers frame0 = sim::render_scene(scene);
  const auto moving_id = static_cast<std::int32_t>(scene.object_index(scene.task.object));

  flow::FlowSequence f = flow::make_flow(horizon_, request.initial_points.size(), k, request.instruction);
  for (std::size_t n = 0; n < request.initial_points.size(); ++n) {
    const Vec2& px = request.initial_points[n];
    const long u = std::lround(px.x()), v = std::lround(px.y());
    if (!k.contains(px.x(), px.y()) || u >= static_cast<long>(k.width) || v >= static_cast<long>(k.height)) continue;
    const std::size_t idx = frame0.index(static_cast<unsigned>(u), static_cast<unsigned>(v));
    const double depth = frame0.depth[idx];
    if (!(depth > 0.0)) {
      f.at(0, n).u = px.x();
      f.at(0, n).v = px.y();
      continue;
    }
    const Vec3 world = scene.camera.pose.apply(geometry::unproject(k, px.x(), px.y(), depth));
    const bool moving = frame0.object[idx] == moving_id;
    for (std::size_t t = 0; t < horizon_; ++t) {
      const Vec3 w = moving ? (poses[t] * start_inv).apply(world) : world;
      const Vec3 c = world_to_cam.apply(w);
      flow::FlowSample& sample = f.at(t, n);
      if (t == 0) {
        sample = {px.x(), px.y(), c.z(), true};
        continue;
      }
      if (c.z() <= 0.0) continue;
      sample.u = k.fx * c.x() / c.z() + k.cx;
      sample.v = k.fy * c.y() / c.z() + k.cy;
      sample.depth = c.z();
      sample.visible = k.contains(sample.u, sample.v);
    }
  }
  return f;
}

ReplayGenerator::ReplayGenerator(std::filesystem::path path) : path_(std::move(path)) {}

flow::FlowSequence ReplayGenerator::generate(const GeneratorRequest&) const { return flow::read_flow(path_); }

NoisyGenerator::NoisyGenerator(std::shared_ptr<const FlowGenerator> inner, double sigma_px, double sigma_depth)
    : inner_(std::move(inner)), sigma_px_(sigma_px), sigma_depth_(sigma_depth) {
  if (!inner_) throw InvalidArgument("noisy generator needs an inner generator");
  if (sigma_px_ < 0.0 || sigma_depth_ < 0.0) throw InvalidArgument("noise levels must be non-negative");
}

flow::FlowSequence NoisyGenerator::generate(const GeneratorRequest& request) const {
  return flow::inject_noise(inner_->generate(request), sigma_px_, sigma_depth_, request.seed);
}

}  // namespace flowact::oracle
