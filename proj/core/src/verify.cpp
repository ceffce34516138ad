#include "flowact/verify.hpp"

#include "binary_io.hpp"
#include "json_util.hpp"

#include <httplib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace flowact::verify {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Splatter {
  const sim::Camera& camera;
  Pose world_to_cam;
  int radius;
  Image image;
  std::vector<float> zbuf;
  std::size_t drawn = 0;

  Splatter(const sim::Camera& cam, unsigned r)
      : camera(cam), world_to_cam(geometry::invert(cam.pose)), radius(static_cast<int>(r)) {
    const auto& k = camera.intrinsics;
    image.width = k.width;
    image.height = k.height;
    image.rgb.assign(3 * static_cast<std::size_t>(k.width) * k.height, kBackground);
    zbuf.assign(static_cast<std::size_t>(k.width) * k.height, std::numeric_limits<float>::infinity());
  }

  void splat(const std::vector<Vec3>& points, const std::vector<sim::Color>& colors, const Pose& motion) {
    const auto& k = camera.intrinsics;
    const Pose to_cam = world_to_cam * motion;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 c = to_cam.apply(points[i]);
      if (!(c.z() > 0.0)) continue;
      const long u0 = std::lround(k.fx * c.x() / c.z() + k.cx);
      const long v0 = std::lround(k.fy * c.y() / c.z() + k.cy);
      const auto z = static_cast<float>(c.z());
      for (long v = v0 - radius; v <= v0 + radius; ++v) {
        if (v < 0 || v >= static_cast<long>(k.height)) continue;
        for (long u = u0 - radius; u <= u0 + radius; ++u) {
          if (u < 0 || u >= static_cast<long>(k.width)) continue;
          const std::size_t idx = static_cast<std::size_t>(v) * k.width + static_cast<std::size_t>(u);
          ++drawn;
          if (!(z < zbuf[idx])) continue;
          zbuf[idx] = z;
          std::copy(colors[i].begin(), colors[i].end(), image.rgb.begin() + static_cast<std::ptrdiff_t>(3 * idx));
        }
      }
    }
  }
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

Image render_goal_state(const sim::ColoredCloud& scene_cloud, const sim::ColoredCloud& object_cloud, const Pose& goal,
                        const sim::Camera& camera, unsigned splat_radius) {
  if (scene_cloud.points.size() != scene_cloud.colors.size() ||
      object_cloud.points.size() != object_cloud.colors.size()) {
    throw SizeMismatch("cloud points and colors differ in length");
  }
  if (camera.intrinsics.width == 0 || camera.intrinsics.height == 0) throw InvalidArgument("empty image size");
  Splatter s(camera, splat_radius);
  s.splat(scene_cloud.points, scene_cloud.colors, Pose{});
  s.splat(object_cloud.points, object_cloud.colors, goal);
  if (s.drawn == 0) throw EmptyRender("no point projects into the image");
  return std::move(s.image);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.width == 0 || image.height == 0 || image.rgb.size() != 3 * static_cast<std::size_t>(image.width) * image.height) {
    throw InvalidArgument("image buffer does not match its dimensions");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (unsigned v = 0; v < image.height; ++v) {
    auto* row = const_cast<png_bytep>(image.rgb.data() + 3 * static_cast<std::size_t>(v) * image.width);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_png(image));
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

Verdict geometric_verify(const Pose& object_goal_pose, const sim::Scene& scene, const sim::TaskSpec& task) {
  sim::Scene hypothetical = scene;
  sim::SceneObject& obj = hypothetical.object(task.object);
  obj.history = {obj.pose, object_goal_pose};
  obj.pose = object_goal_pose;
  const sim::SuccessResult r = sim::check_success(hypothetical, task);
  return {r.success, r.summary()};
}

Verdict external_verify(const std::string& endpoint, const Image& image, const std::string& instruction,
                        double timeout_s) {
  const auto scheme_end = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string host = path_start == std::string::npos ? endpoint : endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);

  nlohmann::json body;
  body["instruction"] = instruction;
  body["image_png_base64"] = base64_encode(encode_png(image));
  body["schema"] = kVerifySchema;

  httplib::Client client(host);
  if (!client.is_valid()) return {false, "transport failure: invalid endpoint " + endpoint};
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const httplib::Result res = client.Post(path, body.dump(), "application/json");
  if (!res) return {false, "transport failure: " + httplib::to_string(res.error())};
  if (res->status != 200) return {false, "transport failure: HTTP status " + std::to_string(res->status)};

  const nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) return {false, "parse failure: response is not a JSON object"};
  if (!reply.contains("verdict") || !reply["verdict"].is_string() || !reply.contains("reason") ||
      !reply["reason"].is_string()) {
    return {false, "parse failure: response lacks verdict or reason"};
  }
  const std::string verdict = reply["verdict"].get<std::string>();
  std::string reason = reply["reason"].get<std::string>();
  if (verdict == "accept") return {true, reason};
  if (verdict == "reject") return {false, reason.empty() ? "rejected by verifier" : reason};
  return {false, "parse failure: unknown verdict '" + verdict + "'"};
}

Verdict GeometricVerifier::verify(const sim::Scene& scene, const Pose& object_goal_pose, const Image&,
                                  const std::string&) const {
  return geometric_verify(object_goal_pose, scene, scene.task);
}

ExternalVerifier::ExternalVerifier(std::string endpoint, double timeout_s)
    : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {
  if (endpoint_.empty()) throw InvalidArgument("external verifier needs an endpoint");
  if (!(timeout_s_ > 0.0)) throw InvalidArgument("timeout must be positive");
}

Verdict ExternalVerifier::verify(const sim::Scene&, const Pose&, const Image& image,
                                 const std::string& instruction) const {
  return external_verify(endpoint_, image, instruction, timeout_s_);
}

Vec3 corruption_direction(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> elevation(kPi / 6.0, kPi / 2.0);
  const double a = azimuth(rng), e = elevation(rng);
  return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
}

bool corruption_scheduled(std::size_t trial, double rate) {
  if (rate < 0.0 || rate > 1.0) throw InvalidArgument("corruption rate must lie in [0, 1]");
  const auto i = static_cast<double>(trial);
  return std::floor((i + 1.0) * rate) > std::floor(i * rate);
}

CorruptingGenerator::CorruptingGenerator(std::shared_ptr<const oracle::FlowGenerator> inner,
                                         std::vector<int> corrupted_attempts, double displacement)
    : inner_(std::move(inner)), attempts_(std::move(corrupted_attempts)), displacement_(displacement) {
  if (!inner_) throw InvalidArgument("corrupting generator needs an inner generator");
  if (!(displacement_ >= 0.0)) throw InvalidArgument("displacement must be non-negative");
}

bool CorruptingGenerator::corrupts(int attempt) const {
  return std::find(attempts_.begin(), attempts_.end(), attempt) != attempts_.end();
}

flow::FlowSequence CorruptingGenerator::generate(const oracle::GeneratorRequest& request) const {
  flow::FlowSequence f = inner_->generate(request);
  if (!corrupts(request.attempt)) return f;
  if (request.scene == nullptr) throw InvalidArgument("corruption needs the scene camera");
  const sim::Camera& camera = request.scene->camera;
  const Pose world_to_cam = geometry::invert(camera.pose);
  const Vec3 shift = world_to_cam.rotation.apply(corruption_direction(request.seed) * displacement_);
  const auto& k = f.intrinsics;
  const double last = static_cast<double>(std::max<std::size_t>(f.num_timesteps, 2) - 1);
  for (std::size_t t = 1; t < f.num_timesteps; ++t) {
    const Vec3 d = shift * (static_cast<double>(t) / last);
    for (std::size_t n = 0; n < f.num_points; ++n) {
      flow::FlowSample& s = f.at(t, n);
      if (!s.visible) continue;
      const Vec3 c = geometry::unproject(k, s.u, s.v, s.depth) + d;
      if (!(c.z() > 0.0)) {
        s.visible = false;
        continue;
      }
      s.u = k.fx * c.x() / c.z() + k.cx;
      s.v = k.fy * c.y() / c.z() + k.cy;
      s.depth = c.z();
      s.visible = k.contains(s.u, s.v);
    }
  }
  return f;
}

Pose goal_from_flow(const flow::FlowSequence& flow, const sim::Camera& camera) {
  return planner::goal_transform_from_flow(flow::transformed(flow::lift_to_3d(flow), camera.pose));
}

ClosedLoopResult closed_loop_plan(const oracle::FlowGenerator& generator, const oracle::GeneratorRequest& request,
                                  const sim::Scene& scene, const kinematics::JointChain& chain,
                                  const planner::PlanConfig& config, const Verifier& verifier,
                                  const ClosedLoopOptions& options) {
  if (options.max_retries < 0) throw InvalidArgument("max_retries must be non-negative");
  const sim::SceneObject& obj = scene.object(scene.task.object);
  const sim::ColoredCloud background = scene.world_cloud(obj.name);
  const sim::ColoredCloud object_cloud = obj.world_cloud();
  oracle::GeneratorRequest req = request;
  req.scene = &scene;

  ClosedLoopResult result;
  auto record = [&](const Verdict& v) {
    result.verdicts.push_back(v);
    if (options.verdict_log != nullptr) options.verdict_log->push_back(v);
  };
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    result.attempts = attempt + 1;
    flow::FlowSequence f = generator.resample(req, attempt);
    flow::validate(f);
    const flow::Flow3D world = flow::transformed(flow::lift_to_3d(f), scene.camera.pose);
    Pose goal;
    try {
      goal = planner::goal_transform_from_flow(world);
    } catch (const DegenerateInput& e) {
      record({false, std::string("degenerate flow: ") + e.what()});
      continue;
    }
    const Pose object_goal = goal * obj.pose;
    Image image = render_goal_state(background, object_cloud, goal, scene.camera, options.splat_radius);
    Verdict v = verifier.verify(scene, object_goal, image, req.instruction);
    if (!v.accept && v.reason.empty()) v.reason = "rejected";
    record(v);
    if (!v.accept) continue;

    const std::vector<planner::GraspCandidate> grasps = obj.world_grasps();
    result.grasp = grasps.at(planner::select_grasp_index(grasps, goal, chain));
    result.trajectory = planner::plan_trajectory(world, result.grasp, chain, config);
    result.goal = goal;
    result.object_goal_pose = object_goal;
    result.flow = std::move(f);
    result.goal_image = std::move(image);
    return result;
  }
  throw PlanningFailed("all " + std::to_string(result.attempts) + " flow attempts were rejected; last: " +
                           result.verdicts.back().reason,
                       result.verdicts);
}

}  // namespace flowact::verify
