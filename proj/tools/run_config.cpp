#include "run_config.hpp"

#include <flowact/errors.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace flowact::cli {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

const nlohmann::json* find(const nlohmann::json& doc, const std::string& dotted) {
  const nlohmann::json* node = &doc;
  std::stringstream ss(dotted);
  std::string key;
  while (std::getline(ss, key, '.')) {
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
  }
  return node;
}

template <typename T>
T get(const nlohmann::json& doc, const std::string& key, const T& fallback) {
  const nlohmann::json* node = find(doc, key);
  if (node == nullptr || node->is_null()) return fallback;
  try {
    return node->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
  }
}

template <typename T>
T require(const nlohmann::json& doc, const std::string& key) {
  if (find(doc, key) == nullptr) throw ConfigError("config key '" + key + "' is required");
  return get<T>(doc, key, T{});
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void must_exist(const std::filesystem::path& p, const std::string& key) {
  if (!std::filesystem::exists(p)) throw ConfigError("config key '" + key + "' refers to a missing path: " + p.string());
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::digest() const { return fnv1a_hex(document.dump()); }

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("empty path component in override: " + key);
    if (!node->is_object()) throw ConfigError("override path crosses a non-object value: " + key);
    node = &(*node)[parts[i]];
  }
  *node = std::move(value);
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c;
  c.source = path;
  c.document = nlohmann::json::parse(buf.str(), nullptr, false);
  if (c.document.is_discarded() || !c.document.is_object()) {
    throw ConfigError("config file is not a JSON object: " + path.string());
  }
  for (const std::string& o : overrides) apply_override(c.document, o);
  const nlohmann::json& d = c.document;
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();

  c.seed = require<std::uint64_t>(d, "seed");
  c.run_id = get<std::string>(d, "run_id", "");
  if (c.run_id.empty()) throw ConfigError("config key 'run_id' is required");
  if (c.run_id.find('/') != std::string::npos || c.run_id == "." || c.run_id == "..") {
    throw ConfigError("run_id must be a plain directory name: " + c.run_id);
  }
  c.output_dir = get<std::string>(d, "output_dir", "runs");

  c.scenes = resolve(base, require<std::string>(d, "paths.scenes"));
  c.scripts = resolve(base, require<std::string>(d, "paths.scripts"));
  c.chain = resolve(base, require<std::string>(d, "paths.chain"));
  must_exist(c.scenes, "paths.scenes");
  must_exist(c.scripts, "paths.scripts");
  must_exist(c.chain, "paths.chain");

  c.oracle = get<std::string>(d, "oracle.kind", "scripted");
  c.horizon = get<std::size_t>(d, "oracle.horizon", 32);
  c.point_stride = get<unsigned>(d, "oracle.point_stride", 8);
  c.sigma_px = get<double>(d, "oracle.sigma_px", 0.0);
  c.sigma_depth = get<double>(d, "oracle.sigma_depth", 0.0);
  const std::string replay = get<std::string>(d, "oracle.replay_path", "");
  if (c.oracle != "scripted" && c.oracle != "noisy" && c.oracle != "replay") {
    throw ConfigError("oracle.kind must be scripted, noisy or replay, not '" + c.oracle + "'");
  }
  if (c.oracle == "replay") {
    if (replay.empty()) throw ConfigError("oracle.kind replay needs oracle.replay_path");
    c.replay_path = resolve(base, replay);
    must_exist(c.replay_path, "oracle.replay_path");
  }

  c.verifier = get<std::string>(d, "verifier.kind", "geometric");
  c.endpoint = get<std::string>(d, "verifier.endpoint", "");
  c.timeout_s = get<double>(d, "verifier.timeout_s", 10.0);
  c.max_retries = get<int>(d, "verifier.max_retries", 2);
  c.splat_radius = get<unsigned>(d, "verifier.splat_radius", 2);
  if (c.verifier != "geometric" && c.verifier != "external") {
    throw ConfigError("verifier.kind must be geometric or external, not '" + c.verifier + "'");
  }
  if (c.verifier == "external" && c.endpoint.empty()) throw ConfigError("verifier.kind external needs verifier.endpoint");
  if (c.max_retries < 0) throw ConfigError("verifier.max_retries must be non-negative");

  planner::PlanConfig& p = c.plan;
  p.num_keypoints = get<std::size_t>(d, "planner.num_keypoints", p.num_keypoints);
  p.global_budget = get<int>(d, "planner.global_budget", p.global_budget);
  p.local_budget = get<int>(d, "planner.local_budget", p.local_budget);
  p.warm_budget = get<int>(d, "planner.warm_budget", p.warm_budget);
  p.w_ik = get<double>(d, "planner.w_ik", p.w_ik);
  p.w_col = get<double>(d, "planner.w_col", p.w_col);
  p.collision_margin = get<double>(d, "planner.collision_margin", p.collision_margin);
  p.continuation_rounds = get<int>(d, "planner.continuation_rounds", p.continuation_rounds);
  p.ik_penalty_iters = get<int>(d, "planner.ik_penalty_iters", p.ik_penalty_iters);
  p.plan_stride = get<std::size_t>(d, "planner.plan_stride", p.plan_stride);
  p.approach_distance = get<double>(d, "planner.approach_distance", p.approach_distance);
  p.max_keypoint_rms = get<double>(d, "planner.max_keypoint_rms", p.max_keypoint_rms);
  p.dt = get<double>(d, "planner.dt", p.dt);
  p.seed = c.seed;

  extraction::ExtractionConfig& x = c.extraction;
  x.grid_stride = get<unsigned>(d, "extraction.grid_stride", x.grid_stride);
  x.threshold_frac = get<double>(d, "extraction.threshold_frac", x.threshold_frac);
  x.bbox_margin = get<double>(d, "extraction.bbox_margin", x.bbox_margin);
  x.erosion_radius = get<unsigned>(d, "extraction.erosion_radius", x.erosion_radius);
  x.remove_camera_motion = get<bool>(d, "extraction.remove_camera_motion", x.remove_camera_motion);
  x.seed_match_px = get<double>(d, "extraction.seed_match_px", x.seed_match_px);

  sim::EvalConfig& e = c.eval;
  e.n_trials = get<std::size_t>(d, "eval.n_trials", e.n_trials);
  e.translation_range = get<double>(d, "eval.translation_range", e.translation_range);
  e.yaw_range = get<double>(d, "eval.yaw_range_deg", e.yaw_range / kDeg) * kDeg;
  e.corruption_rate = get<double>(d, "eval.corruption_rate", e.corruption_rate);
  e.corruption_displacement = get<double>(d, "eval.corruption_displacement", e.corruption_displacement);
  e.sigma_px = c.oracle == "noisy" ? c.sigma_px : 0.0;
  e.sigma_depth = c.oracle == "noisy" ? c.sigma_depth : 0.0;
  e.max_retries = c.max_retries;
  e.point_stride = c.point_stride;
  e.horizon = c.horizon;
  e.splat_radius = c.splat_radius;
  e.plan = c.plan;
  e.seed = c.seed;
  e.verifier_endpoint = c.verifier == "external" ? c.endpoint : std::string();

  sim::EpisodeOptions& ep = c.episode;
  ep.horizon = get<std::size_t>(d, "episode.horizon", ep.horizon);
  ep.track_stride = get<unsigned>(d, "episode.track_stride", ep.track_stride);
  ep.randomize = get<bool>(d, "episode.randomize", ep.randomize);
  ep.translation_range = e.translation_range;
  ep.yaw_range = e.yaw_range;

  try {
    c.plan.validate();
    c.eval.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(std::string("invalid configuration: ") + err.what());
  }
  return c;
}

}  // namespace flowact::cli
