#pragma once

#include <flowact/extraction.hpp>
#include <flowact/planner.hpp>
#include <flowact/sim.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowact::cli {

/// Resolved run configuration. Paths under "paths" are relative to the config file; output_dir is
/// relative to the working directory.
struct RunConfig {
  nlohmann::json document;  ///< after --set overrides
  std::filesystem::path source;

  std::string run_id;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  std::filesystem::path scenes;
  std::filesystem::path scripts;
  std::filesystem::path chain;

  std::string oracle;  ///< scripted, noisy or replay
  std::size_t horizon = 32;
  unsigned point_stride = 8;
  double sigma_px = 0.0;
  double sigma_depth = 0.0;
  std::filesystem::path replay_path;

  std::string verifier;  ///< geometric or external
  std::string endpoint;
  double timeout_s = 10.0;
  int max_retries = 2;
  unsigned splat_radius = 2;

  planner::PlanConfig plan;
  extraction::ExtractionConfig extraction;
  sim::EvalConfig eval;
  sim::EpisodeOptions episode;

  std::filesystem::path run_dir() const { return output_dir / run_id; }
  std::filesystem::path scene_path(const std::string& task) const { return scenes / (task + ".json"); }
  /// FNV-1a 64 of the canonical resolved document, as 16 hex digits.
  std::string digest() const;
};

/// Applies "a.b.c=value" to `doc`; the value is parsed as JSON when possible, else taken as a
/// string. Throws ConfigError.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Throws ConfigError for missing keys, bad types or referenced paths that do not exist, IoError
/// if the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::string fnv1a_hex(const std::string& text);

}  // namespace flowact::cli
