#pragma once

#include "flowact/errors.hpp"
#include "flowact/flow.hpp"
#include "flowact/geometry.hpp"
#include "flowact/kinematics.hpp"
#include "flowact/oracle.hpp"
#include "flowact/planner.hpp"
#include "flowact/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace flowact::verify {

using geometry::Pose;
using geometry::Vec3;

/// 8-bit RGB image, row-major.
struct Image {
  unsigned width = 0;
  unsigned height = 0;
  std::vector<std::uint8_t> rgb;

  sim::Color at(unsigned u, unsigned v) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(v) * width + u);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  bool operator==(const Image&) const = default;
};

inline constexpr std::uint8_t kBackground = 128;

/// Moves `object_cloud` by `goal`, merges it with `scene_cloud` and splats every point as a
/// (2r+1)-pixel square, nearest depth winning. Points behind the camera are dropped.
/// Throws EmptyRender if nothing lands in the frame.
Image render_goal_state(const sim::ColoredCloud& scene_cloud, const sim::ColoredCloud& object_cloud, const Pose& goal,
                        const sim::Camera& camera, unsigned splat_radius = 2);

std::vector<std::uint8_t> encode_png(const Image& image);
/// Throws IoError.
void write_png(const Image& image, const std::filesystem::path& path);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);

struct Verdict {
  bool accept = false;
  std::string reason;
};

/// Task predicate on a copy of `scene` with the task object placed at `object_goal_pose`
/// (world pose, history = [initial, goal]). Throws UnknownTask.
Verdict geometric_verify(const Pose& object_goal_pose, const sim::Scene& scene, const sim::TaskSpec& task);

inline constexpr const char* kVerifySchema = "flowact-verify-v1";

/// POSTs {"instruction", "image_png_base64", "schema"} as JSON to `endpoint`
/// (http://host[:port]/path) and expects {"verdict": "accept"|"reject", "reason"}.
/// Any transport or format failure yields a reject.
Verdict external_verify(const std::string& endpoint, const Image& image, const std::string& instruction,
                        double timeout_s = 10.0);

class Verifier {
 public:
  virtual ~Verifier() = default;
  /// `object_goal_pose` is the predicted world pose of the task object.
  virtual Verdict verify(const sim::Scene& scene, const Pose& object_goal_pose, const Image& image,
                         const std::string& instruction) const = 0;
};

class GeometricVerifier : public Verifier {
 public:
  Verdict verify(const sim::Scene& scene, const Pose& object_goal_pose, const Image& image,
                 const std::string& instruction) const override;
};

class ExternalVerifier : public Verifier {
 public:
  explicit ExternalVerifier(std::string endpoint, double timeout_s = 10.0);
  Verdict verify(const sim::Scene& scene, const Pose& object_goal_pose, const Image& image,
                 const std::string& instruction) const override;

 private:
  std::string endpoint_;
  double timeout_s_;
};

/// Every attempt was rejected.
class PlanningFailed : public Error {
 public:
  PlanningFailed(const std::string& what, std::vector<Verdict> verdicts)
      : Error(what), verdicts_(std::move(verdicts)) {}
  const std::vector<Verdict>& verdicts() const noexcept { return verdicts_; }

 private:
  std::vector<Verdict> verdicts_;
};

/// Displaces the flow of the chosen attempts by `displacement` meters in a seeded direction
/// (elevation 30 to 90 deg), ramped linearly from zero at frame 0 to full at the last frame.
class CorruptingGenerator : public oracle::FlowGenerator {
 public:
  CorruptingGenerator(std::shared_ptr<const oracle::FlowGenerator> inner, std::vector<int> corrupted_attempts,
                      double displacement = 0.10);
  flow::FlowSequence generate(const oracle::GeneratorRequest& request) const override;
  bool corrupts(int attempt) const;

 private:
  std::shared_ptr<const oracle::FlowGenerator> inner_;
  std::vector<int> attempts_;
  double displacement_;
};

/// Seeded unit vector with elevation in [30, 90] deg.
Vec3 corruption_direction(std::uint64_t seed);

/// Whether trial i of a run corrupts attempt 0, spreading `rate` evenly over the trials.
bool corruption_scheduled(std::size_t trial, double rate);

struct ClosedLoopResult {
  planner::Trajectory trajectory;
  planner::GraspCandidate grasp;
  Pose goal;              ///< object motion from the accepted flow
  Pose object_goal_pose;  ///< goal * initial object pose
  flow::FlowSequence flow;
  Image goal_image;
  std::vector<Verdict> verdicts;  ///< one per attempt
  int attempts = 0;
};

struct ClosedLoopOptions {
  int max_retries = 2;
  unsigned splat_radius = 2;
  /// Optional sink receiving each verdict as it is issued, kept even when planning throws.
  std::vector<Verdict>* verdict_log = nullptr;
};

/// Generate, lift, estimate the goal, render and verify; resample on rejection. After
/// max_retries + 1 rejections throws PlanningFailed. Planner errors on the accepted attempt
/// propagate. `request.scene` must be `scene`.
ClosedLoopResult closed_loop_plan(const oracle::FlowGenerator& generator, const oracle::GeneratorRequest& request,
                                  const sim::Scene& scene, const kinematics::JointChain& chain,
                                  const planner::PlanConfig& config, const Verifier& verifier,
                                  const ClosedLoopOptions& options = {});

/// Object motion implied by a camera-frame flow, in world coordinates.
Pose goal_from_flow(const flow::FlowSequence& flow, const sim::Camera& camera);

}  // namespace flowact::verify
