#include "commands.hpp"

#include "run_config.hpp"

#include <flowact/errors.hpp>
#include <flowact/extraction.hpp>
#include <flowact/flow.hpp>
#include <flowact/kinematics.hpp>
#include <flowact/oracle.hpp>
#include <flowact/planner.hpp>
#include <flowact/scene.hpp>
#include <flowact/sim.hpp>
#include <flowact/verify.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

namespace flowact::cli {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path ensure_run_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.run_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

sim::Scene load_task_scene(const RunConfig& cfg, const std::string& task) {
  const auto& names = sim::task_names();
  if (std::find(names.begin(), names.end(), task) == names.end()) throw UnknownTask("unknown task '" + task + "'");
  sim::Scene scene = sim::load_scene(cfg.scene_path(task));
  if (scene.task.name != task) {
    throw ConfigError("scene " + cfg.scene_path(task).string() + " is for task '" + scene.task.name + "'");
  }
  return scene;
}

std::string task_of(const flow::FlowSequence& f, const std::string& task) {
  return task.empty() ? oracle::task_for_instruction(f.instruction) : task;
}

std::shared_ptr<const oracle::FlowGenerator> make_generator(const RunConfig& cfg) {
  if (cfg.oracle == "replay") return std::make_shared<oracle::ReplayGenerator>(cfg.replay_path);
  std::shared_ptr<const oracle::FlowGenerator> g =
      std::make_shared<oracle::ScriptedGenerator>(oracle::load_script_library(cfg.scripts), cfg.horizon);
  if (cfg.oracle == "noisy") g = std::make_shared<oracle::NoisyGenerator>(g, cfg.sigma_px, cfg.sigma_depth);
  return g;
}

std::unique_ptr<verify::Verifier> make_verifier(const RunConfig& cfg) {
  if (cfg.verifier == "external") return std::make_unique<verify::ExternalVerifier>(cfg.endpoint, cfg.timeout_s);
  return std::make_unique<verify::GeometricVerifier>();
}

nlohmann::json verdicts_json(const std::vector<verify::Verdict>& verdicts, bool accepted) {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    list.push_back({{"attempt", i}, {"accept", verdicts[i].accept}, {"reason", verdicts[i].reason}});
  }
  return {{"attempts", verdicts.size()}, {"accepted", accepted}, {"verdicts", list}};
}

geometry::CameraIntrinsics camera_from_file(const fs::path& path) {
  const nlohmann::json j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw ParseError("camera file is not valid JSON: " + path.string(), 0);
  geometry::CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<unsigned>();
    k.height = j.at("height").get<unsigned>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("camera", e.what());
  }
  k.validate();
  return k;
}

nlohmann::json camera_to_json(const geometry::CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

nlohmann::json bbox_to_json(const extraction::BBox& b) {
  return {{"u_min", b.u_min}, {"v_min", b.v_min}, {"u_max", b.u_max}, {"v_max", b.v_max}};
}

struct Options {
  std::string task;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::string flow;
  std::string out;
  std::string tracks;
  std::string depth;
  std::string mask;
  std::string camera;
  std::string instruction;
  std::string script;
  bool corrupt = false;
};

int cmd_gen_flow(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const sim::Scene scene = load_task_scene(cfg, o.task);
  std::shared_ptr<const oracle::FlowGenerator> gen = make_generator(cfg);
  if (o.corrupt) {
    gen = std::make_shared<verify::CorruptingGenerator>(gen, std::vector<int>{0}, cfg.eval.corruption_displacement);
  }
  oracle::GeneratorRequest req;
  req.scene = &scene;
  req.instruction = scene.instruction;
  req.initial_points = sim::object_initial_points(scene, scene.task.object, cfg.point_stride);
  req.seed = o.seed.value_or(cfg.seed);
  if (req.initial_points.empty()) throw EmptyResult("the task object is not visible from the camera");
  const flow::FlowSequence f = gen->resample(req, 0);
  flow::validate(f);
  const fs::path path = o.out.empty() ? ensure_run_dir(cfg) / ("flow_" + o.task + ".mflw") : fs::path(o.out);
  flow::write_flow(f, path);
  out << path.string() << "\n";
  return kExitOk;
}

int cmd_plan(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const flow::FlowSequence f = flow::read_flow(o.flow);
  flow::validate(f);
  const sim::Scene scene = load_task_scene(cfg, task_of(f, o.task));
  const kinematics::JointChain chain = kinematics::load_chain(cfg.chain);
  const oracle::ReplayGenerator gen(o.flow);
  oracle::GeneratorRequest req;
  req.scene = &scene;
  req.instruction = f.instruction;
  req.seed = cfg.seed;
  for (std::size_t n = 0; n < f.num_points; ++n) req.initial_points.emplace_back(f.at(0, n).u, f.at(0, n).v);
  const std::unique_ptr<verify::Verifier> verifier = make_verifier(cfg);
  planner::PlanConfig plan = cfg.plan;
  plan.workspace = scene.workspace;

  const fs::path dir = ensure_run_dir(cfg);
  verify::ClosedLoopResult r;
  try {
    r = verify::closed_loop_plan(gen, req, scene, chain, plan, *verifier, {cfg.max_retries, cfg.splat_radius});
  } catch (const verify::PlanningFailed& e) {
    write_text(dir / "verdicts.json", verdicts_json(e.verdicts(), false).dump(2) + "\n");
    throw;
  }
  write_text(dir / "verdicts.json", verdicts_json(r.verdicts, true).dump(2) + "\n");
  planner::write_trajectory(r.trajectory, dir / "trajectory.json");
  verify::write_png(r.goal_image, dir / "goal.png");
  out << (dir / "trajectory.json").string() << "\n";
  out << "attempts: " << r.attempts << ", steps: " << r.trajectory.steps.size() << "\n";
  return kExitOk;
}

int cmd_render(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const flow::FlowSequence f = flow::read_flow(o.flow);
  flow::validate(f);
  const sim::Scene scene = load_task_scene(cfg, task_of(f, o.task));
  const sim::SceneObject& obj = scene.object(scene.task.object);
  const geometry::Pose goal = verify::goal_from_flow(f, scene.camera);
  const verify::Image image =
      verify::render_goal_state(scene.world_cloud(obj.name), obj.world_cloud(), goal, scene.camera, cfg.splat_radius);
  const fs::path path = o.out.empty() ? ensure_run_dir(cfg) / "goal.png" : fs::path(o.out);
  verify::write_png(image, path);
  out << path.string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const sim::Scene scene = load_task_scene(cfg, o.task);
  const auto scripts = oracle::load_script_library(cfg.scripts);
  const kinematics::JointChain chain = kinematics::load_chain(cfg.chain);
  sim::EvalConfig e = cfg.eval;
  if (o.n) e.n_trials = *o.n;
  if (o.seed) e.seed = *o.seed;
  sim::EvalReport report = sim::evaluate(scene, scripts, chain, e);
  report.config_digest = cfg.digest();
  const fs::path path = o.out.empty() ? ensure_run_dir(cfg) / ("report_" + o.task + ".json") : fs::path(o.out);
  sim::write_report(report, path);
  out << o.task << ": " << report.successes << "/" << report.n_trials << " succeeded\n";
  out << path.string() << "\n";
  return kExitOk;
}

int cmd_extract(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const extraction::TrackSet tracks = extraction::read_tracks(o.tracks);
  if (!fs::is_directory(o.depth)) throw IoError("depth directory not found: " + o.depth);
  const extraction::DepthMapStack depth = extraction::read_depth_stack(o.depth);
  const extraction::Mask mask = extraction::read_mask(o.mask);
  geometry::CameraIntrinsics k;
  std::string instruction = o.instruction;
  if (!o.camera.empty()) {
    k = camera_from_file(o.camera);
  } else if (!o.task.empty()) {
    const sim::Scene scene = load_task_scene(cfg, o.task);
    k = scene.camera.intrinsics;
    if (instruction.empty()) instruction = scene.instruction;
  } else {
    throw ConfigError("extract needs --camera or --task for the camera intrinsics");
  }
  const extraction::ExtractionResult r = extraction::extract_episode(tracks, depth, mask, k, cfg.extraction, instruction);
  const fs::path dir = o.out.empty() ? ensure_run_dir(cfg) : ensure_dir(o.out);
  flow::write_flow(r.flow, dir / "flow.mflw");
  const nlohmann::json report = {{"bbox", bbox_to_json(r.bbox)},
                                 {"num_points", r.flow.num_points},
                                 {"track_indices", r.track_indices}};
  write_text(dir / "bbox.json", report.dump(2) + "\n");
  out << (dir / "flow.mflw").string() << "\n";
  return kExitOk;
}

int cmd_synth_episode(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const sim::Scene scene = load_task_scene(cfg, o.task);
  oracle::MotionScript script;
  if (!o.script.empty()) {
    script = oracle::load_script(o.script);
  } else {
    const auto scripts = oracle::load_script_library(cfg.scripts);
    const auto it = scripts.find(o.task);
    if (it == scripts.end()) throw UnknownTask("no motion script for task " + o.task);
    script = it->second;
  }
  const std::uint64_t seed = o.seed.value_or(cfg.seed);
  const sim::Episode ep = sim::synthesize_episode(scene, script, seed, cfg.episode);
  const fs::path dir =
      o.out.empty() ? ensure_run_dir(cfg) / ("episode_" + o.task + "_" + std::to_string(seed)) : fs::path(o.out);
  ensure_dir(dir / "depth");
  extraction::write_tracks(ep.record.tracks, dir / "tracks.json");
  extraction::write_depth_stack(ep.record.depth, dir / "depth");
  extraction::write_mask(ep.record.gripper, dir / "gripper.pbm");
  write_text(dir / "camera.json", camera_to_json(ep.record.intrinsics).dump(2) + "\n");
  std::vector<std::size_t> moving;
  for (std::size_t m = 0; m < ep.record.moving.size(); ++m) {
    if (ep.record.moving[m]) moving.push_back(m);
  }
  const nlohmann::json truth = {{"instruction", ep.record.instruction},
                                {"bbox", bbox_to_json(ep.record.object_bbox)},
                                {"moving_tracks", moving}};
  write_text(dir / "ground_truth.json", truth.dump(2) + "\n");
  flow::write_flow(ep.ground_truth, dir / "ground_truth.mflw");
  out << dir.string() << "\n";
  return kExitOk;
}

int fail(std::ostream& err, const char* kind, const std::exception& e, int code) {
  err << "flowact: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-guided manipulation planning: extraction, flow generation, planning and evaluation.", "flowact"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_id;
  std::string out_dir;
  app.add_option("-c,--config", config_path, "Run config file")->envname("FLOWACT_CONFIG");
  app.add_option("--set", overrides, "Override a config value, key.path=value")->allow_extra_args(false);
  app.add_option("--run-id", run_id, "Run id (directory name under output_dir)");
  app.add_option("--output-dir", out_dir, "Root directory for run artifacts");

  Options o;
  CLI::App* extract = app.add_subcommand("extract", "Extract a moving-object flow from tracks and depth maps");
  extract->add_option("--tracks", o.tracks, "Track file (JSON)")->required();
  extract->add_option("--depth", o.depth, "Directory of DMAP depth frames")->required();
  extract->add_option("--mask", o.mask, "Gripper mask (PBM)")->required();
  extract->add_option("--camera", o.camera, "Camera intrinsics file (JSON)");
  extract->add_option("--task", o.task, "Take the camera and instruction from this task's scene");
  extract->add_option("--instruction", o.instruction, "Instruction stored in the flow");
  extract->add_option("--out", o.out, "Output directory (default: run directory)");

  CLI::App* gen_flow = app.add_subcommand("gen-flow", "Generate a flow with the configured oracle");
  gen_flow->add_option("--task", o.task, "Task name")->required();
  gen_flow->add_option("--seed", o.seed, "Generator seed (default: config seed)");
  gen_flow->add_flag("--corrupt", o.corrupt, "Displace the generated goal (corruption test)");
  gen_flow->add_option("--out", o.out, "Output MFLW file");

  CLI::App* plan = app.add_subcommand("plan", "Closed-loop plan from a flow file");
  plan->add_option("--flow", o.flow, "MFLW flow file")->required();
  plan->add_option("--task", o.task, "Task (default: from the flow instruction)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a task over randomized trials");
  eval->add_option("--task", o.task, "Task name")->required();
  eval->add_option("-n,--trials", o.n, "Number of trials (default: config)");
  eval->add_option("--seed", o.seed, "Base seed (default: config seed)");
  eval->add_option("--out", o.out, "Report file");

  CLI::App* render = app.add_subcommand("render", "Render the goal state predicted by a flow");
  render->add_option("--flow", o.flow, "MFLW flow file")->required();
  render->add_option("--task", o.task, "Task (default: from the flow instruction)");
  render->add_option("--out", o.out, "Output PNG file");

  CLI::App* synth = app.add_subcommand("synth-episode", "Write a synthetic extraction episode with ground truth");
  synth->add_option("--task", o.task, "Task name")->required();
  synth->add_option("--seed", o.seed, "Episode seed (default: config seed)");
  synth->add_option("--script", o.script, "Motion script overriding the task's");
  synth->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitIo;
  }

  try {
    if (config_path.empty()) throw ConfigError("no config file: pass --config or set FLOWACT_CONFIG");
    RunConfig cfg = load_run_config(config_path, overrides);
    if (!run_id.empty()) {
      cfg.run_id = run_id;
      if (run_id.find('/') != std::string::npos) throw ConfigError("run id must be a plain directory name");
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    if (*extract) return cmd_extract(cfg, o, out);
    if (*gen_flow) return cmd_gen_flow(cfg, o, out);
    if (*plan) return cmd_plan(cfg, o, out);
    if (*eval) return cmd_eval(cfg, o, out);
    if (*render) return cmd_render(cfg, o, out);
    if (*synth) return cmd_synth_episode(cfg, o, out);
    return kExitIo;
  } catch (const verify::PlanningFailed& e) {
    return fail(err, "planning failed", e, kExitPlanning);
  } catch (const InfeasibleTrajectory& e) {
    return fail(err, "infeasible trajectory", e, kExitPlanning);
  } catch (const NoFeasibleGrasp& e) {
    return fail(err, "no feasible grasp", e, kExitPlanning);
  } catch (const NoMovingObject& e) {
    return fail(err, "no moving object", e, kExitDomain);
  } catch (const UnknownTask& e) {
    return fail(err, "unknown task", e, kExitDomain);
  } catch (const UnknownObject& e) {
    return fail(err, "unknown object", e, kExitDomain);
  } catch (const UnresolvedBinding& e) {
    return fail(err, "unresolved binding", e, kExitDomain);
  } catch (const EmptyResult& e) {
    return fail(err, "empty result", e, kExitDomain);
  } catch (const DegenerateInput& e) {
    return fail(err, "degenerate input", e, kExitDomain);
  } catch (const std::exception& e) {
    return fail(err, "error", e, kExitIo);
  }
}

}  // namespace flowact::cli
