#include "flowact/flow.hpp"

#include "binary_io.hpp"
#include "flowact/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace flowact::flow {

namespace {

constexpr std::uint8_t kMagic[4] = {0x4D, 0x46, 0x4C, 0x57};  // "MFLW"
constexpr std::size_t kRecordBytes = 3 * sizeof(float) + 1;
constexpr double kMinDepth = 1e-4;

}  // namespace

FlowSequence make_flow(std::size_t timesteps, std::size_t points, const CameraIntrinsics& k,
                       std::string instruction) {
  FlowSequence f;
  f.num_timesteps = timesteps;
  f.num_points = points;
  f.samples.assign(timesteps * points, FlowSample{});
  f.intrinsics = k;
  f.instruction = std::move(instruction);
  return f;
}

void validate(const FlowSequence& flow) {
  if (flow.num_timesteps < 2) throw SchemaError("T", "at least 2 timesteps required");
  if (flow.num_points < 3) throw SchemaError("N", "at least 3 points required");
  if (flow.samples.size() != flow.num_timesteps * flow.num_points) {
    throw SchemaError("samples", "sample count does not match T*N");
  }
  try {
    flow.intrinsics.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("intrinsics", e.what());
  }
  for (std::size_t t = 0; t < flow.num_timesteps; ++t) {
    for (std::size_t n = 0; n < flow.num_points; ++n) {
      const FlowSample& s = flow.at(t, n);
      if (!s.visible) continue;
      if (!std::isfinite(s.u) || !std::isfinite(s.v) || !std::isfinite(s.depth)) {
        throw CorruptFlow(t, n, "non-finite visible sample");
      }
      if (!(s.depth > 0.0)) throw CorruptFlow(t, n, "visible sample with non-positive depth");
      if (!flow.intrinsics.contains(s.u, s.v)) throw CorruptFlow(t, n, "visible sample outside the image");
    }
  }
}

Flow3D lift_to_3d(const FlowSequence& flow) {
  Flow3D out;
  out.num_timesteps = flow.num_timesteps;
  out.num_points = flow.num_points;
  out.intrinsics = flow.intrinsics;
  out.points.assign(flow.samples.size(), Vec3::Zero());
  out.visible.assign(flow.samples.size(), 0);
  for (std::size_t t = 0; t < flow.num_timesteps; ++t) {
    for (std::size_t n = 0; n < flow.num_points; ++n) {
      const FlowSample& s = flow.at(t, n);
      if (!s.visible) continue;
      const std::size_t i = t * flow.num_points + n;
      try {
        out.points[i] = geometry::unproject(flow.intrinsics, s.u, s.v, s.depth);
      } catch (const NonPositiveDepth& e) {
        throw CorruptFlow(t, n, e.what());
      }
      out.visible[i] = 1;
    }
  }
  return out;
}

Flow3D transformed(const Flow3D& flow, const geometry::Pose& pose) {
  Flow3D out = flow;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (out.visible[i]) out.points[i] = pose.apply(out.points[i]);
  }
  return out;
}

geometry::PointSet frame_points(const Flow3D& flow, std::size_t t) {
  if (t >= flow.num_timesteps) {
    throw IndexOutOfRange("frame " + std::to_string(t) + " of " + std::to_string(flow.num_timesteps));
  }
  geometry::PointSet ps;
  ps.points.reserve(flow.num_points);
  ps.weights.reserve(flow.num_points);
  for (std::size_t n = 0; n < flow.num_points; ++n) {
    ps.points.push_back(flow.at(t, n));
    ps.weights.push_back(flow.is_visible(t, n) ? 1.0 : 0.0);
  }
  return ps;
}

FlowSequence inject_noise(const FlowSequence& flow, double sigma_px, double sigma_depth,
                          std::uint64_t seed) {
  if (sigma_px < 0.0 || sigma_depth < 0.0) throw InvalidArgument("noise sigmas must be non-negative");
  FlowSequence out = flow;
  if (sigma_px == 0.0 && sigma_depth == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (FlowSample& s : out.samples) {
    if (!s.visible) continue;
    if (sigma_px > 0.0) {
      s.u += sigma_px * unit(rng);
      s.v += sigma_px * unit(rng);
    }
    if (sigma_depth > 0.0) {
      s.depth = std::max(s.depth + sigma_depth * unit(rng), kMinDepth);
    }
    if (!out.intrinsics.contains(s.u, s.v)) s.visible = false;
  }
  return out;
}

std::vector<std::uint8_t> encode_flow(const FlowSequence& flow) {
  if (flow.samples.size() != flow.num_timesteps * flow.num_points) {
    throw SchemaError("samples", "sample count does not match T*N");
  }
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kFlowFormatVersion);
  w.u32(static_cast<std::uint32_t>(flow.num_timesteps));
  w.u32(static_cast<std::uint32_t>(flow.num_points));
  w.f64(flow.intrinsics.fx);
  w.f64(flow.intrinsics.fy);
  w.f64(flow.intrinsics.cx);
  w.f64(flow.intrinsics.cy);
  w.u32(flow.intrinsics.width);
  w.u32(flow.intrinsics.height);
  w.u32(static_cast<std::uint32_t>(flow.instruction.size()));
  w.bytes(flow.instruction.data(), flow.instruction.size());
  // Rounding to f32 must not push a visible sample onto the far image edge.
  auto coord = [](double x, bool visible, unsigned extent) {
    float f = static_cast<float>(x);
    if (visible && f >= static_cast<float>(extent)) f = std::nextafter(static_cast<float>(extent), 0.0f);
    return f;
  };
  for (const FlowSample& s : flow.samples) {
    w.f32(coord(s.u, s.visible, flow.intrinsics.width));
    w.f32(coord(s.v, s.visible, flow.intrinsics.height));
    w.f32(static_cast<float>(s.depth));
    w.u8(s.visible ? 1 : 0);
  }
  return w.take();
}

FlowSequence decode_flow(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  r.need(4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (r.u8("magic") != kMagic[i]) throw ParseError("bad magic, expected MFLW", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kFlowFormatVersion) {
    throw SchemaError("version", "unsupported version " + std::to_string(version));
  }
  FlowSequence f;
  f.num_timesteps = r.u32("T");
  f.num_points = r.u32("N");
  f.intrinsics.fx = r.f64("fx");
  f.intrinsics.fy = r.f64("fy");
  f.intrinsics.cx = r.f64("cx");
  f.intrinsics.cy = r.f64("cy");
  f.intrinsics.width = r.u32("width");
  f.intrinsics.height = r.u32("height");
  const std::uint32_t len = r.u32("instruction length");
  f.instruction = r.str(len, "instruction");

  const std::uint64_t count = static_cast<std::uint64_t>(f.num_timesteps) * f.num_points;
  const std::uint64_t payload = count * kRecordBytes;
  if (r.remaining() < payload) {
    throw ParseError("payload shorter than declared T*N records", bytes.size());
  }
  if (r.remaining() > payload) {
    throw ParseError("trailing bytes after declared T*N records", r.offset() + payload);
  }
  f.samples.resize(count);
  for (FlowSample& s : f.samples) {
    s.u = r.f32("u");
    s.v = r.f32("v");
    s.depth = r.f32("depth");
    const std::size_t at = r.offset();
    const std::uint8_t vis = r.u8("visibility");
    if (vis > 1) throw ParseError("visibility byte must be 0 or 1", at);
    s.visible = vis == 1;
  }
  try {
    validate(f);
  } catch (const CorruptFlow& e) {
    throw SchemaError("samples", e.what());
  }
  return f;
}

void write_flow(const FlowSequence& flow, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_flow(flow));
}

FlowSequence read_flow(const std::filesystem::path& path) {
  return decode_flow(detail::read_file_bytes(path));
}

std::string export_flow_text(const FlowSequence& flow) {
  nlohmann::json j;
  j["format"] = "MFLW-text";
  j["version"] = kFlowFormatVersion;
  j["T"] = flow.num_timesteps;
  j["N"] = flow.num_points;
  j["intrinsics"] = {{"fx", flow.intrinsics.fx}, {"fy", flow.intrinsics.fy},
                     {"cx", flow.intrinsics.cx}, {"cy", flow.intrinsics.cy},
                     {"width", flow.intrinsics.width}, {"height", flow.intrinsics.height}};
  j["instruction"] = flow.instruction;
  auto frames = nlohmann::json::array();
  for (std::size_t t = 0; t < flow.num_timesteps; ++t) {
    auto frame = nlohmann::json::array();
    for (std::size_t n = 0; n < flow.num_points; ++n) {
      const FlowSample& s = flow.at(t, n);
      frame.push_back({static_cast<float>(s.u), static_cast<float>(s.v), static_cast<float>(s.depth),
                       s.visible ? 1 : 0});
    }
    frames.push_back(std::move(frame));
  }
  j["samples"] = std::move(frames);
  return j.dump(1);
}

}  // namespace flowact::flow
