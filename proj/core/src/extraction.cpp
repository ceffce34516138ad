#include "flowact/extraction.hpp"

#include "flowact/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <unordered_set>

namespace flowact::extraction {

namespace {

using cplx = std::complex<double>;

double image_diagonal(unsigned width, unsigned height) {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

// Maximum displacement of track m from its first visible position.
double max_displacement(const TrackSet& tracks, std::size_t m) {
  const TrackPoint* ref = nullptr;
  double best = 0.0;
  for (std::size_t t = 0; t < tracks.num_frames; ++t) {
    const TrackPoint& p = tracks.at(m, t);
    if (!p.visible) continue;
    if (!ref) {
      ref = &p;
      continue;
    }
    best = std::max(best, std::hypot(p.u - ref->u, p.v - ref->v));
  }
  return best;
}

// Horizontal then vertical pass; a pixel survives a pass when the whole window lies inside the
// image and is set.
std::vector<std::uint8_t> erode_pass(const std::vector<std::uint8_t>& in, unsigned width, unsigned height,
                                     unsigned radius, bool horizontal) {
  std::vector<std::uint8_t> out(in.size(), 0);
  const unsigned lines = horizontal ? height : width;
  const unsigned len = horizontal ? width : height;
  std::vector<unsigned> prefix(len + 1);
  for (unsigned l = 0; l < lines; ++l) {
    auto idx = [&](unsigned i) {
      return horizontal ? static_cast<std::size_t>(l) * width + i : static_cast<std::size_t>(i) * width + l;
    };
    prefix[0] = 0;
    for (unsigned i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + (in[idx(i)] ? 1u : 0u);
    for (unsigned i = 0; i < len; ++i) {
      if (i < radius || i + radius >= len) continue;
      const unsigned ones = prefix[i + radius + 1] - prefix[i - radius];
      if (ones == 2 * radius + 1) out[idx(i)] = 1;
    }
  }
  return out;
}

}  // namespace

void TrackSet::validate() const {
  if (num_frames < 2) throw InvalidArgument("track set needs at least 2 frames");
  if (samples.size() != num_points * num_frames) throw InvalidArgument("track sample count does not match M*T");
  for (std::size_t m = 0; m < num_points; ++m) {
    for (std::size_t t = 0; t < num_frames; ++t) {
      const TrackPoint& p = at(m, t);
      if (!p.visible) continue;
      if (!(p.u >= 0.0 && p.v >= 0.0 && p.u < width && p.v < height)) {
        throw InvalidArgument("visible track sample outside the image (m=" + std::to_string(m) +
                              ", t=" + std::to_string(t) + ")");
      }
    }
  }
}

Mask Mask::filled(unsigned width, unsigned height, bool value) {
  return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value ? 1 : 0)};
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t b) { return b != 0; }));
}

double iou(const BBox& a, const BBox& b) {
  const double iu = std::max(0.0, std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min));
  const double iv = std::max(0.0, std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min));
  const double inter = iu * iv;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

InitialPoints seed_grid_points(unsigned width, unsigned height, unsigned stride, const Mask& exclude) {
  if (stride < 1) throw InvalidArgument("grid stride must be at least 1");
  const bool use_mask = exclude.width != 0 || exclude.height != 0;
  if (use_mask && (exclude.width != width || exclude.height != height)) {
    throw SizeMismatch("exclusion mask size does not match the image");
  }
  InitialPoints out;
  for (unsigned v = 0; v < height; v += stride) {
    for (unsigned u = 0; u < width; u += stride) {
      if (use_mask && exclude.at(u, v)) continue;
      out.emplace_back(u, v);
    }
  }
  if (out.empty()) throw EmptyResult("every grid point is masked out");
  return out;
}

std::vector<std::size_t> detect_moving_points(const TrackSet& tracks, double threshold_frac) {
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0)) {
    throw InvalidArgument("threshold fraction must lie in (0, 1)");
  }
  const double threshold = threshold_frac * image_diagonal(tracks.width, tracks.height);
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < tracks.num_points; ++m) {
    if (max_displacement(tracks, m) > threshold) out.push_back(m);
  }
  return out;
}

BBox max_bounding_box(const std::vector<Vec2>& points, double margin, unsigned width, unsigned height) {
  if (points.empty()) throw EmptyInput("bounding box of an empty point list");
  BBox b{points[0].x(), points[0].y(), points[0].x(), points[0].y()};
  for (const Vec2& p : points) {
    b.u_min = std::min(b.u_min, p.x());
    b.v_min = std::min(b.v_min, p.y());
    b.u_max = std::max(b.u_max, p.x());
    b.v_max = std::max(b.v_max, p.y());
  }
  const double umax = width > 0 ? width - 1.0 : 0.0;
  const double vmax = height > 0 ? height - 1.0 : 0.0;
  b.u_min = std::clamp(b.u_min - margin, 0.0, umax);
  b.v_min = std::clamp(b.v_min - margin, 0.0, vmax);
  b.u_max = std::clamp(b.u_max + margin, 0.0, umax);
  b.v_max = std::clamp(b.v_max + margin, 0.0, vmax);
  return b;
}

Mask erode_mask(const Mask& mask, unsigned radius) {
  if (radius == 0) return mask;
  Mask out = mask;
  out.data = erode_pass(mask.data, mask.width, mask.height, radius, true);
  out.data = erode_pass(out.data, mask.width, mask.height, radius, false);
  return out;
}

Mask box_mask(const BBox& box, unsigned width, unsigned height) {
  Mask m = Mask::filled(width, height, false);
  const long u0 = std::max(0L, static_cast<long>(std::ceil(box.u_min)));
  const long v0 = std::max(0L, static_cast<long>(std::ceil(box.v_min)));
  const long u1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::floor(box.u_max)));
  const long v1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::floor(box.v_max)));
  for (long v = v0; v <= v1; ++v) {
    for (long u = u0; u <= u1; ++u) m.set(static_cast<unsigned>(u), static_cast<unsigned>(v), true);
  }
  return m;
}

Vec2 Similarity2D::apply(const Vec2& p) const {
  const cplx z = cplx(a_re, a_im) * cplx(p.x(), p.y()) + cplx(b_u, b_v);
  return {z.real(), z.imag()};
}

Vec2 Similarity2D::apply_inverse(const Vec2& p) const {
  const cplx z = (cplx(p.x(), p.y()) - cplx(b_u, b_v)) / cplx(a_re, a_im);
  return {z.real(), z.imag()};
}

std::vector<Similarity2D> fit_camera_motion(const TrackSet& tracks, const std::vector<std::size_t>& background) {
  if (background.size() < 3) throw DegenerateBackground("camera-motion fit needs at least 3 background points");
  std::vector<Similarity2D> out(tracks.num_frames);
  for (std::size_t t = 0; t < tracks.num_frames; ++t) {
    std::vector<cplx> z0;
    std::vector<cplx> zt;
    for (std::size_t m : background) {
      if (m >= tracks.num_points) throw IndexOutOfRange("background index out of range");
      const TrackPoint& p0 = tracks.at(m, 0);
      const TrackPoint& pt = tracks.at(m, t);
      if (!p0.visible || !pt.visible) continue;
      z0.emplace_back(p0.u, p0.v);
      zt.emplace_back(pt.u, pt.v);
    }
    if (z0.size() < 3) {
      throw DegenerateBackground("fewer than 3 visible background points in frame " + std::to_string(t));
    }
    cplx c0 = 0.0;
    cplx ct = 0.0;
    for (std::size_t i = 0; i < z0.size(); ++i) {
      c0 += z0[i];
      ct += zt[i];
    }
    c0 /= static_cast<double>(z0.size());
    ct /= static_cast<double>(z0.size());

    // Collinearity test on the 2x2 scatter of the frame-0 background.
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    cplx num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < z0.size(); ++i) {
      const cplx a = z0[i] - c0;
      const cplx b = zt[i] - ct;
      sxx += a.real() * a.real();
      syy += a.imag() * a.imag();
      sxy += a.real() * a.imag();
      num += std::conj(a) * b;
      den += std::norm(a);
    }
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    const double lmin = 0.5 * tr - disc;
    const double lmax = 0.5 * tr + disc;
    if (!(lmax > 0.0) || lmin <= 1e-9 * lmax) {
      throw DegenerateBackground("background points are collinear in frame " + std::to_string(t));
    }
    const cplx a = num / den;
    const cplx b = ct - a * c0;
    out[t] = {a.real(), a.imag(), b.real(), b.imag()};
  }
  return out;
}

TrackSet remove_camera_motion(const TrackSet& tracks, const std::vector<std::size_t>& background) {
  const std::vector<Similarity2D> motion = fit_camera_motion(tracks, background);
  TrackSet out = tracks;
  for (std::size_t m = 0; m < tracks.num_points; ++m) {
    for (std::size_t t = 0; t < tracks.num_frames; ++t) {
      TrackPoint& p = out.at(m, t);
      if (!p.visible) continue;
      const Vec2 q = motion[t].apply_inverse({p.u, p.v});
      p.u = q.x();
      p.v = q.y();
      if (!(p.u >= 0.0 && p.v >= 0.0 && p.u < tracks.width && p.v < tracks.height)) p.visible = false;
    }
  }
  return out;
}

namespace {

// Fits on all candidates, then twice keeps the half with the lowest residual and refits.
std::vector<std::size_t> trimmed_background(const TrackSet& tracks, std::vector<std::size_t> candidates) {
  for (int round = 0; round < 2; ++round) {
    const std::vector<Similarity2D> motion = fit_camera_motion(tracks, candidates);
    std::vector<std::pair<double, std::size_t>> residual;
    residual.reserve(candidates.size());
    for (std::size_t m : candidates) {
      const TrackPoint& p0 = tracks.at(m, 0);
      double worst = 0.0;
      for (std::size_t t = 0; t < tracks.num_frames; ++t) {
        const TrackPoint& p = tracks.at(m, t);
        if (!p.visible) continue;
        const Vec2 q = motion[t].apply_inverse({p.u, p.v});
        worst = std::max(worst, std::hypot(q.x() - p0.u, q.y() - p0.v));
      }
      residual.emplace_back(worst, m);
    }
    std::sort(residual.begin(), residual.end());
    const std::size_t keep = std::max<std::size_t>(3, residual.size() / 2);
    const double cut = residual[keep - 1].first;
    std::vector<std::size_t> next;
    for (const auto& [r, m] : residual) {
      if (r <= cut) next.push_back(m);
    }
    std::sort(next.begin(), next.end());
    candidates = std::move(next);
  }
  return candidates;
}

}  // namespace

ExtractionResult extract_episode(const TrackSet& tracks, const DepthMapStack& depth, const Mask& gripper,
                                 const geometry::CameraIntrinsics& intrinsics, const ExtractionConfig& config,
                                 const std::string& instruction) {
  tracks.validate();
  intrinsics.validate();
  if (intrinsics.width != tracks.width || intrinsics.height != tracks.height) {
    throw SizeMismatch("intrinsics image size does not match the tracks");
  }
  if (depth.size() != tracks.num_frames) throw SizeMismatch("depth map count does not match the frame count");
  for (const DepthMap& d : depth) {
    if (d.width != tracks.width || d.height != tracks.height) throw SizeMismatch("depth map size mismatch");
  }
  if (gripper.width != tracks.width || gripper.height != tracks.height) {
    throw SizeMismatch("gripper mask size mismatch");
  }

  // Seeds: grid points outside the gripper, matched to tracks by their first-frame pixel.
  const InitialPoints seeds = seed_grid_points(tracks.width, tracks.height, config.grid_stride, gripper);
  std::unordered_set<long long> seed_keys;
  auto key = [](long u, long v) { return (static_cast<long long>(v) << 32) | static_cast<long long>(u); };
  for (const Vec2& s : seeds) seed_keys.insert(key(static_cast<long>(s.x()), static_cast<long>(s.y())));

  const double stride = config.grid_stride;
  std::vector<std::size_t> seeded;
  for (std::size_t m = 0; m < tracks.num_points; ++m) {
    const TrackPoint& p = tracks.at(m, 0);
    if (!p.visible) continue;
    const double gu = std::round(p.u / stride) * stride;
    const double gv = std::round(p.v / stride) * stride;
    if (std::abs(p.u - gu) > config.seed_match_px || std::abs(p.v - gv) > config.seed_match_px) continue;
    if (seed_keys.count(key(static_cast<long>(gu), static_cast<long>(gv)))) seeded.push_back(m);
  }

  TrackSet working = tracks;
  if (config.remove_camera_motion) {
    working = remove_camera_motion(tracks, trimmed_background(tracks, seeded));
  }

  const double threshold = config.threshold_frac * image_diagonal(tracks.width, tracks.height);
  std::vector<std::size_t> moving;
  for (std::size_t m : seeded) {
    if (working.at(m, 0).visible && max_displacement(working, m) > threshold) moving.push_back(m);
  }
  if (moving.empty()) throw NoMovingObject("no seeded track exceeds the movement threshold");

  std::vector<Vec2> first;
  first.reserve(moving.size());
  for (std::size_t m : moving) first.emplace_back(working.at(m, 0).u, working.at(m, 0).v);
  const BBox bbox = max_bounding_box(first, config.bbox_margin, tracks.width, tracks.height);
  const Mask inside = erode_mask(box_mask(bbox, tracks.width, tracks.height), config.erosion_radius);

  std::vector<std::size_t> selected;
  for (std::size_t m : moving) {
    const TrackPoint& p = working.at(m, 0);
    if (inside.at(std::lround(p.u), std::lround(p.v))) selected.push_back(m);
  }
  if (selected.size() < 3) throw NoMovingObject("fewer than 3 moving points inside the object box");

  // Depth is looked up at the raw tracked pixel (the depth maps are in raw camera frames);
  // the emitted (u, v) are the motion-compensated coordinates.
  ExtractionResult result;
  result.bbox = bbox;
  result.track_indices = selected;
  result.flow = flow::make_flow(tracks.num_frames, selected.size(), intrinsics, instruction);
  for (std::size_t n = 0; n < selected.size(); ++n) {
    const std::size_t m = selected[n];
    for (std::size_t t = 0; t < tracks.num_frames; ++t) {
      const TrackPoint& raw = tracks.at(m, t);
      const TrackPoint& p = working.at(m, t);
      flow::FlowSample& s = result.flow.at(t, n);
      s.u = p.u;
      s.v = p.v;
      if (!raw.visible || !p.visible) continue;
      const long pu = std::clamp(std::lround(raw.u), 0L, static_cast<long>(tracks.width) - 1);
      const long pv = std::clamp(std::lround(raw.v), 0L, static_cast<long>(tracks.height) - 1);
      const float d = depth[t].at(static_cast<unsigned>(pu), static_cast<unsigned>(pv));
      if (!(d > 0.0f)) continue;
      s.depth = d;
      s.visible = true;
    }
  }
  flow::validate(result.flow);
  return result;
}

}  // namespace flowact::extraction
