#include "binary_io.hpp"
#include "flowact/errors.hpp"
#include "flowact/extraction.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace flowact::extraction {

namespace {

constexpr std::uint8_t kDepthMagic[4] = {0x44, 0x4D, 0x41, 0x50};  // "DMAP"

}  // namespace

void write_tracks(const TrackSet& tracks, const std::filesystem::path& path) {
  nlohmann::json j;
  j["M"] = tracks.num_points;
  j["T"] = tracks.num_frames;
  j["width"] = tracks.width;
  j["height"] = tracks.height;
  auto all = nlohmann::json::array();
  for (std::size_t m = 0; m < tracks.num_points; ++m) {
    auto track = nlohmann::json::array();
    for (std::size_t t = 0; t < tracks.num_frames; ++t) {
      const TrackPoint& p = tracks.at(m, t);
      track.push_back({p.u, p.v, p.visible ? 1 : 0});
    }
    all.push_back(std::move(track));
  }
  j["tracks"] = std::move(all);
  detail::write_file_text(path, j.dump());
}

TrackSet read_tracks(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("track file: ") + e.what(), e.byte);
  }
  TrackSet ts;
  try {
    ts.num_points = j.at("M").get<std::size_t>();
    ts.num_frames = j.at("T").get<std::size_t>();
    ts.width = j.at("width").get<unsigned>();
    ts.height = j.at("height").get<unsigned>();
    const auto& all = j.at("tracks");
    if (all.size() != ts.num_points) throw SchemaError("tracks", "expected M tracks");
    ts.samples.reserve(ts.num_points * ts.num_frames);
    for (const auto& track : all) {
      if (track.size() != ts.num_frames) throw SchemaError("tracks", "expected T samples per track");
      for (const auto& s : track) {
        ts.samples.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<int>() != 0});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("tracks", e.what());
  }
  try {
    ts.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("tracks", e.what());
  }
  return ts;
}

std::vector<std::uint8_t> encode_depth_map(const DepthMap& map) {
  if (map.data.size() != static_cast<std::size_t>(map.width) * map.height) {
    throw SchemaError("data", "depth map size does not match width*height");
  }
  detail::ByteWriter w;
  w.bytes(kDepthMagic, 4);
  w.u32(kDepthFormatVersion);
  w.u32(map.width);
  w.u32(map.height);
  for (float d : map.data) w.f32(d);
  return w.take();
}

DepthMap decode_depth_map(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  r.need(4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (r.u8("magic") != kDepthMagic[i]) throw ParseError("bad magic, expected DMAP", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kDepthFormatVersion) {
    throw SchemaError("version", "unsupported version " + std::to_string(version));
  }
  DepthMap map;
  map.width = r.u32("width");
  map.height = r.u32("height");
  const std::uint64_t payload = static_cast<std::uint64_t>(map.width) * map.height * sizeof(float);
  if (r.remaining() < payload) throw ParseError("payload shorter than width*height pixels", bytes.size());
  if (r.remaining() > payload) throw ParseError("trailing bytes after depth payload", r.offset() + payload);
  map.data.resize(static_cast<std::size_t>(map.width) * map.height);
  for (float& d : map.data) d = r.f32("depth");
  return map;
}

void write_depth_map(const DepthMap& map, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_depth_map(map));
}

DepthMap read_depth_map(const std::filesystem::path& path) {
  return decode_depth_map(detail::read_file_bytes(path));
}

void write_depth_stack(const DepthMapStack& stack, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < stack.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.dmap", t);
    write_depth_map(stack[t], dir / name);
  }
}

DepthMapStack read_depth_stack(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dmap") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .dmap files in " + dir.string());
  DepthMapStack stack;
  stack.reserve(files.size());
  for (const auto& f : files) stack.push_back(read_depth_map(f));
  return stack;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  std::string header = "P4\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const std::size_t row_bytes = (mask.width + 7) / 8;
  for (unsigned v = 0; v < mask.height; ++v) {
    std::vector<std::uint8_t> row(row_bytes, 0);
    for (unsigned u = 0; u < mask.width; ++u) {
      if (mask.at(u, v)) row[u / 8] |= static_cast<std::uint8_t>(0x80u >> (u % 8));
    }
    bytes.insert(bytes.end(), row.begin(), row.end());
  }
  detail::write_file_bytes(path, bytes);
}

Mask read_mask(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw ParseError(std::string("expected ") + what, pos);
    unsigned long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > (1ul << 20)) throw ParseError(std::string(what) + " too large", pos);
      ++pos;
    }
    return static_cast<unsigned>(value);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '4') throw ParseError("not a binary PBM (P4)", 0);
  pos = 2;
  Mask m;
  m.width = read_uint("width");
  m.height = read_uint("height");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("missing header terminator", pos);
  ++pos;
  const std::size_t row_bytes = (m.width + 7) / 8;
  if (bytes.size() - pos < row_bytes * m.height) throw ParseError("truncated PBM raster", bytes.size());
  m.data.assign(static_cast<std::size_t>(m.width) * m.height, 0);
  for (unsigned v = 0; v < m.height; ++v) {
    for (unsigned u = 0; u < m.width; ++u) {
      const std::uint8_t byte = bytes[pos + v * row_bytes + u / 8];
      m.set(u, v, (byte & (0x80u >> (u % 8))) != 0);
    }
  }
  return m;
}

}  // namespace flowact::extraction
