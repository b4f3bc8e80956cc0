#include "jmod2/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace jmod2 {
namespace {

constexpr std::size_t kDepthHeaderBytes = 16;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

// Parses a binary PNM header ("P5"/"P6", width, height, maxval) and returns the
// offset of the first pixel byte.
std::size_t parse_pnm_header(const std::vector<char>& bytes, const char* magic,
                             const std::filesystem::path& path, int& width, int& height) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string token;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      token.push_back(bytes[pos++]);
    }
    return token;
  };
  if (next_token() != magic) throw IoError("not a " + std::string(magic) + " file: " + path.string());
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    if (std::stoi(next_token()) != 255) throw IoError("unsupported maxval in " + path.string());
  } catch (const std::logic_error&) {
    throw IoError("malformed PNM header: " + path.string());
  }
  if (width <= 0 || height <= 0) throw IoError("bad PNM dimensions: " + path.string());
  return pos + 1;  // single whitespace byte after maxval
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.channels() != 3) throw ShapeError("write_ppm expects a 3-channel tensor");
  auto out = open_out(path);
  out << "P6\n" << rgb.width() << ' ' << rgb.height() << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(rgb.width()) * 3);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) row[x * 3 + c] = static_cast<char>(to_byte(rgb.at(c, y, x)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  finish(out, path);
}

Tensor read_ppm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  int w = 0, h = 0;
  const std::size_t offset = parse_pnm_header(bytes, "P6", path, w, h);
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h * 3) {
    throw IoError("truncated PPM: " + path.string());
  }
  Tensor rgb(3, h, w);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = px[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    }
  }
  return rgb;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<char> px(mask.size());
  std::transform(mask.values.begin(), mask.values.end(), px.begin(),
                 [](std::uint8_t v) { return static_cast<char>(v ? 255 : 0); });
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
  finish(out, path);
}

Mask read_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  int w = 0, h = 0;
  const std::size_t offset = parse_pnm_header(bytes, "P5", path, w, h);
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h) {
    throw IoError("truncated PGM: " + path.string());
  }
  Mask mask(w, h);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.values[i] = bytes[offset + i] != 0 ? 1 : 0;
  return mask;
}

void write_depth_f32(const std::filesystem::path& path, const DepthMap& depth) {
  std::string header = "F32 " + std::to_string(depth.width) + " " + std::to_string(depth.height);
  if (header.size() > kDepthHeaderBytes - 1) throw IoError("depth map too large for header: " + path.string());
  header.resize(kDepthHeaderBytes - 1, ' ');
  header.push_back('\n');
  auto out = open_out(path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> payload(depth.size() * 4);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(depth.values[i]));
    for (int b = 0; b < 4; ++b) payload[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  finish(out, path);
}

DepthMap read_depth_f32(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kDepthHeaderBytes) throw IoError("truncated depth header: " + path.string());
  std::istringstream header(std::string(bytes.data(), kDepthHeaderBytes));
  std::string magic;
  int w = 0, h = 0;
  header >> magic >> w >> h;
  if (magic != "F32" || w <= 0 || h <= 0) throw IoError("malformed depth header: " + path.string());
  DepthMap depth(w, h);
  if (bytes.size() < kDepthHeaderBytes + depth.size() * 4) throw IoError("truncated depth payload: " + path.string());
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + kDepthHeaderBytes);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(px[i * 4 + b]) << (8 * b);
    depth.values[i] = std::bit_cast<float>(bits);
  }
  return depth;
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

void write_sample(const std::filesystem::path& dir, const Sample& sample) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_ppm(dir / "rgb.ppm", sample.rgb);
  write_depth_f32(dir / "depth.f32", sample.depth);
  write_pgm(dir / "seg.pgm", sample.seg);
}

Sample read_sample(const std::filesystem::path& dir, const CameraModel& camera) {
  Sample s;
  s.rgb = read_ppm(dir / "rgb.ppm");
  s.depth = read_depth_f32(dir / "depth.f32");
  s.seg = read_pgm(dir / "seg.pgm");
  s.camera = camera;
  if (s.rgb.width() != camera.width || s.rgb.height() != camera.height || s.depth.width != camera.width ||
      s.depth.height != camera.height || !s.seg.same_shape(s.depth)) {
    throw IoError("sample rasters do not match the camera size: " + dir.string());
  }
  return s;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  nlohmann::json j;
  j["samples"] = manifest.samples;
  j["camera"] = {{"focal_px", manifest.camera.focal_px},
                 {"width", manifest.camera.width},
                 {"height", manifest.camera.height},
                 {"cx", manifest.camera.cx},
                 {"cy", manifest.camera.cy}};
  j["far_clamp_m"] = manifest.far_clamp_m;
  j["obstacle_range_m"] = manifest.obstacle_range_m;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    m.samples = j.at("samples").get<std::vector<std::string>>();
    const auto& cam = j.at("camera");
    m.camera.focal_px = cam.at("focal_px").get<double>();
    m.camera.width = cam.at("width").get<int>();
    m.camera.height = cam.at("height").get<int>();
    m.camera.cx = cam.value("cx", m.camera.width / 2.0);
    m.camera.cy = cam.value("cy", m.camera.height / 2.0);
    m.far_clamp_m = j.value("far_clamp_m", kFarClampM);
    m.obstacle_range_m = j.value("obstacle_range_m", kObstacleRangeM);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.camera.validate();
  return m;
}

}  // namespace jmod2
