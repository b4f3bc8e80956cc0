#include "jmod2/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "jmod2/image_io.hpp"

namespace jmod2 {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hit {
  double t = kInf;
  Vec3 normal;
  Vec3 albedo;
  bool obstacle = false;
};

struct ImageBox {
  double u0, v0, u1, v1;
  bool overlaps(const ImageBox& o, double margin) const {
    return u0 - margin < o.u1 && o.u0 - margin < u1 && v0 - margin < o.v1 && o.v0 - margin < v1;
  }
};

// Slab test against an axis-aligned box; returns entry distance along `dir`
// (a ray from the origin) and the face normal.
bool intersect_box(const Vec3& dir, const Vec3& lo, const Vec3& hi, double& t_out, Vec3& n_out) {
  double t_near = -kInf;
  double t_far = kInf;
  Vec3 n_near;
  const double d[3] = {dir.x, dir.y, dir.z};
  const double l[3] = {lo.x, lo.y, lo.z};
  const double h[3] = {hi.x, hi.y, hi.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] == 0.0) {
      if (0.0 < l[axis] || 0.0 > h[axis]) return false;
      continue;
    }
    double t0 = l[axis] / d[axis];
    double t1 = h[axis] / d[axis];
    double sign = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      n_near = {};
      (axis == 0 ? n_near.x : axis == 1 ? n_near.y : n_near.z) = sign;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) return false;
  t_out = t_near;
  n_out = n_near;
  return true;
}

bool intersect_cylinder(const Vec3& dir, const SceneObject& obj, double ground_y, double& t_out,
                        Vec3& n_out) {
  const double radius = obj.width / 2.0;
  const double y_top = ground_y - obj.height;
  bool found = false;
  // Side: (t*dx - X)^2 + (t - Z)^2 = r^2
  const double a = dir.x * dir.x + 1.0;
  const double b = -2.0 * (dir.x * obj.center_x + obj.center_z);
  const double c = obj.center_x * obj.center_x + obj.center_z * obj.center_z - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc >= 0.0) {
    const double t = (-b - std::sqrt(disc)) / (2.0 * a);
    const double y = t * dir.y;
    if (t > 0.0 && y >= y_top && y <= ground_y) {
      t_out = t;
      n_out = Vec3{t * dir.x - obj.center_x, 0.0, t - obj.center_z} * (1.0 / radius);
      found = true;
    }
  }
  // Top cap, visible when looking down onto it.
  if (dir.y > 0.0 && y_top > 0.0) {
    const double t = y_top / dir.y;
    const double dx = t * dir.x - obj.center_x;
    const double dz = t - obj.center_z;
    if (t > 0.0 && dx * dx + dz * dz <= radius * radius && (!found || t < t_out)) {
      t_out = t;
      n_out = {0.0, -1.0, 0.0};
      found = true;
    }
  }
  return found;
}

ImageBox project_bounds(const SceneObject& obj, double ground_y, const CameraModel& cam) {
  ImageBox box{kInf, kInf, -kInf, -kInf};
  for (int i = 0; i < 8; ++i) {
    const double x = obj.center_x + ((i & 1) ? 0.5 : -0.5) * obj.width;
    const double y = (i & 2) ? ground_y : ground_y - obj.height;
    const double z = obj.center_z + ((i & 4) ? 0.5 : -0.5) * obj.depth;
    const double u = cam.focal_px * x / z + cam.cx;
    const double v = cam.focal_px * y / z + cam.cy;
    box.u0 = std::min(box.u0, u);
    box.u1 = std::max(box.u1, u);
    box.v0 = std::min(box.v0, v);
    box.v1 = std::max(box.v1, v);
  }
  return box;
}

Vec3 shade(const Vec3& albedo, const Vec3& normal) {
  static const Vec3 to_light = [] {
    const Vec3 l{0.35, -1.0, -0.45};
    return l * (1.0 / norm(l));
  }();
  const double lambert = 0.35 + 0.65 * std::max(0.0, dot(normal, to_light));
  return {std::clamp(albedo.x * lambert, 0.0, 1.0), std::clamp(albedo.y * lambert, 0.0, 1.0),
          std::clamp(albedo.z * lambert, 0.0, 1.0)};
}

}  // namespace

CameraModel CameraModel::from_fov(int width, int height, double hfov_deg) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.focal_px = (width / 2.0) / std::tan(hfov_deg * std::numbers::pi / 360.0);
  cam.validate();
  return cam;
}

void CameraModel::validate() const {
  if (!(focal_px > 0.0)) throw std::invalid_argument("camera focal_px must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera size must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw std::invalid_argument("principal point outside the image");
  }
}

void SceneSpec::validate() const {
  if (!(depth_range.min > 0.0) || !(depth_range.max <= kFarClampM) ||
      !(depth_range.min <= depth_range.max)) {
    throw std::invalid_argument("depth_range must lie within (0, 40]");
  }
  if (object_count < 0) throw std::invalid_argument("object_count must be >= 0");
  if (!(object_size_range.min > 0.0) || object_size_range.min > object_size_range.max) {
    throw std::invalid_argument("object_size_range must be positive and ordered");
  }
  if (!(far_clamp > 0.0) || far_clamp > kFarClampM) {
    throw std::invalid_argument("far_clamp must lie within (0, 40]");
  }
  if (!(camera_height > 0.0)) throw std::invalid_argument("camera_height must be positive");
}

std::vector<SceneObject> layout_objects(const SceneSpec& spec, const CameraModel& camera) {
  spec.validate();
  if (!spec.objects.empty()) return spec.objects;

  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double z_min = std::max(0.5, spec.depth_range.min);
  const double z_max = std::max(z_min, spec.depth_range.max);
  std::vector<SceneObject> objects;
  std::vector<ImageBox> placed;
  for (int i = 0; i < spec.object_count; ++i) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      SceneObject obj;
      obj.shape = unit(rng) < 0.5 ? ObjectShape::box : ObjectShape::cylinder;
      const double size = uniform(spec.object_size_range.min, spec.object_size_range.max);
      obj.width = size;
      obj.depth = size;
      obj.height = size * uniform(0.9, 1.6);
      obj.center_z = uniform(z_min, z_max) + size / 2.0;
      const double half_fov = camera.cx / camera.focal_px;
      obj.center_x = uniform(-0.8, 0.8) * half_fov * obj.center_z;
      obj.albedo = {uniform(0.25, 0.95), uniform(0.15, 0.9), uniform(0.15, 0.95)};
      const ImageBox box = project_bounds(obj, spec.camera_height, camera);
      const bool clash = std::any_of(placed.begin(), placed.end(),
                                     [&](const ImageBox& o) { return box.overlaps(o, 2.0); });
      if (clash) continue;
      placed.push_back(box);
      objects.push_back(obj);
      break;
    }
  }
  return objects;
}

Sample generate_sample(const SceneSpec& spec, const CameraModel& camera) {
  camera.validate();
  const std::vector<SceneObject> objects = layout_objects(spec, camera);

  // Per-scene ground tint so the ground is not a single constant colour.
  std::mt19937_64 rng(spec.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const Vec3 ground_albedo{0.42 + jitter(rng), 0.5 + jitter(rng), 0.3 + jitter(rng)};

  const int w = camera.width;
  const int h = camera.height;
  const double ground_y = spec.camera_height;
  Sample out;
  out.rgb = Tensor(3, h, w);
  out.depth = DepthMap(w, h, spec.far_clamp);
  out.seg = Mask(w, h, 0);
  out.camera = camera;

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 dir = camera.ray(u, v);
      Hit hit;
      if (spec.ground_plane && dir.y > 0.0) {
        const double t = ground_y / dir.y;
        const double gx = t * dir.x;
        const bool dark = (static_cast<long>(std::floor(gx)) + static_cast<long>(std::floor(t))) % 2 != 0;
        hit = {t, {0.0, -1.0, 0.0}, ground_albedo * (dark ? 0.85 : 1.0), false};
      }
      for (const SceneObject& obj : objects) {
        double t = kInf;
        Vec3 n;
        bool found = false;
        if (obj.shape == ObjectShape::box) {
          const Vec3 lo{obj.center_x - obj.width / 2, ground_y - obj.height, obj.center_z - obj.depth / 2};
          const Vec3 hi{obj.center_x + obj.width / 2, ground_y, obj.center_z + obj.depth / 2};
          found = intersect_box(dir, lo, hi, t, n);
        } else {
          found = intersect_cylinder(dir, obj, ground_y, t, n);
        }
        if (found && t < hit.t) hit = {t, n, obj.albedo, true};
      }

      Vec3 color;
      if (hit.t < spec.far_clamp) {
        out.depth.at(u, v) = hit.t;  // ray z-component is 1, so t is z-depth
        out.seg.at(u, v) = hit.obstacle ? 1 : 0;
        color = shade(hit.albedo, hit.normal);
      } else if (hit.t < kInf) {
        color = shade(hit.albedo, hit.normal) * 0.9 + Vec3{0.7, 0.75, 0.8} * 0.1;
      } else {
        const double blend = static_cast<double>(v) / h;
        color = Vec3{0.45, 0.62, 0.92} * (1.0 - blend) + Vec3{0.75, 0.82, 0.92} * blend;
      }
      out.rgb.at(0, v, u) = color.x;
      out.rgb.at(1, v, u) = color.y;
      out.rgb.at(2, v, u) = color.z;
    }
  }
  return out;
}

Sample center_crop_resample(const Sample& sample, int crop_w, int crop_h) {
  const int w = sample.camera.width;
  const int h = sample.camera.height;
  if (crop_w <= 0 || crop_h <= 0 || crop_w > w || crop_h > h) {
    throw std::invalid_argument("crop must be positive and no larger than the image");
  }
  const double aspect_ratio = (static_cast<double>(crop_w) / crop_h) / (static_cast<double>(w) / h);
  if (std::abs(aspect_ratio - 1.0) > 0.01) {
    throw std::invalid_argument("crop aspect ratio differs from the image by more than 1%");
  }
  const double x0 = (w - crop_w) / 2.0;
  const double y0 = (h - crop_h) / 2.0;
  const double sx = static_cast<double>(crop_w) / w;
  const double sy = static_cast<double>(crop_h) / h;

  Sample out;
  out.rgb = Tensor(3, h, w);
  out.depth = DepthMap(w, h);
  out.seg = Mask(w, h);
  out.camera = sample.camera;
  out.camera.focal_px = sample.camera.focal_px * (static_cast<double>(w) / crop_w);

  for (int v = 0; v < h; ++v) {
    const double src_y = y0 + (v + 0.5) * sy;
    const int ny = std::clamp(static_cast<int>(std::floor(src_y)), 0, h - 1);
    const double by = std::clamp(src_y - 0.5, 0.0, h - 1.0);
    const int y_lo = static_cast<int>(std::floor(by));
    const int y_hi = std::min(y_lo + 1, h - 1);
    const double fy = by - y_lo;
    for (int u = 0; u < w; ++u) {
      const double src_x = x0 + (u + 0.5) * sx;
      const int nx = std::clamp(static_cast<int>(std::floor(src_x)), 0, w - 1);
      out.depth.at(u, v) = sample.depth.at(nx, ny);
      out.seg.at(u, v) = sample.seg.at(nx, ny);

      const double bx = std::clamp(src_x - 0.5, 0.0, w - 1.0);
      const int x_lo = static_cast<int>(std::floor(bx));
      const int x_hi = std::min(x_lo + 1, w - 1);
      const double fx = bx - x_lo;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * sample.rgb.at(c, y_lo, x_lo) + fx * sample.rgb.at(c, y_lo, x_hi);
        const double bottom = (1.0 - fx) * sample.rgb.at(c, y_hi, x_lo) + fx * sample.rgb.at(c, y_hi, x_hi);
        out.rgb.at(c, v, u) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

DatasetManifest render_dataset(std::span<const SceneSpec> specs, const CameraModel& camera,
                               const std::filesystem::path& out_dir, double obstacle_range_m) {
  camera.validate();
  for (const SceneSpec& spec : specs) spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.camera = camera;
  manifest.obstacle_range_m = obstacle_range_m;
  manifest.far_clamp_m = specs.empty() ? kFarClampM : specs.front().far_clamp;
  manifest.samples.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) manifest.samples[i] = sample_id(i);

  std::exception_ptr failure;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(specs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Sample sample = generate_sample(specs[i], camera);
      write_sample(out_dir / manifest.samples[i], sample);
    } catch (...) {
#pragma omp critical(jmod2_render_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace jmod2
