#include "evsurf/scenegen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace evsurf {

double sdf_sphere(const Vec3& p, const Vec3& centre, double radius) {
  return (p - centre).norm() - radius;
}

double sdf_box(const Vec3& p, const Vec3& centre, const Vec3& half_extent) {
  const Vec3 q = (p - centre).cwiseAbs() - half_extent;
  const Vec3 outside = q.cwiseMax(0.0);
  return outside.norm() + std::min(q.maxCoeff(), 0.0);
}

double sdf_torus(const Vec3& p, const Vec3& centre, double major, double minor) {
  const Vec3 q = p - centre;
  const double ring = std::hypot(q.x(), q.y()) - major;
  return std::hypot(ring, q.z()) - minor;
}

Vec3 checker_colour(const Vec3& p, const Vec3& colour_a, const Vec3& colour_b,
                    double period) {
  const auto cell = [period](double v) {
    return static_cast<long long>(std::floor(v / period));
  };
  const long long parity = cell(p.x()) + cell(p.y()) + cell(p.z());
  return (parity % 2 + 2) % 2 == 0 ? colour_a : colour_b;
}

Vec3 latlong_gradient(const Vec3& p, const Vec3& pole, const Vec3& equator) {
  const double r = p.norm();
  const double lat = r > 1e-12 ? std::abs(p.z() / r) : 0.0;
  return lat * pole + (1.0 - lat) * equator;
}

AnalyticScene make_scene(const std::string& name) {
  AnalyticScene scene;
  scene.name = name;
  // Albedos stay below ~0.75 so the log-linear working range of the
  // radiance field (terminal sigmoid in (0,1)) can represent them.
  if (name == "sphere_checker") {
    scene.sdf = [](const Vec3& p) { return sdf_sphere(p, Vec3::Zero(), 0.35); };
    scene.colour = [](const Vec3& p) {
      return checker_colour(p, Vec3(0.70, 0.25, 0.20), Vec3(0.20, 0.35, 0.70), 0.14);
    };
  } else if (name == "two_spheres") {
    scene.sdf = [](const Vec3& p) {
      return sdf_union(sdf_sphere(p, Vec3(0.0, 0.0, -0.12), 0.32),
                       sdf_sphere(p, Vec3(0.0, 0.0, 0.28), 0.18));
    };
    scene.colour = [](const Vec3& p) {
      return checker_colour(p, Vec3(0.65, 0.55, 0.20), Vec3(0.25, 0.25, 0.60), 0.12);
    };
  } else if (name == "torus") {
    scene.sdf = [](const Vec3& p) { return sdf_torus(p, Vec3::Zero(), 0.30, 0.12); };
    scene.colour = [](const Vec3& p) {
      return latlong_gradient(p, Vec3(0.70, 0.30, 0.25), Vec3(0.25, 0.45, 0.65));
    };
  } else if (name == "box") {
    scene.sdf = [](const Vec3& p) {
      return sdf_box(p, Vec3::Zero(), Vec3(0.28, 0.22, 0.30));
    };
    scene.colour = [](const Vec3& p) {
      return checker_colour(p, Vec3(0.70, 0.60, 0.25), Vec3(0.30, 0.30, 0.30), 0.15);
    };
  } else {
    throw InvalidArgument("unknown scene preset: '" + name + "'");
  }
  return scene;
}

Trajectory seiffert_trajectory(int n_frames, double revolutions, double radius,
                               double duration) {
  require(n_frames >= 2, "seiffert_trajectory: need at least 2 frames");
  require(revolutions > 0.0 && radius > 0.0 && duration > 0.0,
          "seiffert_trajectory: non-positive inputs");
  Trajectory traj;
  traj.n_frames = n_frames;
  traj.revolutions = revolutions;
  traj.poses.reserve(static_cast<std::size_t>(n_frames));
  // Polar sweep stops short of the poles so the look-at up vector never
  // degenerates.
  const double theta_margin = 0.35;
  const double theta_base = M_PI - theta_margin;  // near the south pole
  const double theta_apex = theta_margin;
  for (int i = 0; i < n_frames; ++i) {
    const double u = double(i) / double(n_frames - 1);
    const double azimuth = 2.0 * M_PI * revolutions * u;
    const double theta = theta_base + (theta_apex - theta_base) * u;
    const Vec3 centre = radius * Vec3(std::sin(theta) * std::cos(azimuth),
                                      std::sin(theta) * std::sin(azimuth),
                                      std::cos(theta));
    TimedPose tp;
    tp.time = duration * u;
    tp.pose = look_at_pose(centre, Vec3::Zero());
    traj.poses.push_back(tp);
  }
  return traj;
}

CameraIntrinsics synthetic_intrinsics(int width, int height) {
  require(width >= 2 && height >= 2, "synthetic_intrinsics: degenerate resolution");
  CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.fx = intr.fy = 1.1 * double(width);  // ~49 degree horizontal FOV
  intr.cx = double(width - 1) / 2.0;
  intr.cy = double(height - 1) / 2.0;
  return intr;
}

namespace {

constexpr int kMaxSteps = 256;
constexpr double kHitTolerance = 1e-4;
constexpr double kMaxDepth = 6.0;

const Vec3 kLightDir = Vec3(0.4, 0.3, 0.85).normalized();
constexpr double kAmbient = 0.2;

struct TraceHit {
  bool hit = false;
  Vec3 position = Vec3::Zero();
};

TraceHit sphere_trace(const AnalyticScene& scene, const Ray& ray) {
  double t = 0.0;
  for (int step = 0; step < kMaxSteps && t < kMaxDepth; ++step) {
    const Vec3 p = ray.origin + t * ray.direction;
    const double d = scene.sdf(p);
    if (d < kHitTolerance) return {true, p};
    t += d;
  }
  return {};
}

Vec3 numeric_normal(const AnalyticScene& scene, const Vec3& p) {
  constexpr double h = 1e-5;
  Vec3 n;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    n[a] = scene.sdf(hi) - scene.sdf(lo);
  }
  const double len = n.norm();
  return len > 1e-12 ? Vec3(n / len) : Vec3::UnitZ();
}

Vec3 shade(const AnalyticScene& scene, const Vec3& p) {
  const Vec3 albedo = scene.colour(p);
  const Vec3 n = numeric_normal(scene, p);
  const double diffuse = std::max(n.dot(kLightDir), 0.0);
  return (kAmbient + (1.0 - kAmbient) * diffuse) * albedo;
}

}  // namespace

Image3 sphere_trace_render(const AnalyticScene& scene, const CameraModel& cam) {
  require(cam.valid(), "sphere_trace_render: invalid camera");
  Image3 img(cam.intrinsics.width, cam.intrinsics.height);
#pragma omp parallel for
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Ray ray = generate_ray(cam, double(x), double(y));
      const TraceHit hit = sphere_trace(scene, ray);
      img.set_pixel(x, y, hit.hit ? shade(scene, hit.position) : scene.background);
    }
  }
  return img;
}

Image1 sphere_trace_mask(const AnalyticScene& scene, const CameraModel& cam) {
  require(cam.valid(), "sphere_trace_mask: invalid camera");
  Image1 mask(cam.intrinsics.width, cam.intrinsics.height);
#pragma omp parallel for
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const Ray ray = generate_ray(cam, double(x), double(y));
      mask.at(x, y) = sphere_trace(scene, ray).hit ? 1.0 : 0.0;
    }
  }
  return mask;
}

DatasetResult build_dataset(const AnalyticScene& scene, const Trajectory& traj,
                            const SimParams& sim, const std::string& out_dir,
                            const std::string& config_snapshot, int gt_resolution) {
  require(!traj.poses.empty(), "build_dataset: empty trajectory");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const DatasetPaths paths;

  const CameraIntrinsics intr = synthetic_intrinsics(sim.width, sim.height);

  std::vector<Image3> frames(traj.poses.size());
  std::vector<double> times(traj.poses.size());
#pragma omp parallel for
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    CameraModel cam{intr, traj.poses[i].pose};
    frames[i] = sphere_trace_render(scene, cam);
  }
  for (std::size_t i = 0; i < traj.poses.size(); ++i) times[i] = traj.poses[i].time;

  DatasetResult result;
  result.stream = simulate_events(frames, times, sim.threshold, sim.gamma);
  result.n_events = result.stream.events.size();
  result.duration = times.back() - times.front();

  write_event_file(out_dir + "/" + paths.events, result.stream);
  write_poses_json(out_dir + "/" + paths.poses, traj.poses);
  write_intrinsics_json(out_dir + "/" + paths.intrinsics, intr);

  const SdfGrid gt_grid = bake_grid_from(
      scene.sdf, gt_resolution, Bounds{Vec3::Constant(-0.6), Vec3::Constant(0.6)});
  const TriMesh gt_mesh = marching_cubes(gt_grid);
  export_mesh(gt_mesh, out_dir + "/" + paths.gt_mesh, MeshFormat::kPly);

  std::ofstream cfg(out_dir + "/" + paths.config);
  if (!cfg) throw RuntimeFailure("cannot write config snapshot in " + out_dir);
  cfg << config_snapshot;
  return result;
}

}  // namespace evsurf
