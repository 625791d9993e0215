#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "evsurf/camera.hpp"
#include "evsurf/events.hpp"
#include "evsurf/image.hpp"
#include "evsurf/meshing.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// Closed-form scene: a Lipschitz-1 signed distance field plus a surface
/// colour function, rendered against a constant background.
struct AnalyticScene {
  std::function<double(const Vec3&)> sdf;
  std::function<Vec3(const Vec3&)> colour;  // surface albedo at a point
  Vec3 background = Vec3::Constant(159.0 / 255.0);
  std::string name;
};

// Primitive SDFs (all Lipschitz-1) and compositions.
double sdf_sphere(const Vec3& p, const Vec3& centre, double radius);
double sdf_box(const Vec3& p, const Vec3& centre, const Vec3& half_extent);
double sdf_torus(const Vec3& p, const Vec3& centre, double major, double minor);
inline double sdf_union(double a, double b) { return std::min(a, b); }
inline double sdf_subtract(double a, double b) { return std::max(a, -b); }

// Colour functions.
Vec3 checker_colour(const Vec3& p, const Vec3& colour_a, const Vec3& colour_b,
                    double period);
Vec3 latlong_gradient(const Vec3& p, const Vec3& pole, const Vec3& equator);

/// Named scene presets ("sphere_checker", "two_spheres", "torus", "box").
AnalyticScene make_scene(const std::string& name);

struct Trajectory {
  std::vector<TimedPose> poses;  // look-at poses on the spiral
  double revolutions = 0.0;
  int n_frames = 0;
};

/// Spherical spiral ascending from base to apex over the given number of
/// azimuthal revolutions, all camera centres at `radius` from the origin,
/// every pose looking at the origin. Timestamps span [0, duration].
Trajectory seiffert_trajectory(int n_frames, double revolutions, double radius,
                               double duration = 1.0);

/// Intrinsics for the synthetic camera: ~50 degree horizontal FOV, principal
/// point at the lattice centre.
CameraIntrinsics synthetic_intrinsics(int width, int height);

/// Sphere tracing against the analytic SDF: step by the SDF value, at most
/// 256 steps, hit tolerance 1e-4. Hits are shaded Lambertian from a fixed
/// directional light plus 0.2 ambient; misses take the background colour.
Image3 sphere_trace_render(const AnalyticScene& scene, const CameraModel& cam);

/// Hit mask of the same render (1 on surface hits).
Image1 sphere_trace_mask(const AnalyticScene& scene, const CameraModel& cam);

/// Simulator parameters, keys matching the simulator configuration file.
struct SimParams {
  int width = 346, height = 260;  // "Resolution": "260, 346" is (H, W)
  double bg_val = 159.0 / 255.0;
  double threshold = 0.2;  // "THR"
  double gamma = 2.2;
};

struct DatasetPaths {
  std::string events = "events.txt";
  std::string poses = "poses.json";
  std::string intrinsics = "intrinsics.json";
  std::string gt_mesh = "gt_mesh.ply";
  std::string config = "config.txt";
};

/// Render all trajectory frames, run the event simulator, and write the
/// dataset directory: events.txt, poses.json, intrinsics.json, gt_mesh.ply
/// (from the analytic SDF at `gt_resolution`), and a config snapshot.
struct DatasetResult {
  EventStream stream;
  std::size_t n_events = 0;
  double duration = 0.0;
};
DatasetResult build_dataset(const AnalyticScene& scene, const Trajectory& traj,
                            const SimParams& sim, const std::string& out_dir,
                            const std::string& config_snapshot,
                            int gt_resolution = 128);

}  // namespace evsurf
