#include "evsurf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace evsurf {

Ray generate_ray(const CameraModel& cam, double px, double py) {
  const auto& in = cam.intrinsics;
  Vec3 dir_cam((px - in.cx) / in.fx, (py - in.cy) / in.fy, 1.0);
  Ray ray;
  ray.origin = cam.pose.translation;
  ray.direction = (cam.pose.rotation * dir_cam).normalized();
  return ray;
}

std::vector<Ray> generate_rays(const CameraModel& cam,
                               const std::vector<std::pair<int, int>>& pixels) {
  require(cam.valid(), "generate_rays: invalid camera model");
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (auto [x, y] : pixels) {
    require(x >= 0 && x < cam.intrinsics.width && y >= 0 && y < cam.intrinsics.height,
            "generate_rays: pixel out of bounds");
    rays.push_back(generate_ray(cam, double(x), double(y)));
  }
  return rays;
}

bool project_point(const CameraModel& cam, const Vec3& world, double& px, double& py) {
  const Vec3 local = cam.pose.rotation.transpose() * (world - cam.pose.translation);
  if (local.z() <= 0.0) return false;
  px = cam.intrinsics.fx * local.x() / local.z() + cam.intrinsics.cx;
  py = cam.intrinsics.fy * local.y() / local.z() + cam.intrinsics.cy;
  return true;
}

CameraPose look_at_pose(const Vec3& center, const Vec3& target, const Vec3& up_hint) {
  const Vec3 forward = (target - center).normalized();
  Vec3 up = up_hint;
  if (std::abs(forward.dot(up.normalized())) > 1.0 - 1e-9) {
    up = Vec3::UnitY();  // degenerate: looking along the hint
  }
  const Vec3 right = forward.cross(up).normalized();
  // y points down in the camera frame so images read top-to-bottom.
  const Vec3 down = forward.cross(right).normalized();
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = center;
  return pose;
}

CameraPose interpolate_pose(const std::vector<TimedPose>& keyframes, double t) {
  require(!keyframes.empty(), "interpolate_pose: no keyframes");
  if (t <= keyframes.front().time) return keyframes.front().pose;
  if (t >= keyframes.back().time) return keyframes.back().pose;
  auto hi = std::lower_bound(
      keyframes.begin(), keyframes.end(), t,
      [](const TimedPose& p, double time) { return p.time < time; });
  auto lo = hi - 1;
  const double span = hi->time - lo->time;
  const double u = span > 0.0 ? (t - lo->time) / span : 0.0;

  CameraPose out;
  out.translation = (1.0 - u) * lo->pose.translation + u * hi->pose.translation;
  Eigen::Quaterniond qa(lo->pose.rotation), qb(hi->pose.rotation);
  out.rotation = qa.slerp(u, qb).normalized().toRotationMatrix();
  return out;
}

void write_poses_json(const std::string& path, const std::vector<TimedPose>& poses) {
  nlohmann::json frames = nlohmann::json::array();
  for (const TimedPose& tp : poses) {
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) {
        double v;
        if (r < 3 && c < 3) v = tp.pose.rotation(r, c);
        else if (r < 3) v = tp.pose.translation(r);
        else v = (c == 3) ? 1.0 : 0.0;
        row.push_back(v);
      }
      m.push_back(row);
    }
    frames.push_back({{"time", tp.time}, {"world_from_camera", m}});
  }
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write poses file: " + path);
  f << nlohmann::json{{"frames", frames}}.dump(1) << "\n";
}

std::vector<TimedPose> read_poses_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RuntimeFailure("cannot open poses file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed poses file " + path + ": " + e.what());
  }
  std::vector<TimedPose> out;
  for (const auto& frame : j.at("frames")) {
    TimedPose tp;
    tp.time = frame.at("time").get<double>();
    const auto& m = frame.at("world_from_camera");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) tp.pose.rotation(r, c) = m.at(r).at(c).get<double>();
      tp.pose.translation(r) = m.at(r).at(3).get<double>();
    }
    require(tp.pose.orthonormal(), "poses file: non-orthonormal rotation");
    out.push_back(tp);
  }
  require(!out.empty(), "poses file: no frames");
  return out;
}

void write_intrinsics_json(const std::string& path, const CameraIntrinsics& intr) {
  nlohmann::json j{{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
                   {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write intrinsics file: " + path);
  f << j.dump(1) << "\n";
}

CameraIntrinsics read_intrinsics_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RuntimeFailure("cannot open intrinsics file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed intrinsics file " + path + ": " + e.what());
  }
  CameraIntrinsics intr;
  intr.fx = j.at("fx").get<double>();
  intr.fy = j.at("fy").get<double>();
  intr.cx = j.at("cx").get<double>();
  intr.cy = j.at("cy").get<double>();
  intr.width = j.at("width").get<int>();
  intr.height = j.at("height").get<int>();
  require(intr.fx > 0 && intr.fy > 0 && intr.width > 0 && intr.height > 0,
          "intrinsics file: invalid values");
  return intr;
}

}  // namespace evsurf
