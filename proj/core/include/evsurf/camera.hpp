#pragma once

#include <Eigen/Geometry>
#include <string>
#include <utility>
#include <vector>

#include "evsurf/types.hpp"

namespace evsurf {

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // focal lengths, pixels
  double cx = 0.0, cy = 0.0;  // principal point, pixels
  int width = 0, height = 0;
};

/// World-from-camera rigid transform. Camera frame: x right, y down,
/// z forward (the optical axis).
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  bool orthonormal(double tol = 1e-6) const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
               .cwiseAbs()
               .maxCoeff() <= tol;
  }
};

struct CameraModel {
  CameraIntrinsics intrinsics;
  CameraPose pose;

  bool valid() const {
    return intrinsics.fx > 0 && intrinsics.fy > 0 && intrinsics.width > 0 &&
           intrinsics.height > 0 && pose.orthonormal();
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
};

/// Rays through the listed pixels. Throws on out-of-bounds pixels.
std::vector<Ray> generate_rays(const CameraModel& cam,
                               const std::vector<std::pair<int, int>>& pixels);

/// Single-pixel convenience; pixel coordinates may be fractional.
Ray generate_ray(const CameraModel& cam, double px, double py);

/// Pinhole projection of a world point; returns false if behind the camera.
bool project_point(const CameraModel& cam, const Vec3& world, double& px, double& py);

/// Pose with the optical axis through `target`, roll stabilised against
/// `up_hint` (falls back to +y when the view direction is nearly parallel).
CameraPose look_at_pose(const Vec3& center, const Vec3& target,
                        const Vec3& up_hint = Vec3::UnitZ());

/// One keyframe on a camera trajectory.
struct TimedPose {
  double time = 0.0;
  CameraPose pose;
};

/// Pose at an arbitrary time: translation lerp plus rotation slerp between
/// the two nearest keyframes; clamped outside the keyframe range.
CameraPose interpolate_pose(const std::vector<TimedPose>& keyframes, double t);

// Dataset pose files: poses.json carries per-frame timestamped 4x4
// world-from-camera matrices; intrinsics.json one shared intrinsics record.
void write_poses_json(const std::string& path, const std::vector<TimedPose>& poses);
std::vector<TimedPose> read_poses_json(const std::string& path);
void write_intrinsics_json(const std::string& path, const CameraIntrinsics& intr);
CameraIntrinsics read_intrinsics_json(const std::string& path);

}  // namespace evsurf
