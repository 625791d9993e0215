#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "evsurf/image.hpp"
#include "evsurf/meshing.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// Balanced k-d tree over 3D points with exact nearest-neighbour queries
/// (ties broken toward the lower point index).
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  /// Index of the nearest point and its squared distance.
  std::pair<int, double> nearest(const Vec3& query) const;

  /// Brute-force reference with identical tie-breaking.
  std::pair<int, double> nearest_brute_force(const Vec3& query) const;

  int size() const { return static_cast<int>(points_.size()); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct PointSampler {
  int n_points = 10000;
  std::uint64_t seed = 0;
  enum class Mode { kSurface, kHybrid } mode = Mode::kSurface;
};

/// Area-weighted uniform samples on the mesh surface.
std::vector<Vec3> sample_surface(const TriMesh& mesh, int n_points,
                                 std::mt19937_64& rng);

/// Bidirectional Chamfer distance: the two directional mean nearest-
/// neighbour distances are summed. With `normalise`, each mesh is first
/// independently centred and uniformly scaled into the unit cube.
double chamfer(const TriMesh& mesh_a, const TriMesh& mesh_b, int n_points = 10000,
               std::uint64_t seed = 0, bool normalise = true);

/// Signed distance of a point to a triangle mesh: exact point-to-triangle
/// distance, sign by ray-crossing parity (3-ray majority vote).
class MeshSdf {
 public:
  explicit MeshSdf(const TriMesh& mesh);
  double operator()(const Vec3& p) const;
  double unsigned_distance(const Vec3& p) const;
  bool inside(const Vec3& p) const;

 private:
  struct BvhNode {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf triangle range
  };
  int build(int begin, int end);
  double closest_sq(int node, const Vec3& p, double best) const;
  int count_crossings(int node, const Vec3& origin, const Vec3& dir) const;

  std::vector<Vec3> v0_, e1_, e2_;  // triangle origin and edge vectors
  std::vector<int> order_;
  std::vector<BvhNode> nodes_;
  int root_ = -1;
};

/// Mean |SDF_a - SDF_b| over hybrid probe points: half near both surfaces
/// (uniform perturbation within +-1% of the joint maximum dimension), half
/// uniform in the joint bounding box.
double sdf_mae(const TriMesh& gt_mesh, const TriMesh& pred_mesh,
               int n_points = 10000, std::uint64_t seed = 0);

/// 10 log10(1 / MSE) over pixels where mask > 0.5; identical images saturate
/// at the 99 dB sentinel.
double masked_psnr(const Image3& rendered, const Image3& reference,
                   const Image1& mask);
inline constexpr double kPsnrSaturation = 99.0;

}  // namespace evsurf
