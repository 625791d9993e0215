#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evsurf/fields.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// Axis-aligned box.
struct Bounds {
  Vec3 lo = Vec3::Constant(-0.5);
  Vec3 hi = Vec3::Constant(0.5);

  bool degenerate() const { return ((hi - lo).array() <= 0.0).any(); }
  Vec3 extent() const { return hi - lo; }
};

/// Dense SDF sample lattice with optional per-node colours. Values live on
/// grid nodes including the bounds faces; spacing is extent / (n - 1).
struct SdfGrid {
  int nx = 0, ny = 0, nz = 0;
  Bounds bounds;
  std::vector<double> values;        // nx * ny * nz, x-major then y then z
  std::vector<Vec3> colours;         // empty or same length as values

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  double value(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node_position(int i, int j, int k) const;
  bool has_colours() const { return !colours.empty(); }
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> vertex_colours;  // empty or one per vertex

  bool empty() const { return triangles.empty(); }
  bool has_colours() const { return !vertex_colours.empty(); }
};

inline constexpr int kGridResolutionCap = 512;  // memory guard per axis

/// Sample the SDF network on a dense grid. With `with_colour`, the radiance
/// network is queried per node with view direction -grad(phi)/|grad(phi)|
/// (an albedo-like, view-independent bake).
SdfGrid bake_grid(const FieldParams& params, const Eigen::VectorXd& anneal_coeffs,
                  int resolution, const Bounds& bounds, bool with_colour);

/// Same lattice filled from an arbitrary field (analytic oracles, tests).
SdfGrid bake_grid_from(const std::function<double(const Vec3&)>& sdf,
                       int resolution, const Bounds& bounds,
                       const std::function<Vec3(const Vec3&)>* colour = nullptr);

/// Standard 256-case marching cubes with linear edge interpolation.
/// An all-positive or all-negative grid yields an empty mesh.
TriMesh marching_cubes(const SdfGrid& grid, double iso = 0.0);

/// Inverse-SDF-weighted colour transfer from the grid's 8 enclosing nodes:
///   w = 1 / (|phi| + 1e-6), colour = sum(w c) / sum(w).
TriMesh colour_vertices(const TriMesh& mesh, const SdfGrid& grid);

enum class MeshFormat { kObj, kPly };

/// ASCII export. OBJ uses "v x y z [r g b]"; PLY uses uchar vertex colours.
void export_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format);
TriMesh import_mesh(const std::string& path);  // format from extension

// Grid cache: dimensions/bounds header plus row-major values (binary), so a
// mesh can be re-extracted without re-querying the networks.
void save_grid(const SdfGrid& grid, const std::string& path);
SdfGrid load_grid(const std::string& path);

}  // namespace evsurf
