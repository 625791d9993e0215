#include "evsurf/meshing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "evsurf/mc_tables.hpp"

namespace evsurf {

Vec3 SdfGrid::node_position(int i, int j, int k) const {
  const Vec3 ext = bounds.extent();
  return Vec3(bounds.lo.x() + ext.x() * double(i) / double(nx - 1),
              bounds.lo.y() + ext.y() * double(j) / double(ny - 1),
              bounds.lo.z() + ext.z() * double(k) / double(nz - 1));
}

namespace {

void check_grid_request(int resolution, const Bounds& bounds) {
  require(resolution >= 2, "bake_grid: resolution must be >= 2 per axis");
  require(resolution <= kGridResolutionCap,
          "bake_grid: resolution exceeds the " +
              std::to_string(kGridResolutionCap) + "^3 memory guard");
  require(!bounds.degenerate(), "bake_grid: degenerate bounds");
}

SdfGrid make_lattice(int resolution, const Bounds& bounds, bool with_colour) {
  SdfGrid grid;
  grid.nx = grid.ny = grid.nz = resolution;
  grid.bounds = bounds;
  grid.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  if (with_colour) grid.colours.resize(grid.values.size());
  return grid;
}

}  // namespace

SdfGrid bake_grid(const FieldParams& params, const Eigen::VectorXd& anneal_coeffs,
                  int resolution, const Bounds& bounds, bool with_colour) {
  check_grid_request(resolution, bounds);
  SdfGrid grid = make_lattice(resolution, bounds, with_colour);

  const std::size_t total = grid.values.size();
  const std::size_t chunk = 16384;
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t count = std::min(chunk, total - start);
    Mat pts(static_cast<Eigen::Index>(count), 3);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t flat = start + c;
      const int k = static_cast<int>(flat % grid.nz);
      const int j = static_cast<int>((flat / grid.nz) % grid.ny);
      const int i = static_cast<int>(flat / (static_cast<std::size_t>(grid.ny) * grid.nz));
      pts.row(static_cast<Eigen::Index>(c)) = grid.node_position(i, j, k).transpose();
    }
    ad::Tape tape;
    ad::ParamBinding bind(tape, params.store());
    SdfBatch batch = sdf_forward(tape, bind, params, pts, anneal_coeffs, with_colour);
    const Mat& values = tape.value(batch.value);
    for (std::size_t c = 0; c < count; ++c) {
      grid.values[start + c] = values(static_cast<Eigen::Index>(c), 0);
    }
    if (with_colour) {
      // View direction: the inward surface normal.
      const Mat& g = tape.value(batch.gradient);
      Mat dirs(g.rows(), 3);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double n = g.row(r).norm();
        dirs.row(r) = n > 1e-12 ? (-g.row(r) / n).eval()
                                : Eigen::RowVector3d(0.0, 0.0, 1.0);
      }
      ad::Var rgb = radiance_forward(tape, bind, params, pts, dirs, batch.gradient,
                                     batch.feature);
      const Mat& col = tape.value(rgb);
      for (std::size_t c = 0; c < count; ++c) {
        grid.colours[start + c] = col.row(static_cast<Eigen::Index>(c)).transpose();
      }
    }
  }
  return grid;
}

SdfGrid bake_grid_from(const std::function<double(const Vec3&)>& sdf,
                       int resolution, const Bounds& bounds,
                       const std::function<Vec3(const Vec3&)>* colour) {
  check_grid_request(resolution, bounds);
  SdfGrid grid = make_lattice(resolution, bounds, colour != nullptr);
#pragma omp parallel for collapse(2)
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      for (int k = 0; k < grid.nz; ++k) {
        const Vec3 p = grid.node_position(i, j, k);
        grid.values[grid.index(i, j, k)] = sdf(p);
        if (colour) grid.colours[grid.index(i, j, k)] = (*colour)(p);
      }
    }
  }
  return grid;
}

TriMesh marching_cubes(const SdfGrid& grid, double iso) {
  require(grid.nx >= 2 && grid.ny >= 2 && grid.nz >= 2, "marching_cubes: grid too small");
  for (double v : grid.values) {
    require(std::isfinite(v), "marching_cubes: non-finite grid value");
  }

  TriMesh mesh;
  // Shared vertices keyed by the (sorted) node pair of the crossing edge.
  std::map<std::pair<std::size_t, std::size_t>, int> edge_vertex;

  auto edge_point = [&](int i0, int j0, int k0, int i1, int j1, int k1) -> int {
    std::size_t a = grid.index(i0, j0, k0), b = grid.index(i1, j1, k1);
    std::pair<std::size_t, std::size_t> key = a < b ? std::make_pair(a, b)
                                                    : std::make_pair(b, a);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = grid.values[a], vb = grid.values[b];
    const double denom = vb - va;
    const double t = denom != 0.0 ? std::clamp((iso - va) / denom, 0.0, 1.0) : 0.5;
    const Vec3 pa = grid.node_position(i0, j0, k0);
    const Vec3 pb = grid.node_position(i1, j1, k1);
    // Interpolate along the stored key orientation so shared edges agree.
    Vec3 p;
    if (a < b) {
      p = pa + t * (pb - pa);
    } else {
      const double s = denom != 0.0 ? std::clamp((iso - vb) / (va - vb), 0.0, 1.0) : 0.5;
      p = pb + s * (pa - pb);
    }
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, idx);
    return idx;
  };

  for (int i = 0; i + 1 < grid.nx; ++i) {
    for (int j = 0; j + 1 < grid.ny; ++j) {
      for (int k = 0; k + 1 < grid.nz; ++k) {
        const int ci[8] = {i, i + 1, i + 1, i, i, i + 1, i + 1, i};
        const int cj[8] = {j, j, j + 1, j + 1, j, j, j + 1, j + 1};
        const int ck[8] = {k, k, k, k, k + 1, k + 1, k + 1, k + 1};
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.value(ci[c], cj[c], ck[c]) < iso) cube |= 1 << c;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        int everts[12];
        for (int e = 0; e < 12; ++e) {
          if (mc::kEdgeTable[cube] & (1 << e)) {
            const int ca = mc::kEdgeCorners[e][0], cb = mc::kEdgeCorners[e][1];
            everts[e] = edge_point(ci[ca], cj[ca], ck[ca], ci[cb], cj[cb], ck[cb]);
          }
        }
        for (int m = 0; mc::kTriTable[cube][m] != -1; m += 3) {
          const int v0 = everts[mc::kTriTable[cube][m]];
          const int v1 = everts[mc::kTriTable[cube][m + 1]];
          const int v2 = everts[mc::kTriTable[cube][m + 2]];
          const Vec3 ab = mesh.vertices[v1] - mesh.vertices[v0];
          const Vec3 ac = mesh.vertices[v2] - mesh.vertices[v0];
          if (0.5 * ab.cross(ac).norm() <= 1e-12) continue;  // degenerate
          mesh.triangles.push_back({v0, v1, v2});
        }
      }
    }
  }
  return mesh;
}

TriMesh colour_vertices(const TriMesh& mesh, const SdfGrid& grid) {
  require(grid.has_colours(), "colour_vertices: grid carries no colours");
  constexpr double kWeightFloor = 1e-6;
  TriMesh out = mesh;
  out.vertex_colours.resize(mesh.vertices.size());
  const Vec3 ext = grid.bounds.extent();
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3& p = mesh.vertices[v];
    auto cell = [&](double x, double lo, double e, int n) {
      const double u = (x - lo) / e * double(n - 1);
      return std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
    };
    const int i = cell(p.x(), grid.bounds.lo.x(), ext.x(), grid.nx);
    const int j = cell(p.y(), grid.bounds.lo.y(), ext.y(), grid.ny);
    const int k = cell(p.z(), grid.bounds.lo.z(), ext.z(), grid.nz);
    Vec3 acc = Vec3::Zero();
    double wsum = 0.0;
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        for (int dk = 0; dk < 2; ++dk) {
          const std::size_t idx = grid.index(i + di, j + dj, k + dk);
          const double w = 1.0 / (std::abs(grid.values[idx]) + kWeightFloor);
          acc += w * grid.colours[idx];
          wsum += w;
        }
      }
    }
    out.vertex_colours[v] = acc / wsum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export / import

namespace {

int colour_byte(double v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void export_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write mesh: " + path);
  char buf[256];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    if (mesh.has_colours()) {
      const Vec3& c = mesh.vertex_colours[i];
      std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g %.17g %.17g %.17g\n",
                    v.x(), v.y(), v.z(), c.x(), c.y(), c.z());
    } else {
      std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    }
    f << buf;
  }
  for (const auto& t : mesh.triangles) {
    f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  if (!f) throw RuntimeFailure("mesh write failed: " + path);
}

void export_ply(const TriMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write mesh: " + path);
  f << "ply\nformat ascii 1.0\n";
  f << "element vertex " << mesh.vertices.size() << "\n";
  f << "property double x\nproperty double y\nproperty double z\n";
  if (mesh.has_colours()) {
    f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  f << "element face " << mesh.triangles.size() << "\n";
  f << "property list uchar int vertex_indices\nend_header\n";
  char buf[256];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    if (mesh.has_colours()) {
      const Vec3& c = mesh.vertex_colours[i];
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %d %d %d\n", v.x(), v.y(),
                    v.z(), colour_byte(c.x()), colour_byte(c.y()), colour_byte(c.z()));
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    }
    f << buf;
  }
  for (const auto& t : mesh.triangles) {
    f << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  }
  if (!f) throw RuntimeFailure("mesh write failed: " + path);
}

TriMesh import_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RuntimeFailure("cannot open mesh: " + path);
  TriMesh mesh;
  std::string line;
  bool any_colour = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw RuntimeFailure("malformed OBJ vertex: " + line);
      mesh.vertices.emplace_back(x, y, z);
      double r, g, b;
      if (ls >> r >> g >> b) {
        mesh.vertex_colours.resize(mesh.vertices.size(), Vec3::Zero());
        mesh.vertex_colours.back() = Vec3(r, g, b);
        any_colour = true;
      }
    } else if (tag == "f") {
      std::array<int, 3> t;
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        if (!(ls >> tok)) throw RuntimeFailure("malformed OBJ face: " + line);
        t[c] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.triangles.push_back(t);
    }
  }
  if (any_colour) mesh.vertex_colours.resize(mesh.vertices.size(), Vec3::Zero());
  return mesh;
}

TriMesh import_ply(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RuntimeFailure("cannot open mesh: " + path);
  std::string line;
  std::getline(f, line);
  if (line != "ply") throw RuntimeFailure("not a PLY file: " + path);

  long long n_vertex = -1, n_face = -1;
  std::vector<std::string> vertex_props;
  std::string element;
  while (std::getline(f, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw RuntimeFailure("only ascii PLY supported: " + path);
    } else if (tag == "element") {
      std::string name;
      long long count;
      ls >> name >> count;
      element = name;
      if (name == "vertex") n_vertex = count;
      if (name == "face") n_face = count;
    } else if (tag == "property" && element == "vertex") {
      std::string type, name;
      ls >> type;
      if (type == "list") continue;
      ls >> name;
      vertex_props.push_back(name);
    }
  }
  if (n_vertex < 0 || n_face < 0) throw RuntimeFailure("malformed PLY header: " + path);

  const bool has_colour =
      std::count(vertex_props.begin(), vertex_props.end(), "red") > 0;
  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(n_vertex));
  for (long long i = 0; i < n_vertex; ++i) {
    if (!std::getline(f, line)) throw RuntimeFailure("truncated PLY: " + path);
    std::istringstream ls(line);
    Vec3 v = Vec3::Zero(), c = Vec3::Zero();
    for (const std::string& prop : vertex_props) {
      double x;
      if (!(ls >> x)) throw RuntimeFailure("malformed PLY vertex: " + line);
      if (prop == "x") v.x() = x;
      else if (prop == "y") v.y() = x;
      else if (prop == "z") v.z() = x;
      else if (prop == "red") c.x() = x / 255.0;
      else if (prop == "green") c.y() = x / 255.0;
      else if (prop == "blue") c.z() = x / 255.0;
    }
    mesh.vertices.push_back(v);
    if (has_colour) mesh.vertex_colours.push_back(c);
  }
  for (long long i = 0; i < n_face; ++i) {
    if (!std::getline(f, line)) throw RuntimeFailure("truncated PLY: " + path);
    std::istringstream ls(line);
    int count;
    if (!(ls >> count) || count != 3) {
      throw RuntimeFailure("only triangle PLY faces supported: " + path);
    }
    std::array<int, 3> t;
    ls >> t[0] >> t[1] >> t[2];
    mesh.triangles.push_back(t);
  }
  return mesh;
}

}  // namespace

void export_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format) {
  for (const auto& t : mesh.triangles) {
    for (int c : t) {
      require(c >= 0 && c < static_cast<int>(mesh.vertices.size()),
              "export_mesh: triangle index out of range");
    }
  }
  if (format == MeshFormat::kObj) export_obj(mesh, path);
  else export_ply(mesh, path);
}

TriMesh import_mesh(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "obj") return import_obj(path);
  if (ext == "ply") return import_ply(path);
  throw InvalidArgument("import_mesh: unknown mesh extension '" + ext + "'");
}

void save_grid(const SdfGrid& grid, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write grid: " + path);
  f.write("EVSGRID1", 8);
  auto put = [&f](const auto& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(static_cast<std::int32_t>(grid.nx));
  put(static_cast<std::int32_t>(grid.ny));
  put(static_cast<std::int32_t>(grid.nz));
  for (int a = 0; a < 3; ++a) put(grid.bounds.lo[a]);
  for (int a = 0; a < 3; ++a) put(grid.bounds.hi[a]);
  put(static_cast<std::uint8_t>(grid.has_colours() ? 1 : 0));
  f.write(reinterpret_cast<const char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  for (const Vec3& c : grid.colours) {
    for (int a = 0; a < 3; ++a) put(c[a]);
  }
  if (!f) throw RuntimeFailure("grid write failed: " + path);
}

SdfGrid load_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open grid: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "EVSGRID1", 8) != 0) {
    throw RuntimeFailure("not a grid cache file: " + path);
  }
  auto get = [&f, &path](auto& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!f) throw RuntimeFailure("truncated grid cache: " + path);
  };
  SdfGrid grid;
  std::int32_t nx, ny, nz;
  get(nx); get(ny); get(nz);
  require(nx >= 2 && ny >= 2 && nz >= 2 && nx <= kGridResolutionCap &&
              ny <= kGridResolutionCap && nz <= kGridResolutionCap,
          "grid cache dimensions out of range");
  grid.nx = nx; grid.ny = ny; grid.nz = nz;
  for (int a = 0; a < 3; ++a) get(grid.bounds.lo[a]);
  for (int a = 0; a < 3; ++a) get(grid.bounds.hi[a]);
  std::uint8_t has_colours;
  get(has_colours);
  grid.values.resize(static_cast<std::size_t>(nx) * ny * nz);
  f.read(reinterpret_cast<char*>(grid.values.data()),
         static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!f) throw RuntimeFailure("truncated grid cache: " + path);
  if (has_colours) {
    grid.colours.resize(grid.values.size());
    for (Vec3& c : grid.colours) {
      for (int a = 0; a < 3; ++a) get(c[a]);
    }
  }
  return grid;
}

}  // namespace evsurf
