#include "memrl/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

constexpr double kDegenerateAreaTol = 1e-12;

double triangle_area(const Point3& a, const Point3& b, const Point3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> toks;
  std::stringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

double parse_float(const std::string& tok, const std::string& path, int lineno) {
  try {
    std::size_t pos = 0;
    double x = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return x;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + tok + "'", lineno);
  }
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open geometry: " + path);

  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    const std::string& kind = toks[0];
    if (kind == "v") {
      if (toks.size() != 4)
        throw ParseError(path + ":" + std::to_string(lineno) + ": vertex needs 3 coordinates",
                         lineno);
      mesh.vertices.emplace_back(parse_float(toks[1], path, lineno),
                                 parse_float(toks[2], path, lineno),
                                 parse_float(toks[3], path, lineno));
    } else if (kind == "f") {
      if (toks.size() < 4)
        throw ParseError(path + ":" + std::to_string(lineno) + ": face needs >= 3 vertices",
                         lineno);
      std::vector<int> idx;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        std::string head = toks[i].substr(0, toks[i].find('/'));
        int v = 0;
        try {
          std::size_t pos = 0;
          v = std::stoi(head, &pos);
          if (pos != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad face index '" + toks[i] +
                               "'",
                           lineno);
        }
        if (v < 1 || v > static_cast<int>(mesh.vertices.size()))
          throw ParseError(path + ":" + std::to_string(lineno) + ": face index " +
                               std::to_string(v) + " out of range",
                           lineno);
        idx.push_back(v - 1);
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i)
        mesh.triangles.push_back({idx[0], idx[i], idx[i + 1]});
    } else if (kind == "vn" || kind == "vt" || kind == "o" || kind == "g" || kind == "s" ||
               kind == "usemtl" || kind == "mtllib") {
      continue;
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unsupported directive '" + kind +
                           "'",
                       lineno);
    }
  }

  std::vector<std::array<int, 3>> kept;
  for (const auto& t : mesh.triangles) {
    if (triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) >
        kDegenerateAreaTol)
      kept.push_back(t);
    else
      ++mesh.degenerate_dropped;
  }
  mesh.triangles = std::move(kept);

  if (mesh.vertices.empty() || mesh.triangles.empty())
    throw InvalidInputError("empty geometry: " + path);
  return mesh;
}

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open geometry: " + path);
  PointCloud cloud;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 3)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 3 floats", lineno);
    cloud.points.emplace_back(parse_float(toks[0], path, lineno),
                              parse_float(toks[1], path, lineno),
                              parse_float(toks[2], path, lineno));
  }
  if (cloud.points.empty()) throw InvalidInputError("empty geometry: " + path);
  return cloud;
}

std::pair<Point3, Point3> bounding_box(const std::vector<Point3>& pts) {
  Point3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {lo, hi};
}

std::vector<Point3> normalize_points(const std::vector<Point3>& pts) {
  Point3 centroid = Point3::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  auto [lo, hi] = bounding_box(pts);
  double edge = (hi - lo).maxCoeff();
  if (edge < 1e-12) throw DegenerateGeometryError("normalize: all points coincident");
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((p - centroid) / edge);
  return out;
}

// Directed nearest-neighbor distances, exact brute force.
void directed_nn(const PointCloud& from, const PointCloud& to, double& mean_out, double& max_out) {
  double sum = 0.0, mx = 0.0;
  for (const auto& p : from.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to.points) best = std::min(best, (p - q).squaredNorm());
    double d = std::sqrt(best);
    sum += d;
    mx = std::max(mx, d);
  }
  mean_out = sum / static_cast<double>(from.points.size());
  max_out = mx;
}

void require_clouds(const PointCloud& a, const PointCloud& b, const char* op) {
  if (a.points.empty() || b.points.empty())
    throw InvalidInputError(std::string(op) + ": empty point cloud");
}

// Voxel-center occupancy by x-ray parity. Rays carry a tiny fixed offset in
// (y,z) so meshes with faces aligned to the grid do not hit edge cases.
std::vector<std::uint8_t> occupancy(const TriangleMesh& mesh, int res, const Point3& grid_lo,
                                    double cell, const char* label) {
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(res) * res * res, 0);
  const double jitter_y = 2.718281828e-7 * cell;
  const double jitter_z = 3.141592653e-7 * cell;

  struct Tri2 {
    double y0, z0, y1, z1, y2, z2;  // (y,z) projection
    Point3 v0, n;                   // plane through v0 with normal n
  };
  std::vector<Tri2> tris;
  tris.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Point3& a = mesh.vertices[t[0]];
    const Point3& b = mesh.vertices[t[1]];
    const Point3& c = mesh.vertices[t[2]];
    Point3 n = (b - a).cross(c - a);
    if (std::abs(n.x()) < 1e-300) continue;  // parallel to the ray direction
    tris.push_back({a.y(), a.z(), b.y(), b.z(), c.y(), c.z(), a, n});
  }

  std::int64_t odd_rays = 0;
  std::vector<double> xs;
  for (int j = 0; j < res; ++j) {
    double ry = grid_lo.y() + (j + 0.5) * cell + jitter_y;
    for (int k = 0; k < res; ++k) {
      double rz = grid_lo.z() + (k + 0.5) * cell + jitter_z;
      xs.clear();
      for (const auto& t : tris) {
        double s0 = (t.y1 - t.y0) * (rz - t.z0) - (t.z1 - t.z0) * (ry - t.y0);
        double s1 = (t.y2 - t.y1) * (rz - t.z1) - (t.z2 - t.z1) * (ry - t.y1);
        double s2 = (t.y0 - t.y2) * (rz - t.z2) - (t.z0 - t.z2) * (ry - t.y2);
        bool pos = s0 > 0.0 && s1 > 0.0 && s2 > 0.0;
        bool neg = s0 < 0.0 && s1 < 0.0 && s2 < 0.0;
        if (!pos && !neg) continue;
        double x = t.v0.x() - (t.n.y() * (ry - t.v0.y()) + t.n.z() * (rz - t.v0.z())) / t.n.x();
        xs.push_back(x);
      }
      if (xs.size() % 2 != 0) {
        ++odd_rays;
        continue;  // inconsistent ray: leave the row unoccupied
      }
      std::sort(xs.begin(), xs.end());
      std::size_t cursor = 0;
      for (int i = 0; i < res; ++i) {
        double cx = grid_lo.x() + (i + 0.5) * cell;
        while (cursor < xs.size() && xs[cursor] < cx) ++cursor;
        if (cursor % 2 == 1)
          occ[(static_cast<std::size_t>(i) * res + j) * res + k] = 1;
      }
    }
  }

  if (static_cast<double>(odd_rays) >
      0.01 * static_cast<double>(res) * static_cast<double>(res))
    throw NonWatertightError(std::string("voxel_iou: mesh ") + label + " failed parity on " +
                             std::to_string(odd_rays) + " rays");
  return occ;
}

}  // namespace

Geometry load_geometry(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".obj") return load_obj(path);
  if (ext == ".xyz") return load_xyz(path);
  throw InvalidInputError("unsupported geometry extension: " + path);
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write point cloud: " + path);
  out << std::setprecision(17);
  for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

TriangleMesh normalize(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw InvalidInputError("normalize: empty mesh");
  TriangleMesh out = mesh;
  out.vertices = normalize_points(mesh.vertices);
  return out;
}

PointCloud normalize(const PointCloud& cloud) {
  if (cloud.points.empty()) throw InvalidInputError("normalize: empty cloud");
  return {normalize_points(cloud.points)};
}

Geometry normalize(const Geometry& g) {
  if (std::holds_alternative<TriangleMesh>(g)) return normalize(std::get<TriangleMesh>(g));
  return normalize(std::get<PointCloud>(g));
}

PointCloud sample_surface(const TriangleMesh& mesh, int n, Rng& rng) {
  if (n < 1) throw InvalidInputError("sample_surface: n must be >= 1");
  if (mesh.triangles.empty()) throw DegenerateGeometryError("sample_surface: no triangles");

  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cum[i] = total;
  }
  if (total <= 0.0) throw DegenerateGeometryError("sample_surface: zero total area");

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    std::size_t ti = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (ti >= cum.size()) ti = cum.size() - 1;
    const auto& t = mesh.triangles[ti];
    double r1 = rng.uniform();
    double r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Point3& a = mesh.vertices[t[0]];
    cloud.points.push_back(a + r1 * (mesh.vertices[t[1]] - a) + r2 * (mesh.vertices[t[2]] - a));
  }
  return cloud;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_clouds(a, b, "chamfer");
  double mean_ab, max_ab, mean_ba, max_ba;
  directed_nn(a, b, mean_ab, max_ab);
  directed_nn(b, a, mean_ba, max_ba);
  return 0.5 * (mean_ab + mean_ba);
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  require_clouds(a, b, "hausdorff");
  double mean_ab, max_ab, mean_ba, max_ba;
  directed_nn(a, b, mean_ab, max_ab);
  directed_nn(b, a, mean_ba, max_ba);
  return std::max(max_ab, max_ba);
}

double voxel_iou(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b, int resolution) {
  if (resolution < 8) throw InvalidInputError("voxel_iou: resolution must be >= 8");
  if (mesh_a.vertices.empty() || mesh_b.vertices.empty())
    throw InvalidInputError("voxel_iou: empty mesh");

  auto [lo_a, hi_a] = bounding_box(mesh_a.vertices);
  auto [lo_b, hi_b] = bounding_box(mesh_b.vertices);
  Point3 lo = lo_a.cwiseMin(lo_b);
  Point3 hi = hi_a.cwiseMax(hi_b);
  Point3 center = 0.5 * (lo + hi);
  double edge = 1.1 * (hi - lo).maxCoeff();
  if (edge <= 0.0) return 1.0;  // both meshes collapse to a point: empty grids
  Point3 grid_lo = center - Point3::Constant(0.5 * edge);
  double cell = edge / static_cast<double>(resolution);

  auto occ_a = occupancy(mesh_a, resolution, grid_lo, cell, "A");
  auto occ_b = occupancy(mesh_b, resolution, grid_lo, cell, "B");

  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < occ_a.size(); ++i) {
    inter += occ_a[i] & occ_b[i];
    uni += occ_a[i] | occ_b[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

int binary_reward(const VerificationChecklist& c) {
  return (c.script_executed && c.entity_generated && c.topology_valid &&
          c.dimensions_within_tolerance && c.stats_in_range)
             ? 1
             : 0;
}

}  // namespace memrl
