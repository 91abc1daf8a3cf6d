#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <variant>
#include <vector>

#include "memrl/rng.hpp"

namespace memrl {

using Point3 = Eigen::Vector3d;

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;
  int degenerate_dropped = 0;  // zero-area faces removed at load
};

struct PointCloud {
  std::vector<Point3> points;
};

using Geometry = std::variant<TriangleMesh, PointCloud>;

// `.obj` (ASCII subset: v / f, polygons fan-triangulated) or `.xyz` (three
// floats per line). '#' comment lines are skipped in both.
Geometry load_geometry(const std::string& path);

void save_xyz(const PointCloud& cloud, const std::string& path);

// Centroid to the origin, longest bounding-box edge scaled to 1.
TriangleMesh normalize(const TriangleMesh& mesh);
PointCloud normalize(const PointCloud& cloud);
Geometry normalize(const Geometry& g);

// Area-weighted triangle choice, uniform barycentric placement.
PointCloud sample_surface(const TriangleMesh& mesh, int n, Rng& rng);

// 1/2 (mean_a min_b |a-b| + mean_b min_a |a-b|), Euclidean.
double chamfer(const PointCloud& a, const PointCloud& b);

// max(max_a min_b |a-b|, max_b min_a |a-b|).
double hausdorff(const PointCloud& a, const PointCloud& b);

// Occupancy IoU on a resolution^3 grid over the common bounding cube of the
// two meshes (10% padded; [-0.55,0.55]^3 for a pair of normalized unit-box
// meshes). Occupancy comes from x-ray parity at voxel centers; meshes whose
// rays disagree with closed-surface parity on more than 1% of rays are
// rejected as non-watertight. 1.0 when both occupancies are empty.
double voxel_iou(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b, int resolution);

// Episode verification outcome; every field must be set explicitly.
struct VerificationChecklist {
  VerificationChecklist(bool script_executed, bool entity_generated, bool topology_valid,
                        bool dimensions_within_tolerance, bool stats_in_range)
      : script_executed(script_executed),
        entity_generated(entity_generated),
        topology_valid(topology_valid),
        dimensions_within_tolerance(dimensions_within_tolerance),
        stats_in_range(stats_in_range) {}

  bool script_executed;
  bool entity_generated;
  bool topology_valid;
  bool dimensions_within_tolerance;
  bool stats_in_range;
};

// 1 iff every checklist item passed.
int binary_reward(const VerificationChecklist& c);

}  // namespace memrl
