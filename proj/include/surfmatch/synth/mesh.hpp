#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;  // counter-clockwise seen from outside

    std::size_t vertex_count() const { return vertices.size(); }

    /// Unique undirected edges (a < b), sorted.
    std::vector<std::pair<int, int>> edges() const;

    /// Area-weighted vertex normals, unit length (zero for isolated vertices).
    std::vector<Vec3> vertex_normals() const;
    std::vector<Vec3> vertex_normals(const std::vector<Vec3> &positions) const;

    /// Every edge shared by exactly two faces.
    bool is_edge_manifold() const;

    double bounding_box_diagonal() const;
    double signed_volume() const;

    PointCloud as_point_cloud() const { return PointCloud(vertices); }

    /// Throws on out-of-range face indices or non-finite vertices.
    void validate() const;
};

/// Radial bump on the unit sphere used to make the blob asymmetric.
struct ShapeBump {
    Vec3 direction = Vec3::UnitX();
    double weight = 0.0;
    double sharpness = 1.0;
};

/// Parameters of a liver-like blob: an ellipsoid modulated by low-frequency
/// radial bumps and tapered along x into a wedge.
struct LiverShape {
    Vec3 semi_axes{70.0, 48.0, 32.0};
    std::vector<ShapeBump> bumps;
    double taper = 0.0;
    double amplitude = 1.0;  // scales bumps and taper; 0 gives the plain ellipsoid
};

LiverShape draw_liver_shape(std::uint64_t rng_seed, double amplitude = 1.0);

/// Closed triangulated surface of `shape` with exactly `n_vertices`
/// vertices, rescaled if needed so its bounding-box diagonal lies in
/// [150, 250] mm.
SurfaceMesh build_liver_mesh(const LiverShape &shape, int n_vertices);

/// Deterministic liver-like mesh; n_vertices >= 500.
SurfaceMesh generate_liver_mesh(std::uint64_t rng_seed, int n_vertices, double amplitude = 1.0);

}  // namespace surfmatch
