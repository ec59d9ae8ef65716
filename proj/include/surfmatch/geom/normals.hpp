#pragma once

#include <optional>
#include <vector>

#include "surfmatch/geom/kdtree.hpp"
#include "surfmatch/geom/types.hpp"

namespace surfmatch {

struct NormalOptions {
    /// Reference point for orientation; the cloud centroid when unset.
    std::optional<Vec3> viewpoint;
    /// Outward: n . (p - viewpoint) >= 0. Inward flips that.
    bool outward = true;
};

struct NormalEstimate {
    std::vector<Vec3> normals;
    /// True where the neighborhood covariance has rank < 2; the normal is
    /// then zero and must not be used.
    std::vector<bool> degenerate;

    std::size_t degenerate_count() const;
};

/// PCA normals from the k nearest neighbors (the point itself included).
NormalEstimate estimate_normals(const PointCloud &cloud, int k, const NormalOptions &opts = {});

/// Same, with the neighborhood taken as all points within `radius_mm`.
/// Neighborhoods with fewer than three points are degenerate.
NormalEstimate estimate_normals_radius(const PointCloud &cloud, double radius_mm,
                                       const NormalOptions &opts = {});

/// Normal of a single neighborhood, or nullopt when rank-deficient.
std::optional<Vec3> neighborhood_normal(const std::vector<Vec3> &points,
                                        const std::vector<Neighbor> &neighborhood);

}  // namespace surfmatch
