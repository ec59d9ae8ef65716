#include "surfmatch/geom/normals.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>

#include "surfmatch/error.hpp"

namespace surfmatch {
namespace {

template <class NeighborhoodFn>
NormalEstimate estimate_impl(const PointCloud &cloud, const NormalOptions &opts,
                             NeighborhoodFn &&neighborhood) {
    const NeighborIndex index(cloud);
    const Vec3 viewpoint = opts.viewpoint.value_or(cloud.centroid());

    NormalEstimate out;
    out.normals.assign(cloud.size(), Vec3::Zero());
    out.degenerate.assign(cloud.size(), false);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto nbrs = neighborhood(index, cloud[i]);
        const auto n = neighborhood_normal(cloud.points, nbrs);
        if (!n) {
            out.degenerate[i] = true;
            continue;
        }
        Vec3 normal = *n;
        const double side = normal.dot(cloud[i] - viewpoint);
        if ((opts.outward && side < 0.0) || (!opts.outward && side > 0.0)) normal = -normal;
        out.normals[i] = normal;
    }
    return out;
}

}  // namespace

std::size_t NormalEstimate::degenerate_count() const {
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), true));
}

std::optional<Vec3> neighborhood_normal(const std::vector<Vec3> &points,
                                        const std::vector<Neighbor> &neighborhood) {
    if (neighborhood.size() < 3) return std::nullopt;
    Vec3 mean = Vec3::Zero();
    for (const auto &nb : neighborhood) mean += points[nb.index];
    mean /= static_cast<double>(neighborhood.size());
    Mat3 cov = Mat3::Zero();
    for (const auto &nb : neighborhood) {
        const Vec3 d = points[nb.index] - mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(neighborhood.size());

    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const Vec3 &ev = solver.eigenvalues();  // ascending
    const double scale = std::max(ev(2), 0.0);
    if (scale <= 1e-24 || ev(1) <= 1e-10 * scale) return std::nullopt;
    return solver.eigenvectors().col(0).normalized();
}

NormalEstimate estimate_normals(const PointCloud &cloud, int k, const NormalOptions &opts) {
    if (k < 3) throw Error(ErrorCode::kInvalidArgument, "estimate_normals: k must be >= 3");
    if (cloud.size() < static_cast<std::size_t>(k)) {
        throw Error(ErrorCode::kInsufficientPoints,
                    "estimate_normals: cloud has " + std::to_string(cloud.size()) +
                        " points, k=" + std::to_string(k));
    }
    return estimate_impl(cloud, opts,
                         [k](const NeighborIndex &idx, const Vec3 &p) { return idx.knn(p, k); });
}

NormalEstimate estimate_normals_radius(const PointCloud &cloud, double radius_mm,
                                       const NormalOptions &opts) {
    if (!(radius_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "normal radius must be > 0");
    return estimate_impl(cloud, opts, [radius_mm](const NeighborIndex &idx, const Vec3 &p) {
        return idx.radius(p, radius_mm);
    });
}

}  // namespace surfmatch
