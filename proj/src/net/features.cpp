#include "surfmatch/net/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/kdtree.hpp"

namespace surfmatch {
namespace {

struct ScaleStats {
    double values[7];
    Vec3 normal;
};

ScaleStats neighborhood_stats(const PointCloud &cloud, std::size_t i, const std::vector<Neighbor> &nbrs) {
    const Vec3 &p = cloud[i];
    Vec3 c = Vec3::Zero();
    double mean_dist = 0.0;
    for (const auto &nb : nbrs) {
        c += cloud[nb.index];
        mean_dist += nb.distance;
    }
    const double cnt = static_cast<double>(nbrs.size());
    c /= cnt;
    mean_dist /= std::max(cnt - 1.0, 1.0);  // the point itself contributes distance 0

    Mat3 cov = Mat3::Zero();
    for (const auto &nb : nbrs) {
        const Vec3 o = cloud[nb.index] - c;
        cov += o * o.transpose();
    }
    cov /= cnt;
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 lam = es.eigenvalues().cwiseMax(0.0);  // ascending
    const Vec3 root = lam.cwiseSqrt();
    const double root_sum = root.sum();
    const double lam_sum = lam.sum();

    ScaleStats s{};
    s.normal = es.eigenvectors().col(0);
    const double L = kFeatureLengthScaleMm;
    s.values[0] = mean_dist / L;
    if (root_sum > 0.0) {
        s.values[1] = root(2) / root_sum;
        s.values[2] = root(1) / root_sum;
        s.values[3] = root(0) / root_sum;
    }
    s.values[4] = lam_sum > 0.0 ? lam(0) / lam_sum : 0.0;
    s.values[5] = (p - c).norm() / L;
    s.values[6] = std::abs(s.normal.dot(p - c)) / L;
    return s;
}

bool coord_less(const Vec3 &a, const Vec3 &b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

}  // namespace

Eigen::MatrixXd local_geometry_features(const PointCloud &cloud, int k) {
    if (k < 4) throw Error(ErrorCode::kInvalidArgument, "encoder neighborhood size must be >= 4");
    if (cloud.size() < static_cast<std::size_t>(k)) {
        throw Error(ErrorCode::kInsufficientPoints, "cloud has fewer points than the encoder neighborhood size");
    }
    const NeighborIndex index(cloud);
    const int n = static_cast<int>(cloud.size());
    const int scales[3] = {k, std::min(2 * k, n), std::min(4 * k, n)};
    Eigen::MatrixXd f(n, kRawFeatureWidth);
    for (int i = 0; i < n; ++i) {
        // One query at the widest scale; the smaller scales are its prefixes.
        const std::vector<Neighbor> wide = index.knn(cloud[i], scales[2]);
        Vec3 normals[3];
        for (int s = 0; s < 3; ++s) {
            const std::vector<Neighbor> nb(wide.begin(), wide.begin() + scales[s]);
            const ScaleStats st = neighborhood_stats(cloud, static_cast<std::size_t>(i), nb);
            for (int c = 0; c < 7; ++c) f(i, 7 * s + c) = st.values[c];
            normals[s] = st.normal;
        }
        f(i, 21) = std::abs(normals[0].dot(normals[2]));
        f(i, 22) = std::abs(normals[1].dot(normals[2]));
    }
    return f;
}

std::vector<int> farthest_point_subset(const PointCloud &cloud, int count) {
    const int n = static_cast<int>(cloud.size());
    if (n == 0) throw Error(ErrorCode::kInsufficientPoints, "farthest-point sampling of an empty cloud");
    count = std::clamp(count, 1, n);

    // Strictly farther wins; equal distances go to the lexicographically smaller point.
    auto better = [&](int a, double da, int b, double db) {
        if (da != db) return da > db;
        return coord_less(cloud[a], cloud[b]);
    };

    const Vec3 c = cloud.centroid();
    std::vector<double> dist(n);
    int first = 0;
    for (int i = 0; i < n; ++i) {
        dist[i] = (cloud[i] - c).squaredNorm();
        if (i > 0 && better(i, dist[i], first, dist[first])) first = i;
    }

    std::vector<int> chosen{first};
    std::vector<bool> taken(n, false);
    taken[first] = true;
    for (int i = 0; i < n; ++i) dist[i] = (cloud[i] - cloud[first]).squaredNorm();
    while (static_cast<int>(chosen.size()) < count) {
        int next = -1;
        for (int i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (next < 0 || better(i, dist[i], next, dist[next])) next = i;
        }
        chosen.push_back(next);
        taken[next] = true;
        for (int i = 0; i < n; ++i) dist[i] = std::min(dist[i], (cloud[i] - cloud[next]).squaredNorm());
    }
    return chosen;
}

std::vector<int> attach_to_nearest(const PointCloud &cloud, const std::vector<int> &subset) {
    if (subset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty subset");
    std::vector<Vec3> pts;
    pts.reserve(subset.size());
    for (int s : subset) pts.push_back(cloud[static_cast<std::size_t>(s)]);
    const NeighborIndex index(std::move(pts));
    std::vector<int> out(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = index.nearest(cloud[i]).index;
    return out;
}

}  // namespace surfmatch
