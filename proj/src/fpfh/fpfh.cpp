#include "surfmatch/fpfh/fpfh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/kdtree.hpp"

namespace surfmatch {
namespace {

constexpr double kAnchorTieTolerance = 1e-9;

int bin_of(double value, double lo, double hi) {
    const int b = static_cast<int>(std::floor(kFpfhBinsPerFeature * (value - lo) / (hi - lo)));
    return std::clamp(b, 0, kFpfhBinsPerFeature - 1);
}

// Scales each 11-bin block to sum to 100. Returns false if any block is empty.
bool normalize_blocks(FpfhDescriptor &h) {
    bool ok = true;
    for (int block = 0; block < 3; ++block) {
        double sum = 0.0;
        for (int b = 0; b < kFpfhBinsPerFeature; ++b) sum += h[block * kFpfhBinsPerFeature + b];
        if (sum <= 0.0) {
            ok = false;
            continue;
        }
        for (int b = 0; b < kFpfhBinsPerFeature; ++b) h[block * kFpfhBinsPerFeature + b] *= 100.0 / sum;
    }
    return ok;
}

}  // namespace

PairFeatures pair_features(const Vec3 &p1, const Vec3 &n1, const Vec3 &p2, const Vec3 &n2) {
    Vec3 dp = p2 - p1;
    const double d = dp.norm();
    if (d <= 0.0) throw Error(ErrorCode::kDegenerateGeometry, "pair_features: coincident points");

    const double angle1 = n1.dot(dp) / d;
    const double angle2 = n2.dot(dp) / d;
    Vec3 ns = n1, nt = n2;
    double phi = angle1;
    // Near-ties (parallel normals, for one) keep p1 as the anchor.
    if (std::abs(angle2) - std::abs(angle1) > kAnchorTieTolerance) {
        ns = n2;
        nt = n1;
        dp = -dp;
        phi = -angle2;
    }

    PairFeatures f;
    f.distance = d;
    f.phi = phi;
    Vec3 v = dp.cross(ns);
    const double vn = v.norm();
    if (vn <= 0.0) return f;  // normal parallel to the connecting line: frame undefined
    v /= vn;
    const Vec3 w = ns.cross(v);
    f.alpha = v.dot(nt);
    f.theta = std::atan2(w.dot(nt), ns.dot(nt));
    return f;
}

PointCloud voxel_downsample(const PointCloud &cloud, double voxel_mm) {
    if (!(voxel_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "voxel size must be > 0");
    using Key = std::tuple<long long, long long, long long>;
    std::map<Key, std::pair<Vec3, int>> cells;
    for (const auto &p : cloud.points) {
        const Key key{static_cast<long long>(std::floor(p.x() / voxel_mm)),
                      static_cast<long long>(std::floor(p.y() / voxel_mm)),
                      static_cast<long long>(std::floor(p.z() / voxel_mm))};
        auto &cell = cells[key];
        if (cell.second == 0) cell.first = Vec3::Zero();
        cell.first += p;
        ++cell.second;
    }
    PointCloud out;
    out.points.reserve(cells.size());
    for (const auto &[key, cell] : cells) out.points.push_back(cell.first / cell.second);
    return out;
}

FpfhResult compute_fpfh(const PointCloud &cloud, const NormalEstimate &normals, double radius_mm) {
    if (!(radius_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "FPFH radius must be > 0");
    if (normals.normals.size() != cloud.size() || normals.degenerate.size() != cloud.size()) {
        throw Error(ErrorCode::kInvalidArgument, "normal count differs from point count");
    }
    const std::size_t n = cloud.size();
    const NeighborIndex index(cloud);
    constexpr double kPi = std::numbers::pi;

    // Usable neighbors: non-degenerate, not the point itself, not coincident.
    std::vector<std::vector<Neighbor>> nbrs(n);
    std::vector<FpfhDescriptor> spfh(n);
    std::vector<bool> has_spfh(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        spfh[i].fill(0.0);
        if (normals.degenerate[i]) continue;
        for (const auto &nb : index.radius(cloud[i], radius_mm)) {
            if (static_cast<std::size_t>(nb.index) == i || nb.distance <= 0.0 || normals.degenerate[nb.index]) continue;
            nbrs[i].push_back(nb);
        }
        for (const auto &nb : nbrs[i]) {
            const PairFeatures f = pair_features(cloud[i], normals.normals[i], cloud[nb.index], normals.normals[nb.index]);
            spfh[i][bin_of(f.theta, -kPi, kPi)] += 1.0;
            spfh[i][kFpfhBinsPerFeature + bin_of(f.alpha, -1.0, 1.0)] += 1.0;
            spfh[i][2 * kFpfhBinsPerFeature + bin_of(f.phi, -1.0, 1.0)] += 1.0;
        }
        has_spfh[i] = !nbrs[i].empty() && normalize_blocks(spfh[i]);
    }

    FpfhResult out;
    out.descriptors.resize(n);
    out.flagged.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        FpfhDescriptor &h = out.descriptors[i];
        h.fill(0.0);
        if (!has_spfh[i]) {
            out.flagged[i] = true;
            continue;
        }
        FpfhDescriptor acc{};
        for (const auto &nb : nbrs[i]) {
            if (!has_spfh[nb.index]) continue;
            for (int b = 0; b < kFpfhSize; ++b) acc[b] += spfh[nb.index][b] / nb.distance;
        }
        const double k = static_cast<double>(nbrs[i].size());
        for (int b = 0; b < kFpfhSize; ++b) h[b] = spfh[i][b] + acc[b] / k;
        if (!normalize_blocks(h)) {
            h.fill(0.0);
            out.flagged[i] = true;
        }
    }
    return out;
}

FpfhFeatures extract_fpfh_features(const PointCloud &cloud, const FpfhConfig &cfg) {
    FpfhFeatures f;
    f.cloud = voxel_downsample(cloud, cfg.voxel_mm);
    const NormalEstimate normals = estimate_normals_radius(f.cloud, cfg.normal_radius_factor * cfg.voxel_mm);
    f.fpfh = compute_fpfh(f.cloud, normals, cfg.feature_radius_factor * cfg.voxel_mm);
    return f;
}

Eigen::MatrixXd descriptor_matrix(const FpfhResult &result) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(result.descriptors.size()), kFpfhSize);
    for (std::size_t i = 0; i < result.descriptors.size(); ++i) {
        for (int b = 0; b < kFpfhSize; ++b) m(static_cast<Eigen::Index>(i), b) = result.descriptors[i][b];
    }
    return m;
}

void write_fpfh_csv(const std::filesystem::path &path, const FpfhResult &result) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto &d : result.descriptors) {
        for (int b = 0; b < kFpfhSize; ++b) out << (b ? "," : "") << d[b];
        out << '\n';
    }
}

}  // namespace surfmatch
