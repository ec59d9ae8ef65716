#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "surfmatch/geom/normals.hpp"
#include "surfmatch/geom/types.hpp"

namespace surfmatch {

inline constexpr int kFpfhBinsPerFeature = 11;
inline constexpr int kFpfhSize = 3 * kFpfhBinsPerFeature;

/// Three 11-bin blocks (theta, alpha, phi), each summing to 100, or all zero
/// for flagged points.
using FpfhDescriptor = std::array<double, kFpfhSize>;

/// Point-pair features in the Darboux frame anchored at the point whose
/// normal makes the smaller angle with the connecting line; p1 when the two
/// angles' cosines differ by at most 1e-9.
struct PairFeatures {
    double alpha = 0.0;  // v . n_t
    double phi = 0.0;    // u . (p_t - p_s) / d
    double theta = 0.0;  // atan2(w . n_t, u . n_t)
    double distance = 0.0;
};

/// Throws kDegenerateGeometry for coincident points.
PairFeatures pair_features(const Vec3 &p1, const Vec3 &n1, const Vec3 &p2, const Vec3 &n2);

/// One output point per occupied voxel: the centroid of its members, in
/// ascending voxel-key order.
PointCloud voxel_downsample(const PointCloud &cloud, double voxel_mm);

struct FpfhResult {
    std::vector<FpfhDescriptor> descriptors;
    /// True for points with degenerate normals or no usable neighbors; their
    /// descriptor is all zero.
    std::vector<bool> flagged;
};

FpfhResult compute_fpfh(const PointCloud &cloud, const NormalEstimate &normals, double radius_mm);

struct FpfhConfig {
    double voxel_mm = 5.0;
    double normal_radius_factor = 2.5;
    double feature_radius_factor = 5.0;
};

/// Downsampled cloud with its descriptors.
struct FpfhFeatures {
    PointCloud cloud;
    FpfhResult fpfh;
};

/// voxel_downsample -> radius normals (centroid viewpoint, outward) -> FPFH.
FpfhFeatures extract_fpfh_features(const PointCloud &cloud, const FpfhConfig &cfg = {});

/// Descriptor rows as an Eigen matrix (count x 33).
Eigen::MatrixXd descriptor_matrix(const FpfhResult &result);

/// One row per point, 33 comma-separated columns, no header.
void write_fpfh_csv(const std::filesystem::path &path, const FpfhResult &result);

}  // namespace surfmatch
