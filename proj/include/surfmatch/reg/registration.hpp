#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "surfmatch/geom/types.hpp"

namespace surfmatch {

struct RansacConfig {
    int n_iterations = 50000;
    int sample_size = 3;
    double inlier_threshold_mm = 5.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct IcpConfig {
    int max_iterations = 50;
    double convergence_mm = 1e-4;
    double max_corr_dist_mm = 10.0;

    void validate() const;
};

nlohmann::json to_json(const RansacConfig &c);
nlohmann::json to_json(const IcpConfig &c);

/// Least-squares rigid fit src -> dst (centroids + SVD, det forced to +1).
/// Throws kInsufficientPoints below three pairs and kDegenerateGeometry when
/// either side is collinear.
RigidTransform kabsch(const std::vector<Vec3> &src, const std::vector<Vec3> &dst);

/// Non-throwing variant: nullopt where kabsch() would throw.
std::optional<RigidTransform> try_kabsch(const std::vector<Vec3> &src, const std::vector<Vec3> &dst);

/// sqrt(mean |T s - d|^2) over the pairs.
double pair_rms(const RigidTransform &t, const std::vector<Vec3> &src, const std::vector<Vec3> &dst);

struct RansacResult {
    bool success = false;
    std::string failure;          // empty on success
    RigidTransform transform;     // identity on failure
    std::vector<int> inliers;     // positions in the match list, under `transform`
    double inlier_rms = 0.0;
    int hypotheses_tested = 0;    // non-degenerate samples
};

/// Hypotheses from `sample_size` distinct matches; the one with most inliers
/// wins (ties: lower inlier RMS, then earlier iteration) and is refit on its
/// inliers. Iteration i draws from its own stream derived from (seed, i).
RansacResult ransac_rigid(const CorrespondenceSet &matches, const PointCloud &source, const PointCloud &target,
                          const RansacConfig &config = {});

struct IcpResult {
    RigidTransform transform;
    /// Gated cost sqrt(mean over target points of min(d^2, gate^2)), where
    /// d is the distance to the nearest transformed source point. Entry 0 is
    /// the initial transform; one entry per accepted iteration after that.
    std::vector<double> rms_trace;
    int iterations = 0;
    bool converged = false;
    bool failed = false;  // nothing within the gate at the start
};

/// Point-to-point ICP aligning `source` onto `target`.
IcpResult icp_refine(const PointCloud &source, const PointCloud &target, const RigidTransform &init,
                     const IcpConfig &config = {});

/// (R s + t) - s for every source point.
std::vector<Vec3> predicted_displacements(const PointCloud &source, const RigidTransform &transform);

struct RegistrationResult {
    RansacResult ransac;
    IcpResult icp;
    RigidTransform transform;  // ICP output, or identity when RANSAC failed
    bool success = false;
};

/// RANSAC over the matches, then ICP on the raw clouds.
RegistrationResult register_pair(const CorrespondenceSet &matches, const PointCloud &source, const PointCloud &target,
                                 const RansacConfig &ransac = {}, const IcpConfig &icp = {});

/// {"rotation": [9 numbers, row-major], "translation": [3 numbers]}
nlohmann::json transform_to_json(const RigidTransform &t);
RigidTransform transform_from_json(const nlohmann::json &j);
nlohmann::json to_json(const RegistrationResult &r);

}  // namespace surfmatch
