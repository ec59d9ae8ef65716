#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "surfmatch/geom/types.hpp"
#include "surfmatch/synth/deformation.hpp"
#include "surfmatch/synth/mesh.hpp"

namespace surfmatch {

/// A cropped cloud plus, for each of its points, the source vertex it came from.
struct CropResult {
    PointCloud cloud;
    std::vector<int> source_index;
};

struct RatioRange {
    double lo = 0.20;
    double hi = 0.24;
};

/// Deformed vertices whose outward normal faces the viewer, i.e. has a
/// positive dot product with -view_dir.
CropResult crop_front_surface(const SurfaceMesh &mesh, const DeformationField &field,
                              const Vec3 &view_dir);

/// Projects `raw` onto a random unit direction and keeps the top-ranked
/// points so that m / n_source falls in `ratio` (target ratio drawn uniformly
/// from the range). Output is in ranking order.
CropResult visibility_crop(const PointCloud &raw, const std::vector<int> &index_map,
                           std::uint64_t rng_seed, RatioRange ratio, std::size_t n_source);

/// Same, with an explicit projection direction and target count.
CropResult crop_top_along(const PointCloud &raw, const std::vector<int> &index_map,
                          const Vec3 &direction, std::size_t keep);

/// Independent uniform-in-ball perturbation of every point.
PointCloud add_noise(const PointCloud &cloud, double max_mm, std::uint64_t rng_seed);

struct SampleOptions {
    double noise_max_mm = 2.0;
    double max_translation_mm = 20.0;
    bool random_rotation = true;
    bool rigid_motion = true;  // false forces the identity transform
    RatioRange ratio{};
};

/// One source/target instance with its ground truth.
struct SamplePair {
    PointCloud source;
    PointCloud target;
    CorrespondenceSet gt_matches;          // (source vertex, target point), one per target point
    std::vector<Vec3> gt_displacement;     // rigid(S + D) - S, per source point
    std::vector<Vec3> deformation;         // D, per source point
    std::vector<std::uint8_t> visibility;  // 1 where the source point has a target partner
    RigidTransform rigid;
    double visibility_ratio = 0.0;

    std::size_t n() const { return source.size(); }
    std::size_t m() const { return target.size(); }

    /// gt target index per source point, -1 when invisible.
    std::vector<int> source_to_target() const;

    /// Throws if any structural invariant is broken.
    void validate(RatioRange ratio = {}) const;
};

/// deformation -> front crop -> visibility crop -> noise -> rigid motion.
SamplePair make_sample_pair(const SurfaceMesh &mesh, const DeformationParams &params,
                            std::uint64_t rng_seed, const SampleOptions &options = {});

}  // namespace surfmatch
