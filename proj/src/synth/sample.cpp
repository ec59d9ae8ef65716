#include "surfmatch/synth/sample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"

namespace surfmatch {
namespace {

enum SeedStream : std::uint64_t { kDeform = 1, kView = 2, kCrop = 3, kNoise = 4, kRigid = 5 };

}  // namespace

CropResult crop_front_surface(const SurfaceMesh &mesh, const DeformationField &field,
                              const Vec3 &view_dir) {
    if (field.displacement.size() != mesh.vertex_count()) {
        throw Error(ErrorCode::kInvalidArgument, "deformation field size differs from mesh");
    }
    if (std::abs(view_dir.norm() - 1.0) > 1e-9) {
        throw Error(ErrorCode::kInvalidArgument, "view direction must be a unit vector");
    }
    std::vector<Vec3> deformed(mesh.vertex_count());
    for (std::size_t i = 0; i < deformed.size(); ++i) deformed[i] = mesh.vertices[i] + field.displacement[i];
    const auto normals = mesh.vertex_normals(deformed);

    CropResult out;
    for (std::size_t i = 0; i < deformed.size(); ++i) {
        if (normals[i].dot(-view_dir) > 0.0) {
            out.cloud.points.push_back(deformed[i]);
            out.source_index.push_back(static_cast<int>(i));
        }
    }
    if (out.cloud.empty()) throw Error(ErrorCode::kEmptyResult, "front-surface crop is empty");
    return out;
}

CropResult crop_top_along(const PointCloud &raw, const std::vector<int> &index_map,
                          const Vec3 &direction, std::size_t keep) {
    if (index_map.size() != raw.size()) {
        throw Error(ErrorCode::kInvalidArgument, "index map size differs from cloud");
    }
    keep = std::min(keep, raw.size());
    std::vector<double> proj(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) proj[i] = raw[i].dot(direction);
    std::vector<int> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return proj[a] > proj[b]; });

    CropResult out;
    for (std::size_t r = 0; r < keep; ++r) {
        out.cloud.points.push_back(raw[order[r]]);
        out.source_index.push_back(index_map[order[r]]);
    }
    return out;
}

CropResult visibility_crop(const PointCloud &raw, const std::vector<int> &index_map,
                           std::uint64_t rng_seed, RatioRange ratio, std::size_t n_source) {
    if (!(ratio.lo > 0.0 && ratio.lo <= ratio.hi && ratio.hi <= 1.0) || n_source == 0) {
        throw Error(ErrorCode::kInvalidArgument, "visibility_crop: bad ratio range or source size");
    }
    const auto n = static_cast<double>(n_source);
    const auto min_keep = static_cast<std::size_t>(std::ceil(ratio.lo * n - 1e-9));
    const auto max_keep = static_cast<std::size_t>(std::floor(ratio.hi * n + 1e-9));
    if (min_keep > max_keep) {
        throw Error(ErrorCode::kInvalidArgument, "visibility_crop: ratio range admits no integer count");
    }
    if (raw.size() < min_keep) {
        throw Error(ErrorCode::kInsufficientPoints,
                    "insufficient front surface: " + std::to_string(raw.size()) + " points, need " +
                        std::to_string(min_keep));
    }

    Rng rng(rng_seed);
    const Vec3 dir = random_unit_vector(rng);
    const double r = std::uniform_real_distribution<double>(ratio.lo, ratio.hi)(rng);
    std::size_t keep = static_cast<std::size_t>(std::llround(r * n));
    keep = std::clamp(keep, min_keep, max_keep);
    keep = std::min(keep, raw.size());
    return crop_top_along(raw, index_map, dir, keep);
}

PointCloud add_noise(const PointCloud &cloud, double max_mm, std::uint64_t rng_seed) {
    if (!(max_mm >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise magnitude must be >= 0");
    if (max_mm == 0.0) return cloud;
    Rng rng(rng_seed);
    PointCloud out = cloud;
    for (auto &p : out.points) p += random_in_ball(rng, max_mm);
    return out;
}

std::vector<int> SamplePair::source_to_target() const {
    std::vector<int> map(source.size(), -1);
    for (const auto &c : gt_matches.pairs) map[c.source] = c.target;
    return map;
}

void SamplePair::validate(RatioRange ratio) const {
    source.validate();
    target.validate();
    const std::size_t n_ = n(), m_ = m();
    if (m_ >= n_) throw Error(ErrorCode::kInvalidArgument, "target must be smaller than source");
    gt_matches.validate(n_, m_);
    if (gt_matches.size() != m_) {
        throw Error(ErrorCode::kInvalidArgument, "every target point needs exactly one gt partner");
    }
    if (gt_displacement.size() != n_ || visibility.size() != n_) {
        throw Error(ErrorCode::kInvalidArgument, "per-source arrays have the wrong length");
    }
    std::size_t ones = 0;
    for (auto v : visibility) ones += v;
    if (ones != m_) throw Error(ErrorCode::kInvalidArgument, "visibility label count differs from m");
    for (const auto &c : gt_matches.pairs) {
        if (!visibility[c.source]) throw Error(ErrorCode::kInvalidArgument, "matched source point not labeled visible");
    }
    const double r = static_cast<double>(m_) / static_cast<double>(n_);
    if (r < ratio.lo - 1e-12 || r > ratio.hi + 1e-12) {
        throw Error(ErrorCode::kInvalidArgument, "visibility ratio " + std::to_string(r) + " out of range");
    }
    if (std::abs(r - visibility_ratio) > 1e-12) {
        throw Error(ErrorCode::kInvalidArgument, "stored visibility ratio disagrees with m/n");
    }
    if (!rigid.is_valid(1e-9)) throw Error(ErrorCode::kInvalidArgument, "rigid transform is not proper");
}

SamplePair make_sample_pair(const SurfaceMesh &mesh, const DeformationParams &params,
                            std::uint64_t rng_seed, const SampleOptions &options) {
    const std::size_t n = mesh.vertex_count();
    const DeformationField field = simulate_deformation(mesh, params, derive_seed(rng_seed, kDeform));

    Rng view_rng(derive_seed(rng_seed, kView));
    const Vec3 view_dir = random_unit_vector(view_rng);
    const CropResult front = crop_front_surface(mesh, field, view_dir);
    const CropResult visible =
        visibility_crop(front.cloud, front.source_index, derive_seed(rng_seed, kCrop), options.ratio, n);
    const PointCloud noisy = add_noise(visible.cloud, options.noise_max_mm, derive_seed(rng_seed, kNoise));

    RigidTransform rigid = RigidTransform::identity();
    if (options.rigid_motion) {
        rigid = random_rigid(derive_seed(rng_seed, kRigid), options.max_translation_mm);
        if (!options.random_rotation) rigid.rotation = Mat3::Identity();
    }

    SamplePair pair;
    pair.source = mesh.as_point_cloud();
    pair.target = apply_rigid(noisy, rigid);
    pair.rigid = rigid;
    pair.deformation = field.displacement;
    pair.visibility.assign(n, 0);
    pair.gt_displacement.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        pair.gt_displacement[i] = rigid.apply(mesh.vertices[i] + field.displacement[i]) - mesh.vertices[i];
    }
    for (std::size_t j = 0; j < visible.source_index.size(); ++j) {
        pair.gt_matches.pairs.push_back({visible.source_index[j], static_cast<int>(j)});
        pair.visibility[visible.source_index[j]] = 1;
    }
    pair.visibility_ratio = static_cast<double>(pair.m()) / static_cast<double>(n);
    return pair;
}

}  // namespace surfmatch
