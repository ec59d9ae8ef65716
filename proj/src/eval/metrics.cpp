#include "surfmatch/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "surfmatch/error.hpp"

namespace surfmatch {

void MetricConfig::validate() const {
    if (sigma_mm.empty()) throw Error(ErrorCode::kInvalidArgument, "sigma list is empty");
    for (double s : sigma_mm) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorCode::kInvalidArgument, "sigma values must be >= 0");
    }
}

bool is_inlier(int pred_j, int gt_j, const PointCloud &target, double sigma) {
    if (gt_j < 0) return false;
    const auto n = static_cast<int>(target.size());
    if (pred_j < 0 || pred_j >= n || gt_j >= n) throw Error(ErrorCode::kInvalidArgument, "target index out of range");
    if (sigma == 0.0) return pred_j == gt_j;
    return (target[pred_j] - target[gt_j]).norm() < sigma;
}

std::vector<int> gt_lookup(const CorrespondenceSet &gt, std::size_t n_source) {
    std::vector<int> lookup(n_source, -1);
    for (const auto &c : gt.pairs) {
        if (c.source < 0 || static_cast<std::size_t>(c.source) >= n_source) {
            throw Error(ErrorCode::kInvalidArgument, "ground-truth source index out of range");
        }
        lookup[c.source] = c.target;
    }
    return lookup;
}

int count_inliers(const CorrespondenceSet &matches, const std::vector<int> &lookup, const PointCloud &target,
                  double sigma) {
    int count = 0;
    for (const auto &c : matches.pairs) {
        const int gt = (c.source >= 0 && static_cast<std::size_t>(c.source) < lookup.size()) ? lookup[c.source] : -1;
        if (is_inlier(c.target, gt, target, sigma)) ++count;
    }
    return count;
}

namespace {

std::size_t source_extent(const CorrespondenceSet &a, const CorrespondenceSet &b) {
    int mx = -1;
    for (const auto &c : a.pairs) mx = std::max(mx, c.source);
    for (const auto &c : b.pairs) mx = std::max(mx, c.source);
    return static_cast<std::size_t>(mx + 1);
}

}  // namespace

std::optional<double> inlier_ratio(const CorrespondenceSet &matches, const CorrespondenceSet &gt,
                                   const PointCloud &target, double sigma) {
    if (matches.empty()) return std::nullopt;
    const auto lookup = gt_lookup(gt, source_extent(matches, gt));
    return static_cast<double>(count_inliers(matches, lookup, target, sigma)) / static_cast<double>(matches.size());
}

double match_score(const CorrespondenceSet &matches, const CorrespondenceSet &gt, const PointCloud &target,
                   double sigma) {
    if (target.empty()) throw Error(ErrorCode::kInvalidArgument, "match score needs a non-empty target");
    const auto lookup = gt_lookup(gt, source_extent(matches, gt));
    return static_cast<double>(count_inliers(matches, lookup, target, sigma)) / static_cast<double>(target.size());
}

double registration_error(const std::vector<Vec3> &v_gt, const std::vector<Vec3> &v_pred) {
    if (v_gt.size() != v_pred.size()) throw Error(ErrorCode::kInvalidArgument, "displacement fields differ in length");
    if (v_gt.empty()) throw Error(ErrorCode::kInvalidArgument, "registration error of an empty field");
    double s = 0.0;
    for (std::size_t i = 0; i < v_gt.size(); ++i) s += (v_gt[i] - v_pred[i]).squaredNorm();
    return std::sqrt(s / static_cast<double>(v_gt.size()));
}

}  // namespace surfmatch
