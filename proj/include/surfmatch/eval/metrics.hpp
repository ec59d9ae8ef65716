#pragma once

#include <optional>
#include <vector>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

struct MetricConfig {
    std::vector<double> sigma_mm{0, 1, 2, 3, 4, 5};

    void validate() const;
};

/// sigma == 0: pred_j == gt_j. sigma > 0: |T(pred_j) - T(gt_j)| < sigma.
/// A gt_j of -1 (no partner) is never an inlier.
bool is_inlier(int pred_j, int gt_j, const PointCloud &target, double sigma);

/// gt target index per source point, -1 where there is none.
std::vector<int> gt_lookup(const CorrespondenceSet &gt, std::size_t n_source);

int count_inliers(const CorrespondenceSet &matches, const std::vector<int> &lookup, const PointCloud &target,
                  double sigma);

/// Inliers / predictions; nullopt (undefined) for an empty match set.
std::optional<double> inlier_ratio(const CorrespondenceSet &matches, const CorrespondenceSet &gt,
                                   const PointCloud &target, double sigma);

/// Inliers / target size. Throws for an empty target.
double match_score(const CorrespondenceSet &matches, const CorrespondenceSet &gt, const PointCloud &target,
                   double sigma);

/// sqrt(mean |v_gt - v_pred|^2). Throws on length mismatch or empty input.
double registration_error(const std::vector<Vec3> &v_gt, const std::vector<Vec3> &v_pred);

}  // namespace surfmatch
