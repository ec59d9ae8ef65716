#pragma once

#include <vector>

#include <Eigen/Core>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

/// Lengths inside raw features are divided by this.
inline constexpr double kFeatureLengthScaleMm = 10.0;

/// Width of local_geometry_features(): 7 per scale over 3 scales, plus 2
/// cross-scale normal agreements.
inline constexpr int kRawFeatureWidth = 23;

/// Per-point neighborhood statistics over the k, 2k and 4k nearest
/// neighbors (each clipped to the cloud size). Invariant to rigid motion and
/// to the order of the input points.
///
/// Per scale: mean neighbor distance, the three covariance sqrt-eigenvalues
/// normalized to sum 1, surface variation, distance from the point to the
/// neighborhood centroid and its absolute height above the fitted plane.
/// Then |n_k . n_4k| and |n_2k . n_4k|.
///
/// Throws kInsufficientPoints if the cloud has fewer than k points, and
/// kInvalidArgument if k < 4.
Eigen::MatrixXd local_geometry_features(const PointCloud &cloud, int k);

/// Farthest-point sampling of `count` indices (all points when the cloud is
/// smaller). Starts from the point farthest from the centroid. Equal
/// distances are resolved by lexicographic point coordinates, so the selected
/// set does not depend on input order.
std::vector<int> farthest_point_subset(const PointCloud &cloud, int count);

/// For every point, the position in `subset` of its nearest subset point.
std::vector<int> attach_to_nearest(const PointCloud &cloud, const std::vector<int> &subset);

}  // namespace surfmatch
