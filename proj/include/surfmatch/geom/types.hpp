#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace surfmatch {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered 3D points in millimeters.
struct PointCloud {
    std::vector<Vec3> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Vec3 &operator[](std::size_t i) const { return points[i]; }
    Vec3 &operator[](std::size_t i) { return points[i]; }

    Vec3 centroid() const;

    /// Throws if the cloud is empty or holds a non-finite coordinate.
    void validate() const;
};

/// Proper rigid motion p -> R p + t.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
    RigidTransform inverse() const;

    /// (a * b).apply(p) == a.apply(b.apply(p))
    friend RigidTransform operator*(const RigidTransform &a, const RigidTransform &b);

    /// Orthonormality and det = +1 within `tol`.
    bool is_valid(double tol = 1e-9) const;

    /// Row-major [R | t], 12 numbers.
    std::vector<double> to_row_major() const;
    static RigidTransform from_row_major(std::span<const double> values);
};

struct Correspondence {
    int source = 0;
    int target = 0;

    friend bool operator==(const Correspondence &, const Correspondence &) = default;
    friend auto operator<=>(const Correspondence &, const Correspondence &) = default;
};

/// One-to-one index pairs between a source and a target cloud.
struct CorrespondenceSet {
    std::vector<Correspondence> pairs;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }

    bool is_one_to_one() const;

    /// Throws unless every index is in range and the set is one-to-one.
    void validate(std::size_t n_source, std::size_t n_target) const;
};

PointCloud apply_rigid(const PointCloud &cloud, const RigidTransform &t);

/// Rotation by `angle_rad` about `axis` (normalized internally).
Mat3 axis_angle(const Vec3 &axis, double angle_rad);

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3 &a, const Mat3 &b);

}  // namespace surfmatch
