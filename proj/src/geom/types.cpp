#include "surfmatch/geom/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include <Eigen/Geometry>

#include "surfmatch/error.hpp"

namespace surfmatch {

const char *error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid_argument";
        case ErrorCode::kInsufficientPoints: return "insufficient_points";
        case ErrorCode::kDegenerateGeometry: return "degenerate_geometry";
        case ErrorCode::kEmptyResult: return "empty_result";
        case ErrorCode::kNonFinite: return "non_finite";
        case ErrorCode::kIo: return "io";
        case ErrorCode::kFormat: return "format";
        case ErrorCode::kVersionMismatch: return "version_mismatch";
        case ErrorCode::kSplitLeakage: return "split_leakage";
        case ErrorCode::kUndefined: return "undefined";
    }
    return "unknown";
}

Vec3 PointCloud::centroid() const {
    Vec3 c = Vec3::Zero();
    if (points.empty()) return c;
    for (const auto &p : points) c += p;
    return c / static_cast<double>(points.size());
}

void PointCloud::validate() const {
    if (points.empty()) throw Error(ErrorCode::kInsufficientPoints, "point cloud is empty");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!points[i].allFinite()) {
            throw Error(ErrorCode::kNonFinite,
                        "point " + std::to_string(i) + " has a non-finite coordinate");
        }
    }
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform operator*(const RigidTransform &a, const RigidTransform &b) {
    RigidTransform c;
    c.rotation = a.rotation * b.rotation;
    c.translation = a.rotation * b.translation + a.translation;
    return c;
}

bool RigidTransform::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

std::vector<double> RigidTransform::to_row_major() const {
    std::vector<double> v;
    v.reserve(12);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) v.push_back(rotation(r, c));
        v.push_back(translation(r));
    }
    return v;
}

RigidTransform RigidTransform::from_row_major(std::span<const double> values) {
    if (values.size() != 12) {
        throw Error(ErrorCode::kFormat, "rigid transform needs 12 row-major numbers, got " +
                                            std::to_string(values.size()));
    }
    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = values[r * 4 + c];
        t.translation(r) = values[r * 4 + 3];
    }
    return t;
}

bool CorrespondenceSet::is_one_to_one() const {
    std::unordered_set<int> src, dst;
    for (const auto &p : pairs) {
        if (!src.insert(p.source).second) return false;
        if (!dst.insert(p.target).second) return false;
    }
    return true;
}

void CorrespondenceSet::validate(std::size_t n_source, std::size_t n_target) const {
    for (const auto &p : pairs) {
        if (p.source < 0 || static_cast<std::size_t>(p.source) >= n_source || p.target < 0 ||
            static_cast<std::size_t>(p.target) >= n_target) {
            throw Error(ErrorCode::kInvalidArgument,
                        "correspondence (" + std::to_string(p.source) + ", " +
                            std::to_string(p.target) + ") out of range");
        }
    }
    if (!is_one_to_one()) throw Error(ErrorCode::kInvalidArgument, "correspondences are not one-to-one");
}

PointCloud apply_rigid(const PointCloud &cloud, const RigidTransform &t) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto &p : cloud.points) out.points.push_back(t.apply(p));
    return out;
}

Mat3 axis_angle(const Vec3 &axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

double rotation_angle_between(const Mat3 &a, const Mat3 &b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

}  // namespace surfmatch
