#pragma once

#include <cstddef>
#include <vector>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

struct Neighbor {
    int index = 0;
    double distance = 0.0;
};

/// Exact k-d tree over a point cloud. Results match a brute-force scan
/// bit-for-bit: ordered by (squared distance, point index).
/// Read-only after construction and safe to share across threads.
class NeighborIndex {
public:
    explicit NeighborIndex(const PointCloud &cloud, int leaf_size = 8);
    explicit NeighborIndex(std::vector<Vec3> points, int leaf_size = 8);

    std::size_t size() const { return points_.size(); }
    const Vec3 &point(std::size_t i) const { return points_[i]; }

    /// k nearest points, ascending by distance, ties by lower index.
    /// Throws kInsufficientPoints when k exceeds the point count.
    std::vector<Neighbor> knn(const Vec3 &query, int k) const;

    /// Nearest point; the index must not be empty.
    Neighbor nearest(const Vec3 &query) const;

    /// All points with distance <= radius, same ordering as knn.
    std::vector<Neighbor> radius(const Vec3 &query, double radius) const;

private:
    struct Node {
        int begin = 0;
        int end = 0;
        int axis = -1;  // -1 for leaves
        double split = 0.0;
        int left = -1;
        int right = -1;
    };

    int build(int begin, int end);

    template <class Visitor>
    void search(int node, const Vec3 &query, Visitor &visitor) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int leaf_size_;
};

/// Brute-force reference with the same ordering contract as NeighborIndex::knn.
std::vector<Neighbor> brute_force_knn(const std::vector<Vec3> &points, const Vec3 &query, int k);

}  // namespace surfmatch
