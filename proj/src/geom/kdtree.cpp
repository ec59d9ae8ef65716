#include "surfmatch/geom/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <queue>
#include <string>

#include "surfmatch/error.hpp"

namespace surfmatch {
namespace {

struct Candidate {
    double dist2;
    int index;
    bool operator<(const Candidate &o) const {
        return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
};

inline double squared_distance(const Vec3 &a, const Vec3 &b) {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

std::vector<Neighbor> to_neighbors(std::vector<Candidate> c) {
    std::sort(c.begin(), c.end());
    std::vector<Neighbor> out;
    out.reserve(c.size());
    for (const auto &x : c) out.push_back({x.index, std::sqrt(x.dist2)});
    return out;
}

}  // namespace

NeighborIndex::NeighborIndex(const PointCloud &cloud, int leaf_size)
    : NeighborIndex(cloud.points, leaf_size) {}

NeighborIndex::NeighborIndex(std::vector<Vec3> points, int leaf_size)
    : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
        build(0, static_cast<int>(points_.size()));
    }
}

int NeighborIndex::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];

    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

// Left subtree holds coordinates <= split, right holds >= split.
template <class Visitor>
void NeighborIndex::search(int node_id, const Vec3 &query, Visitor &visitor) const {
    const Node &node = nodes_[node_id];
    if (node.axis < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            const int idx = order_[i];
            visitor.offer(squared_distance(points_[idx], query), idx);
        }
        return;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    search(near, query, visitor);
    // Ties at the bound must still be visited for the index tie-break.
    if (diff * diff <= visitor.bound()) search(far, query, visitor);
}

namespace {

struct KnnVisitor {
    std::size_t k;
    std::priority_queue<Candidate> heap;
    void offer(double d2, int idx) {
        if (heap.size() < k) {
            heap.push({d2, idx});
        } else if (Candidate{d2, idx} < heap.top()) {
            heap.pop();
            heap.push({d2, idx});
        }
    }
    double bound() const {
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().dist2;
    }
};

struct RadiusVisitor {
    double r2;
    std::vector<Candidate> found;
    void offer(double d2, int idx) {
        if (d2 <= r2) found.push_back({d2, idx});
    }
    double bound() const { return r2; }
};

}  // namespace

std::vector<Neighbor> NeighborIndex::knn(const Vec3 &query, int k) const {
    if (k < 0 || static_cast<std::size_t>(k) > points_.size()) {
        throw Error(ErrorCode::kInsufficientPoints,
                    "knn: k=" + std::to_string(k) + " exceeds point count " +
                        std::to_string(points_.size()));
    }
    if (k == 0) return {};
    KnnVisitor v{static_cast<std::size_t>(k), {}};
    search(0, query, v);
    std::vector<Candidate> c;
    c.reserve(v.heap.size());
    while (!v.heap.empty()) {
        c.push_back(v.heap.top());
        v.heap.pop();
    }
    return to_neighbors(std::move(c));
}

Neighbor NeighborIndex::nearest(const Vec3 &query) const { return knn(query, 1).front(); }

std::vector<Neighbor> NeighborIndex::radius(const Vec3 &query, double radius) const {
    if (points_.empty() || radius < 0.0) return {};
    RadiusVisitor v{radius * radius, {}};
    search(0, query, v);
    return to_neighbors(std::move(v.found));
}

std::vector<Neighbor> brute_force_knn(const std::vector<Vec3> &points, const Vec3 &query, int k) {
    if (k < 0 || static_cast<std::size_t>(k) > points.size()) {
        throw Error(ErrorCode::kInsufficientPoints, "brute_force_knn: k exceeds point count");
    }
    std::vector<Candidate> all;
    all.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        all.push_back({squared_distance(points[i], query), static_cast<int>(i)});
    }
    std::sort(all.begin(), all.end());
    all.resize(k);
    return to_neighbors(std::move(all));
}

}  // namespace surfmatch
