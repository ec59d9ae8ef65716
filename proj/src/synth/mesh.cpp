#include "surfmatch/synth/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"

namespace surfmatch {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMinDiagonal = 150.0;
constexpr double kMaxDiagonal = 250.0;

Vec3 shape_point(const LiverShape &shape, const Vec3 &u) {
    double radial = 1.0;
    for (const auto &b : shape.bumps) {
        radial += shape.amplitude * b.weight * std::exp(b.sharpness * (u.dot(b.direction) - 1.0));
    }
    Vec3 p = radial * shape.semi_axes.cwiseProduct(u);
    const double along = p.x() / shape.semi_axes.x();
    p.z() *= 1.0 - shape.amplitude * shape.taper * 0.5 * (along + 1.0);
    return p;
}

// Ring vertex counts on the unit sphere for roughly uniform spacing, adjusted
// so that 2 poles + all rings give exactly n vertices.
std::vector<int> ring_counts(int n) {
    const double h = std::sqrt(4.0 * kPi / n);
    const int rings = std::max(3, static_cast<int>(std::lround(kPi / h)) - 1);
    std::vector<int> counts(rings);
    for (int k = 0; k < rings; ++k) {
        const double theta = kPi * (k + 1) / (rings + 1);
        counts[k] = std::max(3, static_cast<int>(std::lround(2.0 * kPi * std::sin(theta) / h)));
    }
    int diff = (n - 2) - std::accumulate(counts.begin(), counts.end(), 0);
    std::vector<int> order(rings);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts[a] > counts[b]; });
    for (std::size_t step = 0; diff != 0; ++step) {
        int &c = counts[order[step % order.size()]];
        if (diff > 0) {
            ++c;
            --diff;
        } else if (c > 3) {
            --c;
            ++diff;
        }
    }
    return counts;
}

}  // namespace

std::vector<std::pair<int, int>> SurfaceMesh::edges() const {
    std::vector<std::pair<int, int>> e;
    e.reserve(faces.size() * 3);
    for (const auto &f : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            e.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
}

std::vector<Vec3> SurfaceMesh::vertex_normals() const { return vertex_normals(vertices); }

std::vector<Vec3> SurfaceMesh::vertex_normals(const std::vector<Vec3> &positions) const {
    std::vector<Vec3> n(positions.size(), Vec3::Zero());
    for (const auto &f : faces) {
        // Cross product magnitude is twice the area: area weighting for free.
        const Vec3 fn = (positions[f[1]] - positions[f[0]]).cross(positions[f[2]] - positions[f[0]]);
        for (int v : f) n[v] += fn;
    }
    for (auto &v : n) {
        const double len = v.norm();
        if (len > 0.0) v /= len;
    }
    return n;
}

bool SurfaceMesh::is_edge_manifold() const {
    std::map<std::pair<int, int>, int> uses;
    for (const auto &f : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            ++uses[{std::min(a, b), std::max(a, b)}];
        }
    }
    return std::all_of(uses.begin(), uses.end(), [](const auto &kv) { return kv.second == 2; });
}

double SurfaceMesh::bounding_box_diagonal() const {
    if (vertices.empty()) return 0.0;
    Vec3 lo = vertices.front(), hi = lo;
    for (const auto &v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
}

double SurfaceMesh::signed_volume() const {
    double vol = 0.0;
    for (const auto &f : faces) vol += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]]));
    return vol / 6.0;
}

void SurfaceMesh::validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const auto &v : vertices) {
        if (!v.allFinite()) throw Error(ErrorCode::kNonFinite, "mesh has a non-finite vertex");
    }
    for (const auto &f : faces) {
        for (int v : f) {
            if (v < 0 || v >= n) throw Error(ErrorCode::kInvalidArgument, "mesh face index out of range");
        }
    }
}

LiverShape draw_liver_shape(std::uint64_t rng_seed, double amplitude) {
    Rng rng(rng_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LiverShape s;
    s.amplitude = amplitude;
    s.semi_axes = Vec3(60.0 + 25.0 * u(rng), 40.0 + 15.0 * u(rng), 25.0 + 15.0 * u(rng));
    const int n_bumps = 4 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n_bumps; ++i) {
        ShapeBump b;
        b.direction = random_unit_vector(rng);
        b.weight = -0.10 + 0.25 * u(rng);
        b.sharpness = 2.0 + 3.0 * u(rng);
        s.bumps.push_back(b);
    }
    s.taper = 0.2 + 0.2 * u(rng);
    return s;
}

SurfaceMesh build_liver_mesh(const LiverShape &shape, int n_vertices) {
    if (n_vertices < 500) {
        throw Error(ErrorCode::kInvalidArgument, "liver mesh needs >= 500 vertices, got " +
                                                     std::to_string(n_vertices));
    }
    const std::vector<int> counts = ring_counts(n_vertices);
    const int rings = static_cast<int>(counts.size());

    SurfaceMesh mesh;
    mesh.vertices.reserve(n_vertices);
    mesh.vertices.push_back(shape_point(shape, Vec3::UnitZ()));
    std::vector<int> ring_start(rings);
    for (int k = 0; k < rings; ++k) {
        ring_start[k] = static_cast<int>(mesh.vertices.size());
        const double theta = kPi * (k + 1) / (rings + 1);
        const double offset = (k % 2) * 0.5;
        for (int i = 0; i < counts[k]; ++i) {
            const double phi = 2.0 * kPi * (i + offset) / counts[k];
            const Vec3 u(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
            mesh.vertices.push_back(shape_point(shape, u));
        }
    }
    const int south = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(shape_point(shape, -Vec3::UnitZ()));

    const auto ring_vertex = [&](int k, int i) { return ring_start[k] + i % counts[k]; };
    for (int i = 0; i < counts[0]; ++i) mesh.faces.push_back({0, ring_vertex(0, i), ring_vertex(0, i + 1)});
    for (int k = 0; k + 1 < rings; ++k) {
        const int a = counts[k], b = counts[k + 1];
        const double off_a = (k % 2) * 0.5, off_b = ((k + 1) % 2) * 0.5;
        int i = 0, j = 0;
        while (i < a || j < b) {
            const bool advance_a =
                j == b || (i < a && (i + 1 + off_a) / a < (j + 1 + off_b) / b);
            if (advance_a) {
                mesh.faces.push_back({ring_vertex(k, i), ring_vertex(k + 1, j), ring_vertex(k, i + 1)});
                ++i;
            } else {
                mesh.faces.push_back({ring_vertex(k, i), ring_vertex(k + 1, j), ring_vertex(k + 1, j + 1)});
                ++j;
            }
        }
    }
    const int last = rings - 1;
    for (int i = 0; i < counts[last]; ++i) {
        mesh.faces.push_back({ring_vertex(last, i), south, ring_vertex(last, i + 1)});
    }

    if (mesh.signed_volume() < 0.0) {
        for (auto &f : mesh.faces) std::swap(f[1], f[2]);
    }

    const double diag = mesh.bounding_box_diagonal();
    if (diag < kMinDiagonal || diag > kMaxDiagonal) {
        const double scale = std::clamp(diag, kMinDiagonal + 5.0, kMaxDiagonal - 5.0) / diag;
        for (auto &v : mesh.vertices) v *= scale;
    }
    return mesh;
}

SurfaceMesh generate_liver_mesh(std::uint64_t rng_seed, int n_vertices, double amplitude) {
    return build_liver_mesh(draw_liver_shape(rng_seed, amplitude), n_vertices);
}

}  // namespace surfmatch
