#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"

#include "surfmatch/error.hpp"
#include "surfmatch/geom/kdtree.hpp"
#include "surfmatch/geom/normals.hpp"
#include "surfmatch/geom/ply.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/geom/types.hpp"

using namespace surfmatch;

namespace {

PointCloud random_cloud(Rng &rng, int n, double extent) {
    std::uniform_real_distribution<double> u(-extent, extent);
    PointCloud c;
    for (int i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
    return c;
}

// Integer lattice coordinates produce many exact distance ties.
PointCloud lattice_cloud(Rng &rng, int n) {
    std::uniform_int_distribution<int> u(-3, 3);
    PointCloud c;
    for (int i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
    return c;
}

}  // namespace

TEST_CASE("apply_rigid: identity, inverse and hand-evaluated rotation") {
    Rng rng(1);
    const PointCloud cloud = random_cloud(rng, 50, 100.0);

    const PointCloud same = apply_rigid(cloud, RigidTransform::identity());
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(same[i] == cloud[i]);

    const RigidTransform t = random_rigid(7, 20.0);
    const PointCloud back = apply_rigid(apply_rigid(cloud, t), t.inverse());
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK((back[i] - cloud[i]).norm() < 1e-9);

    RigidTransform rz;
    rz.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;  // +90 degrees about z
    const Vec3 p = rz.apply(Vec3(1, 0, 0));
    CHECK(p.x() == doctest::Approx(0.0));
    CHECK(p.y() == doctest::Approx(1.0));
    CHECK(p.z() == doctest::Approx(0.0));
    CHECK((axis_angle(Vec3::UnitZ(), std::numbers::pi / 2) - rz.rotation).norm() < 1e-15);
}

TEST_CASE("apply_rigid is an isometry and compose(T, inv T) is identity") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const PointCloud cloud = random_cloud(rng, 20, 50.0);
        const RigidTransform t = random_rigid(100 + trial, 20.0);
        const PointCloud moved = apply_rigid(cloud, t);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            for (std::size_t j = i + 1; j < cloud.size(); ++j) {
                CHECK(std::abs((moved[i] - moved[j]).norm() - (cloud[i] - cloud[j]).norm()) < 1e-9);
            }
        }
        const RigidTransform id = t * t.inverse();
        CHECK((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(id.translation.norm() < 1e-9);
    }
}

TEST_CASE("random_rigid: bounds, determinism, degenerate translation") {
    CHECK(random_rigid(3, 0.0).translation == Vec3::Zero());

    const RigidTransform a = random_rigid(42, 20.0), b = random_rigid(42, 20.0);
    CHECK(a.rotation == b.rotation);
    CHECK(a.translation == b.translation);

    double max_t = 0.0, max_col_err = 0.0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const RigidTransform t = random_rigid(s, 20.0);
        max_t = std::max(max_t, t.translation.norm());
        for (int c = 0; c < 3; ++c) max_col_err = std::max(max_col_err, std::abs(t.rotation.col(c).norm() - 1.0));
        REQUIRE(t.is_valid(1e-9));
    }
    CHECK(max_t <= 20.0);
    CHECK(max_t > 18.0);  // the ball is actually explored
    CHECK(max_col_err <= 1e-9);

    CHECK_THROWS_AS(random_rigid(1, -1.0), Error);
}

TEST_CASE("random_rotation is uniform: mean rotation matrix vanishes") {
    Rng rng(9);
    Mat3 sum = Mat3::Zero();
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += random_rotation(rng);
    // For Haar measure E[R] = 0; each entry has variance 1/3.
    CHECK((sum / n).cwiseAbs().maxCoeff() < 5.0 * std::sqrt(1.0 / 3.0 / n));
}

TEST_CASE("transform row-major round trip") {
    const RigidTransform t = random_rigid(5, 10.0);
    const auto v = t.to_row_major();
    const RigidTransform u = RigidTransform::from_row_major(v);
    CHECK(u.rotation == t.rotation);
    CHECK(u.translation == t.translation);
    CHECK_THROWS_AS(RigidTransform::from_row_major(std::vector<double>(11)), Error);
}

TEST_CASE("knn: examples") {
    PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)});
    const NeighborIndex index(cloud);

    auto self = index.knn(Vec3(3, 0, 0), 1);
    REQUIRE(self.size() == 1);
    CHECK(self[0].index == 2);
    CHECK(self[0].distance == 0.0);

    auto two = index.knn(Vec3(0.9, 0, 0), 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].index == 1);
    CHECK(two[1].index == 0);

    CHECK_THROWS_AS(index.knn(Vec3::Zero(), 4), Error);
    try {
        index.knn(Vec3::Zero(), 4);
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::kInsufficientPoints);
    }
}

TEST_CASE("knn and radius queries equal brute force, ties included") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const bool ties = trial % 2 == 0;
        const int n = 1 + static_cast<int>(rng() % 300);
        const PointCloud cloud = ties ? lattice_cloud(rng, n) : random_cloud(rng, n, 10.0);
        const NeighborIndex index(cloud, 1 + static_cast<int>(rng() % 10));
        for (int q = 0; q < 10; ++q) {
            const Vec3 query = ties ? lattice_cloud(rng, 1)[0] : random_cloud(rng, 1, 12.0)[0];
            const int k = 1 + static_cast<int>(rng() % n);
            const auto got = index.knn(query, k);
            const auto want = brute_force_knn(cloud.points, query, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].index == want[i].index);
                CHECK(got[i].distance == want[i].distance);
            }

            const double r = ties ? 2.0 : 5.0;
            const auto in_radius = index.radius(query, r);
            const auto all = brute_force_knn(cloud.points, query, n);
            std::size_t expected = 0;
            while (expected < all.size() && all[expected].distance <= r) ++expected;
            REQUIRE(in_radius.size() == expected);
            for (std::size_t i = 0; i < expected; ++i) CHECK(in_radius[i].index == all[i].index);
        }
    }
}

TEST_CASE("estimate_normals: plane") {
    PointCloud plane;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) plane.points.emplace_back(i * 2.0, j * 2.0, 0.0);
    NormalOptions opts;
    opts.viewpoint = Vec3(9, 9, -10);
    const auto est = estimate_normals(plane, 8, opts);
    CHECK(est.degenerate_count() == 0);
    for (const auto &n : est.normals) {
        CHECK(std::abs(n.norm() - 1.0) < 1e-9);
        CHECK(std::abs(std::abs(n.z()) - 1.0) < 1e-12);
        CHECK(n.z() > 0.0);  // outward relative to a viewpoint below the plane
    }
}

TEST_CASE("estimate_normals: sphere with inward orientation") {
    Rng rng(4);
    PointCloud sphere;
    for (int i = 0; i < 800; ++i) sphere.points.push_back(50.0 * random_unit_vector(rng));
    NormalOptions opts;
    opts.viewpoint = Vec3::Zero();
    opts.outward = false;
    const auto est = estimate_normals(sphere, 12, opts);
    CHECK(est.degenerate_count() == 0);
    for (std::size_t i = 0; i < sphere.size(); ++i) {
        CHECK(std::abs(est.normals[i].norm() - 1.0) < 1e-9);
        CHECK(est.normals[i].dot(sphere[i].normalized()) < -0.9);
    }
}

TEST_CASE("estimate_normals: coincident points are flagged") {
    PointCloud cloud;
    for (int i = 0; i < 6; ++i) cloud.points.emplace_back(1.0, 2.0, 3.0);
    for (int i = 0; i < 6; ++i) cloud.points.emplace_back(100.0 + i, 0.0, 0.0);  // collinear: rank 1
    const auto est = estimate_normals(cloud, 5);
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(est.degenerate[i]);
    CHECK_THROWS_AS(estimate_normals(cloud, 2), Error);
}

TEST_CASE("ply round trip preserves every value in both encodings") {
    Rng rng(8);
    PlyData data;
    for (int i = 0; i < 30; ++i) {
        data.vertices.push_back(random_cloud(rng, 1, 1000.0)[0]);
        data.normals.push_back(random_unit_vector(rng));
        data.colors.push_back({static_cast<std::uint8_t>(i), 128, 255});
    }
    data.faces = {{0, 1, 2}, {2, 3, 4}};
    data.edges = {{0, 5}, {6, 7}};
    const auto dir = std::filesystem::temp_directory_path();
    for (auto fmt : {PlyFormat::kAscii, PlyFormat::kBinaryLittleEndian}) {
        const auto path = dir / (fmt == PlyFormat::kAscii ? "surfmatch_a.ply" : "surfmatch_b.ply");
        write_ply(path, data, fmt);
        const PlyData back = read_ply(path);
        REQUIRE(back.vertices.size() == data.vertices.size());
        for (std::size_t i = 0; i < data.vertices.size(); ++i) {
            CHECK(back.vertices[i] == data.vertices[i]);
            CHECK(back.normals[i] == data.normals[i]);
            CHECK(back.colors[i] == data.colors[i]);
        }
        CHECK(back.faces == data.faces);
        CHECK(back.edges == data.edges);
        std::filesystem::remove(path);
    }
}

TEST_CASE("ply reader handles float properties, quads and rejects big endian") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = dir / "surfmatch_quad.ply";
    {
        std::ofstream out(path);
        out << "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\nproperty float x\n"
               "property float y\nproperty float z\nproperty uchar intensity\n"
               "element face 1\nproperty list uchar uint vertex_index\nend_header\n"
               "0 0 0 1\n1 0 0 2\n1 1 0 3\n0 1 0 4\n4 0 1 2 3\n";
    }
    const PlyData d = read_ply(path);
    CHECK(d.vertices.size() == 4);
    CHECK(d.faces.size() == 2);
    CHECK(d.normals.empty());
    {
        std::ofstream out(path);
        out << "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
    }
    CHECK_THROWS_AS(read_ply(path), Error);
    std::filesystem::remove(path);
}
