#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"

#include "surfmatch/error.hpp"
#include "surfmatch/fpfh/fpfh.hpp"
#include "surfmatch/geom/normals.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/synth/deformation.hpp"
#include "surfmatch/synth/mesh.hpp"
#include "surfmatch/synth/sample.hpp"

using namespace surfmatch;

namespace {

double block_sum(const FpfhDescriptor &d, int block) {
    double s = 0.0;
    for (int b = 0; b < kFpfhBinsPerFeature; ++b) s += d[block * kFpfhBinsPerFeature + b];
    return s;
}

PointCloud plane_grid(int side, double spacing) {
    PointCloud c;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) c.points.emplace_back(i * spacing, j * spacing, 0.0);
    return c;
}

PointCloud liver_crop(std::uint64_t seed) {
    const SurfaceMesh mesh = generate_liver_mesh(seed, 1500);
    const auto field = DeformationField::zeros(mesh.vertices.size());
    return crop_front_surface(mesh, field, Vec3(0, 0, -1)).cloud;
}

}  // namespace

TEST_CASE("pair_features: hand-evaluated configurations") {
    // Parallel normals perpendicular to the connecting line.
    const PairFeatures f = pair_features(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(3, 0, 0), Vec3(0, 0, 1));
    CHECK(f.phi == doctest::Approx(0.0));
    CHECK(f.alpha == doctest::Approx(0.0));
    CHECK(f.theta == doctest::Approx(0.0));
    CHECK(f.distance == doctest::Approx(3.0));

    // Second normal tilted by 30 degrees inside the plane spanned by u and dp:
    // u = z, v = dp x u = -y, w = u x v = x. n_t = (sin 30, 0, cos 30).
    const double a = std::numbers::pi / 6;
    const PairFeatures g = pair_features(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(std::sin(a), 0, std::cos(a)));
    // acos|0| = 90 deg vs acos|sin 30| = 60 deg: anchor moves to the second point.
    // After the swap u = n_t_orig, dp = (-1,0,0), phi = -sin 30.
    CHECK(g.phi == doctest::Approx(-0.5));
    CHECK(g.alpha == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(g.theta) == doctest::Approx(a));

    CHECK_THROWS_AS(pair_features(Vec3(1, 2, 3), Vec3(0, 0, 1), Vec3(1, 2, 3), Vec3(0, 0, 1)), Error);
}

TEST_CASE("pair_features: rigid invariance and order symmetry") {
    Rng rng(11);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec3 p1(u(rng), u(rng), u(rng));
        const Vec3 p2(u(rng), u(rng), u(rng));
        const Vec3 n1 = random_unit_vector(rng);
        const Vec3 n2 = random_unit_vector(rng);
        const PairFeatures f = pair_features(p1, n1, p2, n2);
        CHECK(f.alpha >= -1.0);
        CHECK(f.alpha <= 1.0);
        CHECK(f.phi >= -1.0);
        CHECK(f.phi <= 1.0);

        const RigidTransform t = random_rigid(500 + trial, 50.0);
        const PairFeatures r = pair_features(t.apply(p1), t.rotation * n1, t.apply(p2), t.rotation * n2);
        CHECK(std::abs(r.alpha - f.alpha) < 1e-9);
        CHECK(std::abs(r.phi - f.phi) < 1e-9);
        CHECK(std::abs(r.theta - f.theta) < 1e-9);

        // Random normals never tie on the anchoring angle, so both orders
        // select the same anchor.
        const PairFeatures s = pair_features(p2, n2, p1, n1);
        CHECK(std::abs(s.alpha - f.alpha) < 1e-12);
        CHECK(std::abs(s.phi - f.phi) < 1e-12);
        CHECK(std::abs(s.theta - f.theta) < 1e-12);
    }
}

TEST_CASE("pair_features: parallel normals anchor at the first point under any rigid motion") {
    Rng rng(12);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 p1(u(rng), u(rng), u(rng));
        const Vec3 p2(u(rng), u(rng), u(rng));
        const Vec3 n = random_unit_vector(rng);
        const PairFeatures f = pair_features(p1, n, p2, n);
        CHECK(f.phi == doctest::Approx(n.dot(p2 - p1) / (p2 - p1).norm()).epsilon(1e-12));
        const RigidTransform t = random_rigid(900 + trial, 50.0);
        const Vec3 rn = t.rotation * n;
        const PairFeatures r = pair_features(t.apply(p1), rn, t.apply(p2), rn);
        CHECK(std::abs(r.phi - f.phi) < 1e-9);
        CHECK(std::abs(r.alpha - f.alpha) < 1e-9);
        CHECK(std::abs(r.theta - f.theta) < 1e-9);
    }
}

TEST_CASE("voxel_downsample: examples and occupancy oracle") {
    PointCloud one({Vec3(0.1, 0.1, 0.1), Vec3(0.2, 0.3, 0.4), Vec3(4.9, 4.9, 4.9)});
    const PointCloud single = voxel_downsample(one, 5.0);
    REQUIRE(single.size() == 1);
    CHECK((single[0] - Vec3(5.2 / 3, 5.3 / 3, 5.4 / 3)).norm() < 1e-12);

    PointCloud grid;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int k = 0; k < 5; ++k) grid.points.emplace_back(10.0 * i + 1, 10.0 * j + 1, 10.0 * k + 1);
    CHECK(voxel_downsample(grid, 5.0).size() == grid.size());

    Rng rng(3);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int trial = 0; trial < 50; ++trial) {
        PointCloud c;
        const int n = 50 + trial * 10;
        for (int i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
        std::set<std::tuple<long long, long long, long long>> occupied;
        for (const auto &p : c.points) {
            occupied.emplace(static_cast<long long>(std::floor(p.x() / 5.0)), static_cast<long long>(std::floor(p.y() / 5.0)),
                             static_cast<long long>(std::floor(p.z() / 5.0)));
        }
        const PointCloud d = voxel_downsample(c, 5.0);
        CHECK(d.size() == occupied.size());
        CHECK(d.size() <= c.size());
        // Centroids stay inside their voxel, so a second pass merges nothing.
        CHECK(voxel_downsample(d, 5.0).size() == d.size());
    }
    CHECK_THROWS_AS(voxel_downsample(one, 0.0), Error);
}

TEST_CASE("compute_fpfh: uniform plane gives equal interior descriptors") {
    const double spacing = 1.0, radius = 2.5;
    const PointCloud plane = plane_grid(21, spacing);
    NormalOptions opts;
    opts.viewpoint = Vec3(10, 10, 50);
    const NormalEstimate normals = estimate_normals(plane, 8, opts);
    const FpfhResult r = compute_fpfh(plane, normals, radius);

    // Interior: two radii from the border so every neighbor is itself interior to the SPFH support.
    const FpfhDescriptor *ref = nullptr;
    int interior = 0;
    for (std::size_t i = 0; i < plane.size(); ++i) {
        const Vec3 &p = plane[i];
        if (p.x() < 2 * radius || p.y() < 2 * radius || p.x() > 20 - 2 * radius || p.y() > 20 - 2 * radius) continue;
        REQUIRE_FALSE(r.flagged[i]);
        ++interior;
        if (!ref) {
            ref = &r.descriptors[i];
            continue;
        }
        for (int b = 0; b < kFpfhSize; ++b) CHECK(std::abs(r.descriptors[i][b] - (*ref)[b]) < 1e-3);
    }
    CHECK(interior > 50);
    // All three angles are zero on a plane: a single spike per block at the middle bin.
    REQUIRE(ref);
    for (int block = 0; block < 3; ++block) CHECK((*ref)[block * kFpfhBinsPerFeature + 5] == doctest::Approx(100.0));
}

TEST_CASE("compute_fpfh: isolated point is zero and flagged") {
    PointCloud c = plane_grid(10, 1.0);
    c.points.emplace_back(500.0, 500.0, 500.0);
    NormalOptions opts;
    opts.viewpoint = Vec3(5, 5, 50);
    NormalEstimate normals = estimate_normals(c, 6, opts);
    // The isolated point borrows a plausible normal; it still has no neighbor in radius.
    normals.normals.back() = Vec3(0, 0, 1);
    normals.degenerate.back() = false;
    const FpfhResult r = compute_fpfh(c, normals, 3.0);
    CHECK(r.flagged.back());
    for (double v : r.descriptors.back()) CHECK(v == 0.0);
    CHECK_FALSE(r.flagged.front());
}

TEST_CASE("compute_fpfh: block normalization and rigid invariance on surface crops") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const PointCloud crop = liver_crop(seed);
        const FpfhFeatures base = extract_fpfh_features(crop);
        REQUIRE(base.cloud.size() > 20);
        for (std::size_t i = 0; i < base.fpfh.descriptors.size(); ++i) {
            const auto &d = base.fpfh.descriptors[i];
            for (double v : d) CHECK(v >= 0.0);
            if (base.fpfh.flagged[i]) {
                for (double v : d) CHECK(v == 0.0);
            } else {
                for (int block = 0; block < 3; ++block) CHECK(std::abs(block_sum(d, block) - 100.0) < 1e-6);
            }
        }

        // Rigid motion applied after downsampling: voxel grids are not rigidly invariant.
        const RigidTransform t = random_rigid(seed * 31, 20.0);
        const PointCloud moved = apply_rigid(base.cloud, t);
        const double r_n = 2.5 * 5.0, r_f = 5.0 * 5.0;
        const FpfhResult a = compute_fpfh(base.cloud, estimate_normals_radius(base.cloud, r_n), r_f);
        const FpfhResult b = compute_fpfh(moved, estimate_normals_radius(moved, r_n), r_f);
        double drift = 0.0;
        for (std::size_t i = 0; i < a.descriptors.size(); ++i)
            for (int k = 0; k < kFpfhSize; ++k) drift = std::max(drift, std::abs(a.descriptors[i][k] - b.descriptors[i][k]));
        CHECK(drift <= 1e-6);
    }
}

TEST_CASE("write_fpfh_csv: one row per point, 33 columns") {
    const PointCloud plane = plane_grid(6, 1.0);
    NormalOptions opts;
    opts.viewpoint = Vec3(0, 0, 10);
    const FpfhResult r = compute_fpfh(plane, estimate_normals(plane, 6, opts), 2.0);
    const auto path = std::filesystem::temp_directory_path() / "surfmatch_fpfh_test.csv";
    write_fpfh_csv(path, r);
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == kFpfhSize - 1);
    }
    CHECK(rows == plane.size());
    std::filesystem::remove(path);
    CHECK(descriptor_matrix(r).cols() == kFpfhSize);
}
