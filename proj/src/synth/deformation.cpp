#include "surfmatch/synth/deformation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"

namespace surfmatch {
namespace {

double smoothstep(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return x * x * (3.0 - 2.0 * x);
}

struct ForceSite {
    Vec3 center;
    Vec3 direction;
    double weight;
};

}  // namespace

double wendland(double r) {
    if (r >= 1.0) return 0.0;
    const double a = 1.0 - r;
    return a * a * a * a * (4.0 * r + 1.0);
}

void DeformationParams::validate() const {
    if (n_force_sites < 1 || n_force_sites > 3) {
        throw Error(ErrorCode::kInvalidArgument, "n_force_sites must be in 1..3");
    }
    if (n_boundary_regions < 0) throw Error(ErrorCode::kInvalidArgument, "n_boundary_regions must be >= 0");
    if (!(force_region_radius_mm > 0.0) || !(boundary_ramp_mm > 0.0) || !(boundary_radius_mm >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "deformation radii must be positive");
    }
    if (!(max_displacement_target_mm >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "max_displacement_target_mm must be >= 0");
    }
}

DeformationParams sample_deformation_params(std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DeformationParams p;
    p.n_force_sites = 1 + static_cast<int>(rng() % 3);
    p.n_boundary_regions = 1 + static_cast<int>(rng() % 2);
    p.boundary_radius_mm = 15.0 + 5.0 * u(rng);
    p.max_displacement_target_mm = 7.0 + 8.0 * u(rng);
    p.youngs_modulus_kpa = 2.0 + 3.0 * u(rng);
    p.force_region_radius_mm = 70.0 + 30.0 * u(rng);
    return p;
}

double DeformationField::max_magnitude() const {
    double m = 0.0;
    for (const auto &d : displacement) m = std::max(m, d.norm());
    return m;
}

double DeformationField::mean_magnitude() const {
    if (displacement.empty()) return 0.0;
    double s = 0.0;
    for (const auto &d : displacement) s += d.norm();
    return s / static_cast<double>(displacement.size());
}

double DeformationField::max_edge_gradient(const SurfaceMesh &mesh) const {
    double worst = 0.0;
    for (const auto &[a, b] : mesh.edges()) {
        const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
        if (len <= 0.0) continue;
        worst = std::max(worst, (displacement[a] - displacement[b]).norm() / len);
    }
    return worst;
}

DeformationField simulate_deformation(const SurfaceMesh &mesh, const DeformationParams &params,
                                      std::uint64_t rng_seed) {
    params.validate();
    mesh.validate();
    const std::size_t n = mesh.vertex_count();
    if (params.max_displacement_target_mm == 0.0) return DeformationField::zeros(n);

    Rng rng(rng_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto normals = mesh.vertex_normals();

    // A layout whose field stays too steep at every support is redrawn.
    for (int layout = 0; layout < 8; ++layout) {
        std::vector<Vec3> boundary_centers;
        for (int b = 0; b < params.n_boundary_regions; ++b) {
            boundary_centers.push_back(mesh.vertices[rng() % n]);
        }
        const auto inside_boundary = [&](const Vec3 &p) {
            return std::any_of(boundary_centers.begin(), boundary_centers.end(), [&](const Vec3 &c) {
                return (p - c).norm() <= params.boundary_radius_mm;
            });
        };

        std::vector<int> free_vertices;
        for (std::size_t i = 0; i < n; ++i) {
            if (!inside_boundary(mesh.vertices[i])) free_vertices.push_back(static_cast<int>(i));
        }
        if (free_vertices.empty()) {
            throw Error(ErrorCode::kDegenerateGeometry,
                        "boundary regions cover every vertex; no force site can be placed");
        }

        std::vector<ForceSite> sites;
        for (int s = 0; s < params.n_force_sites; ++s) {
            const int v = free_vertices[rng() % free_vertices.size()];
            // Mostly pushes into the surface, with a random shear component.
            const Vec3 dir = (-normals[v] + 0.7 * u(rng) * random_unit_vector(rng)).normalized();
            const double force = params.max_force_n * (0.3 + 0.7 * u(rng));
            sites.push_back({mesh.vertices[v], dir, force / params.max_force_n});
        }

        double support = params.force_region_radius_mm;
        double ramp = params.boundary_ramp_mm;
        for (int attempt = 0; attempt < 40; ++attempt) {
            DeformationField field = DeformationField::zeros(n);
            for (std::size_t i = 0; i < n; ++i) {
                const Vec3 &p = mesh.vertices[i];
                double attenuation = 1.0;
                for (const auto &c : boundary_centers) {
                    attenuation *= smoothstep(((p - c).norm() - params.boundary_radius_mm) / ramp);
                }
                if (attenuation == 0.0) continue;
                Vec3 d = Vec3::Zero();
                for (const auto &s : sites) d += s.weight * wendland((p - s.center).norm() / support) * s.direction;
                field.displacement[i] = attenuation * d;
            }
            const double peak = field.max_magnitude();
            if (peak > 0.0) {
                const double scale = params.max_displacement_target_mm / peak;
                for (auto &d : field.displacement) d *= scale;
                if (field.max_edge_gradient(mesh) <= kMaxEdgeGradient) return field;
            }
            // Too steep (or the sites vanished under the boundary blend): widen.
            support *= 1.2;
            ramp *= 1.2;
        }
    }
    throw Error(ErrorCode::kDegenerateGeometry,
                "could not build a deformation field within the smoothness bound");
}

}  // namespace surfmatch
