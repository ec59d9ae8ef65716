#pragma once

#include <cstdint>
#include <vector>

#include "surfmatch/geom/types.hpp"
#include "surfmatch/synth/mesh.hpp"

namespace surfmatch {

/// Procedural stand-in for a hyperelastic finite-element solve. The material
/// constants are carried as metadata only.
struct DeformationParams {
    int n_force_sites = 2;                  // 1..3
    double force_region_radius_mm = 80.0;   // support of each displacement bump
    int n_boundary_regions = 1;
    double boundary_radius_mm = 17.5;       // zero-displacement patches, [15, 20]
    double boundary_ramp_mm = 45.0;         // blend from fixed patch to free surface
    double max_displacement_target_mm = 10.0;

    double youngs_modulus_kpa = 3.5;
    double poisson_ratio = 0.35;
    double max_force_n = 3.0;

    void validate() const;
};

/// Draws the per-sample randomized parameters: 1-3 force sites, boundary
/// radius in [15, 20] mm, max displacement in [7, 15] mm, Young's modulus in
/// [2, 5] kPa.
DeformationParams sample_deformation_params(std::uint64_t rng_seed);

struct DeformationField {
    std::vector<Vec3> displacement;

    double max_magnitude() const;
    double mean_magnitude() const;

    /// Largest |u(a) - u(b)| / |a - b| over mesh edges.
    double max_edge_gradient(const SurfaceMesh &mesh) const;

    static DeformationField zeros(std::size_t n) { return {std::vector<Vec3>(n, Vec3::Zero())}; }
};

/// Largest allowed displacement change per millimeter of edge length.
inline constexpr double kMaxEdgeGradient = 0.5;

/// Sum of compactly supported bumps at the force sites, attenuated to exactly
/// zero inside the boundary regions and rescaled so the largest displacement
/// equals params.max_displacement_target_mm. The support grows until the edge
/// gradient bound holds; boundary and force sites are redrawn (up to eight
/// layouts) when it never does.
DeformationField simulate_deformation(const SurfaceMesh &mesh, const DeformationParams &params,
                                      std::uint64_t rng_seed);

/// Wendland C2 kernel, (1-r)^4 (4r+1) on [0, 1].
double wendland(double r);

}  // namespace surfmatch
