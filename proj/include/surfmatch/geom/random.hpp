#pragma once

#include <cstdint>
#include <random>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent sub-seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Vec3 random_unit_vector(Rng &rng);

/// Uniform sample inside the ball of radius `radius`.
Vec3 random_in_ball(Rng &rng, double radius);

/// Uniform over SO(3): normalized quaternion of four standard normals.
Mat3 random_rotation(Rng &rng);

/// Uniform rotation plus translation uniform in the ball of radius
/// `max_translation_mm`. Deterministic in `rng_seed`.
RigidTransform random_rigid(std::uint64_t rng_seed, double max_translation_mm);

}  // namespace surfmatch
