#include "surfmatch/geom/random.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "surfmatch/error.hpp"

namespace surfmatch {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Vec3 random_unit_vector(Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Vec3 v(normal(rng), normal(rng), normal(rng));
        const double len = v.norm();
        if (len > 1e-12) return v / len;
    }
}

Vec3 random_in_ball(Rng &rng, double radius) {
    if (radius <= 0.0) return Vec3::Zero();
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const Vec3 dir = random_unit_vector(rng);
    return dir * (radius * std::cbrt(uniform(rng)));
}

Mat3 random_rotation(Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        const double len = q.norm();
        if (len > 1e-12) {
            q.coeffs() /= len;
            return q.toRotationMatrix();
        }
    }
}

RigidTransform random_rigid(std::uint64_t rng_seed, double max_translation_mm) {
    if (!(max_translation_mm >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "max_translation_mm must be >= 0");
    }
    Rng rng(rng_seed);
    RigidTransform t;
    t.rotation = random_rotation(rng);
    t.translation = random_in_ball(rng, max_translation_mm);
    return t;
}

}  // namespace surfmatch
