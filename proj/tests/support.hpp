#pragma once

#include <random>

#include "asee/geometry.hpp"

namespace asee::test {

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Vec3(g(rng), g(rng), g(rng)) * scale;
}

inline Vec3 random_unit(std::mt19937_64& rng) { return random_vec(rng).normalized(); }

inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
}

inline RigidTransform random_transform(std::mt19937_64& rng, double scale = 1.0) {
    return {random_rotation(rng), random_vec(rng, scale)};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Rotation angle between two orientations, radians.
inline double rotation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
    return Eigen::AngleAxisd(a.conjugate() * b).angle();
}

} // namespace asee::test
