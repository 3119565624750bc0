#pragma once

// Procedural stand-ins for the physical phantoms: an upper-torso
// heightfield and a breast-phantom dome mesh.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "asee/surfaces.hpp"

namespace asee::phantoms {

/// Elliptic torso cross-section across y, gently arched along x:
/// z = depth * sqrt(1 - (y / half_width)^2) + arch * cos(pi x / length).
struct TorsoParams {
    double length = 0.36;      // extent along x, m
    double half_width = 0.17;  // m
    double depth = 0.12;       // m
    double arch = 0.015;       // m
    double cell_size = 0.004;  // m
    double edge_fraction = 0.97;
};

inline double torso_height(const TorsoParams& p, double x, double y) {
    const double u = std::min(std::abs(y) / p.half_width, p.edge_fraction);
    return p.depth * std::sqrt(1.0 - u * u) + p.arch * std::cos(kPi * x / p.length);
}

inline Heightfield torso(const TorsoParams& p = {}) {
    Heightfield h;
    h.cell_size = p.cell_size;
    h.origin_x = -0.5 * p.length;
    h.origin_y = -p.half_width;
    h.cols = static_cast<std::size_t>(std::round(p.length / p.cell_size)) + 1;
    h.rows = static_cast<std::size_t>(std::round(2.0 * p.half_width / p.cell_size)) + 1;
    h.z.resize(h.rows * h.cols);
    for (std::size_t r = 0; r < h.rows; ++r)
        for (std::size_t c = 0; c < h.cols; ++c)
            h.z[r * h.cols + c] = torso_height(p, h.origin_x + c * p.cell_size, h.origin_y + r * p.cell_size);
    h.finalize();
    return h;
}

/// Half-ellipsoid dome of radius `radius` and height `height` on a square
/// base plate of side `plate`, triangulated on a regular grid.
struct DomeParams {
    double radius = 0.07;
    double height = 0.05;
    double plate = 0.24;
    std::size_t cells = 120;
};

inline double dome_height(const DomeParams& p, double x, double y) {
    const double r2 = (x * x + y * y) / (p.radius * p.radius);
    return r2 < 1.0 ? p.height * std::sqrt(1.0 - r2) : 0.0;
}

inline TriangleMesh dome(const DomeParams& p = {}) {
    TriangleMesh m;
    const std::size_t n = p.cells;
    const double step = p.plate / static_cast<double>(n);
    for (std::size_t j = 0; j <= n; ++j) {
        for (std::size_t i = 0; i <= n; ++i) {
            const double x = -0.5 * p.plate + i * step;
            const double y = -0.5 * p.plate + j * step;
            m.vertices.emplace_back(x, y, dome_height(p, x, y));
        }
    }
    auto id = [n](std::size_t i, std::size_t j) { return j * (n + 1) + i; };
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    m.finalize();
    return m;
}

/// Area-weighted uniform samples on a mesh (local frame).
inline std::vector<Vec3> sample_mesh(const TriangleMesh& m, std::size_t count, std::uint64_t seed) {
    std::vector<double> cdf;
    cdf.reserve(m.faces.size());
    double total = 0.0;
    for (const auto& f : m.faces) {
        total += 0.5 * (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]).norm();
        cdf.push_back(total);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double pick = u01(rng) * total;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), pick);
        const auto& f = m.faces[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), m.faces.size() - 1)];
        double a = u01(rng), b = u01(rng);
        if (a + b > 1.0) {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        out.push_back(m.vertices[f[0]] + a * (m.vertices[f[1]] - m.vertices[f[0]]) +
                      b * (m.vertices[f[2]] - m.vertices[f[0]]));
    }
    return out;
}

} // namespace asee::phantoms
