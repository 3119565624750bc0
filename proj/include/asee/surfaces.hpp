#pragma once

// Analytic and sampled surfaces used as simulated scenes: plane, sphere,
// heightfield and triangle mesh. Each shape is described in its own local
// frame and placed in the world by SurfaceModel::pose.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "asee/geometry.hpp"

namespace asee {

struct Plane {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();  // outward
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.1;
};

/// z = h(x, y) sampled on a regular lattice; row index runs along y,
/// column index along x. Outward normal points toward +z.
struct Heightfield {
    double cell_size = 0.005;
    double origin_x = 0.0;
    double origin_y = 0.0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> z;  // row-major, rows * cols
    // Cached (min, max) of z, set by finalize(); recomputed on demand otherwise.
    std::optional<std::pair<double, double>> bounds;

    void finalize() {
        bounds.reset();
        if (!z.empty()) bounds = z_range();
    }

    double at(std::size_t r, std::size_t c) const { return z[r * cols + c]; }
    double max_x() const { return origin_x + cell_size * static_cast<double>(cols - 1); }
    double max_y() const { return origin_y + cell_size * static_cast<double>(rows - 1); }

    bool contains(double x, double y) const {
        return rows >= 2 && cols >= 2 && x >= origin_x && y >= origin_y && x <= max_x() && y <= max_y();
    }

    /// Bilinear height; caller checks contains().
    double height(double x, double y) const {
        const double gx = (x - origin_x) / cell_size;
        const double gy = (y - origin_y) / cell_size;
        auto c0 = static_cast<std::size_t>(std::clamp(std::floor(gx), 0.0, static_cast<double>(cols - 2)));
        auto r0 = static_cast<std::size_t>(std::clamp(std::floor(gy), 0.0, static_cast<double>(rows - 2)));
        const double fx = gx - static_cast<double>(c0);
        const double fy = gy - static_cast<double>(r0);
        const double z00 = at(r0, c0), z01 = at(r0, c0 + 1);
        const double z10 = at(r0 + 1, c0), z11 = at(r0 + 1, c0 + 1);
        return (1 - fy) * ((1 - fx) * z00 + fx * z01) + fy * ((1 - fx) * z10 + fx * z11);
    }

    /// (dh/dx, dh/dy) of the bilinear patch containing (x, y).
    Eigen::Vector2d gradient(double x, double y) const {
        const double gx = (x - origin_x) / cell_size;
        const double gy = (y - origin_y) / cell_size;
        auto c0 = static_cast<std::size_t>(std::clamp(std::floor(gx), 0.0, static_cast<double>(cols - 2)));
        auto r0 = static_cast<std::size_t>(std::clamp(std::floor(gy), 0.0, static_cast<double>(rows - 2)));
        const double fx = gx - static_cast<double>(c0);
        const double fy = gy - static_cast<double>(r0);
        const double z00 = at(r0, c0), z01 = at(r0, c0 + 1);
        const double z10 = at(r0 + 1, c0), z11 = at(r0 + 1, c0 + 1);
        const double dx = ((1 - fy) * (z01 - z00) + fy * (z11 - z10)) / cell_size;
        const double dy = ((1 - fx) * (z10 - z00) + fx * (z11 - z01)) / cell_size;
        return {dx, dy};
    }

    Vec3 normal(double x, double y) const {
        const auto g = gradient(x, y);
        return Vec3(-g.x(), -g.y(), 1.0).normalized();
    }

    std::pair<double, double> z_range() const {
        if (bounds) return *bounds;
        const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
        return {*lo, *hi};
    }
};

/// Bounding-volume hierarchy over mesh triangles, built once per mesh.
class MeshBvh;

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::size_t, 3>> faces;  // counter-clockwise seen from outside
    std::shared_ptr<const MeshBvh> bvh;             // filled by finalize()

    Vec3 face_normal(std::size_t f) const {
        const auto& t = faces[f];
        return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
    }

    void finalize();
};

struct SurfaceHit {
    double t = 0.0;
    Vec3 normal = Vec3::UnitZ();
};

struct ClosestPoint {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();  // outward
    double signed_distance = 0.0; // > 0 outside (above) the surface
};

namespace detail {

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void grow(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void grow(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }

    /// Slab test; returns entry/exit parameters clipped to [t0, t1].
    bool clip(const Vec3& o, const Vec3& d, double& t0, double& t1) const {
        for (int a = 0; a < 3; ++a) {
            if (std::abs(d[a]) < 1e-300) {
                if (o[a] < lo[a] || o[a] > hi[a]) return false;
                continue;
            }
            const double inv = 1.0 / d[a];
            double ta = (lo[a] - o[a]) * inv;
            double tb = (hi[a] - o[a]) * inv;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) return false;
        }
        return true;
    }

    double distance2(const Vec3& p) const {
        const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
        return d.squaredNorm();
    }
};

// Möller–Trumbore.
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-18) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = o - a;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    return e2.dot(q) * inv;
}

// Closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

} // namespace detail

class MeshBvh {
public:
    explicit MeshBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
        order_.resize(mesh.faces.size());
        centroids_.resize(mesh.faces.size());
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            order_[f] = f;
            const auto& t = mesh.faces[f];
            centroids_[f] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        }
        if (!order_.empty()) build(0, order_.size());
    }

    std::optional<SurfaceHit> intersect(const TriangleMesh& mesh, const Vec3& o, const Vec3& d, double tmin,
                                        double tmax) const {
        if (nodes_.empty()) return std::nullopt;
        std::optional<SurfaceHit> best;
        double best_t = tmax;
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            const Node& n = nodes_[stack.back()];
            stack.pop_back();
            double t0 = tmin, t1 = best_t;
            if (!n.box.clip(o, d, t0, t1)) continue;
            if (n.count > 0) {
                for (std::size_t i = n.first; i < n.first + n.count; ++i) {
                    const auto& f = mesh.faces[order_[i]];
                    auto t = detail::ray_triangle(o, d, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
                    if (t && *t >= tmin && *t < best_t) {
                        best_t = *t;
                        best = SurfaceHit{*t, mesh.face_normal(order_[i])};
                    }
                }
            } else {
                stack.push_back(n.left);
                stack.push_back(n.left + 1);
            }
        }
        return best;
    }

    ClosestPoint closest(const TriangleMesh& mesh, const Vec3& p) const {
        ClosestPoint out;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_face = 0;
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            const Node& n = nodes_[stack.back()];
            stack.pop_back();
            if (n.box.distance2(p) > best) continue;
            if (n.count > 0) {
                for (std::size_t i = n.first; i < n.first + n.count; ++i) {
                    const auto& f = mesh.faces[order_[i]];
                    const Vec3 c = detail::closest_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                                               mesh.vertices[f[2]]);
                    const double d2 = (c - p).squaredNorm();
                    if (d2 < best) {
                        best = d2;
                        best_face = order_[i];
                        out.point = c;
                    }
                }
            } else {
                stack.push_back(n.left);
                stack.push_back(n.left + 1);
            }
        }
        out.normal = mesh.face_normal(best_face);
        const double dist = std::sqrt(best);
        out.signed_distance = (p - out.point).dot(out.normal) >= 0.0 ? dist : -dist;
        return out;
    }

private:
    struct Node {
        detail::Aabb box;
        std::size_t left = 0;   // children at left, left + 1
        std::size_t first = 0;  // leaf range in order_
        std::size_t count = 0;  // > 0 for leaves
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({});
        detail::Aabb box, cbox;
        for (std::size_t i = begin; i < end; ++i) {
            for (auto v : mesh_->faces[order_[i]]) box.grow(mesh_->vertices[v]);
            cbox.grow(centroids_[order_[i]]);
        }
        nodes_[id].box = box;
        if (end - begin <= 4) {
            nodes_[id].first = begin;
            nodes_[id].count = end - begin;
            return id;
        }
        int axis = 0;
        (cbox.hi - cbox.lo).maxCoeff(&axis);
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return centroids_[a][axis] < centroids_[b][axis]; });
        // Children are allocated adjacently so a node stores only the left index.
        const std::size_t left = nodes_.size();
        nodes_.push_back({});
        nodes_.push_back({});
        build_into(left, begin, mid);
        build_into(left + 1, mid, end);
        nodes_[id].left = left;
        return id;
    }

    void build_into(std::size_t slot, std::size_t begin, std::size_t end) {
        const std::size_t id = build(begin, end);
        nodes_[slot] = nodes_[id];
    }

    const TriangleMesh* mesh_;
    std::vector<std::size_t> order_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

inline void TriangleMesh::finalize() {
    for (const auto& f : faces)
        for (auto v : f)
            if (v >= vertices.size()) throw InvalidArgument("mesh face references missing vertex");
    bvh = std::make_shared<const MeshBvh>(*this);
}

using Shape = std::variant<Plane, Sphere, Heightfield, TriangleMesh>;

struct SurfaceModel {
    Shape shape;
    RigidTransform pose;  // local shape frame -> world

    void validate() const {
        if (const auto* s = std::get_if<Sphere>(&shape); s && !(s->radius > 0.0))
            throw InvalidArgument("sphere radius must be positive");
        if (const auto* h = std::get_if<Heightfield>(&shape)) {
            if (h->rows < 2 || h->cols < 2 || h->z.size() != h->rows * h->cols || !(h->cell_size > 0.0))
                throw InvalidArgument("heightfield grid must be rectangular with at least 2x2 samples");
        }
        if (const auto* m = std::get_if<TriangleMesh>(&shape)) {
            for (const auto& f : m->faces)
                for (auto v : f)
                    if (v >= m->vertices.size()) throw InvalidArgument("mesh face references missing vertex");
        }
    }
};

namespace detail {

inline std::optional<SurfaceHit> intersect_local(const Plane& s, const Vec3& o, const Vec3& d, double tmin,
                                                 double tmax) {
    const Vec3 n = s.normal.normalized();
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double t = n.dot(s.point - o) / denom;
    if (t < tmin || t > tmax) return std::nullopt;
    return SurfaceHit{t, n};
}

inline std::optional<SurfaceHit> intersect_local(const Sphere& s, const Vec3& o, const Vec3& d, double tmin,
                                                 double tmax) {
    const Vec3 oc = o - s.center;
    const double a = d.squaredNorm();
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / a, (-b + sq) / a}) {
        if (t >= tmin && t <= tmax) return SurfaceHit{t, (o + t * d - s.center).normalized()};
    }
    return std::nullopt;
}

inline std::optional<SurfaceHit> intersect_local(const Heightfield& h, const Vec3& o, const Vec3& d, double tmin,
                                                 double tmax) {
    const auto [zlo, zhi] = h.z_range();
    Aabb box;
    box.lo = Vec3(h.origin_x, h.origin_y, zlo);
    box.hi = Vec3(h.max_x(), h.max_y(), zhi);
    double t0 = tmin, t1 = tmax;
    if (!box.clip(o, d, t0, t1)) return std::nullopt;

    auto f = [&](double t) {
        const Vec3 p = o + t * d;
        const double x = std::clamp(p.x(), h.origin_x, h.max_x());
        const double y = std::clamp(p.y(), h.origin_y, h.max_y());
        return p.z() - h.height(x, y);
    };
    const double dxy = std::hypot(d.x(), d.y());
    const double step_t = dxy > 1e-12 ? (h.cell_size / 2.0) / dxy : (t1 - t0);
    double ta = t0;
    double fa = f(ta);
    if (fa <= 0.0) {
        // Entering below the surface (from the side or from underneath) is not a visible hit.
        return std::nullopt;
    }
    while (ta < t1) {
        const double tb = std::min(ta + step_t, t1);
        const double fb = f(tb);
        if (fb <= 0.0) {
            double lo = ta, hi = tb;
            const double ray_len = d.norm();
            while ((hi - lo) * ray_len > 1e-6) {
                const double mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) lo = mid;
                else hi = mid;
            }
            // Secant on the final bracket.
            const double flo = f(lo), fhi = f(hi);
            const double t = flo - fhi != 0.0 ? lo + (hi - lo) * flo / (flo - fhi) : hi;
            const Vec3 p = o + t * d;
            return SurfaceHit{t, h.normal(p.x(), p.y())};
        }
        ta = tb;
        fa = fb;
    }
    return std::nullopt;
}

inline std::optional<SurfaceHit> intersect_local(const TriangleMesh& m, const Vec3& o, const Vec3& d, double tmin,
                                                 double tmax) {
    if (m.bvh) return m.bvh->intersect(m, o, d, tmin, tmax);
    std::optional<SurfaceHit> best;
    double best_t = tmax;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& tri = m.faces[f];
        auto t = ray_triangle(o, d, m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]]);
        if (t && *t >= tmin && *t < best_t) {
            best_t = *t;
            best = SurfaceHit{*t, m.face_normal(f)};
        }
    }
    return best;
}

inline ClosestPoint closest_local(const Plane& s, const Vec3& p) {
    const Vec3 n = s.normal.normalized();
    const double sd = n.dot(p - s.point);
    return {p - sd * n, n, sd};
}

inline ClosestPoint closest_local(const Sphere& s, const Vec3& p) {
    Vec3 dir = p - s.center;
    const double r = dir.norm();
    dir = r > 0.0 ? Vec3(dir / r) : Vec3::UnitZ();
    return {s.center + s.radius * dir, dir, r - s.radius};
}

// Vertical projection; exact for flat patches, first-order elsewhere.
inline ClosestPoint closest_local(const Heightfield& h, const Vec3& p) {
    const double x = std::clamp(p.x(), h.origin_x, h.max_x());
    const double y = std::clamp(p.y(), h.origin_y, h.max_y());
    const double z = h.height(x, y);
    const Vec3 n = h.normal(x, y);
    return {Vec3(x, y, z), n, (p.z() - z) * n.z()};
}

inline ClosestPoint closest_local(const TriangleMesh& m, const Vec3& p) {
    if (m.bvh) return m.bvh->closest(m, p);
    ClosestPoint out;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_face = 0;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& t = m.faces[f];
        const Vec3 c = closest_on_triangle(p, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
        const double d2 = (c - p).squaredNorm();
        if (d2 < best) {
            best = d2;
            best_face = f;
            out.point = c;
        }
    }
    out.normal = m.face_normal(best_face);
    const double dist = std::sqrt(best);
    out.signed_distance = (p - out.point).dot(out.normal) >= 0.0 ? dist : -dist;
    return out;
}

} // namespace detail

/// Nearest ray hit with t in [tmin, tmax]; origin and direction in world.
/// The direction need not be unit length; t is in units of |d|.
inline std::optional<SurfaceHit> intersect(const SurfaceModel& s, const Vec3& origin, const Vec3& dir, double tmin,
                                           double tmax) {
    const RigidTransform inv = s.pose.inverse();
    const Vec3 o = inv.apply(origin);
    const Vec3 d = inv.rotate(dir);
    auto hit = std::visit([&](const auto& shape) { return detail::intersect_local(shape, o, d, tmin, tmax); },
                          s.shape);
    if (hit) hit->normal = s.pose.rotate(hit->normal);
    return hit;
}

/// Closest surface point to p (world), with outward normal and signed distance.
inline ClosestPoint closest_point(const SurfaceModel& s, const Vec3& p) {
    const Vec3 local = s.pose.inverse().apply(p);
    ClosestPoint c = std::visit([&](const auto& shape) { return detail::closest_local(shape, local); }, s.shape);
    c.point = s.pose.apply(c.point);
    c.normal = s.pose.rotate(c.normal);
    return c;
}

} // namespace asee
