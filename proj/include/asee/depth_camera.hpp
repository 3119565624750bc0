#pragma once

// Synthetic depth cameras: pinhole ray casting against a SurfaceModel and
// back-projection of the resulting depth image to a camera-frame cloud.

#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "asee/geometry.hpp"
#include "asee/surfaces.hpp"

namespace asee {

/// Usable sensing range of the simulated short-range depth camera, meters.
inline constexpr double kMinDepth = 0.07;
inline constexpr double kMaxDepth = 0.50;

struct PinholeIntrinsics {
    double fx = 120.0;
    double fy = 120.0;
    double cx = 79.5;
    double cy = 59.5;
    int width = 160;
    int height = 120;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
        if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
            throw InvalidArgument("principal point outside the image");
    }

    Eigen::Vector2d project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }
};

struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<double> depth;  // row-major; NaN marks a missing return

    DepthImage() = default;
    DepthImage(int w, int h)
        : width(w), height(h), depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::quiet_NaN()) {}

    double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
    double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (double d : depth) n += std::isfinite(d) ? 1 : 0;
        return n;
    }
};

/// Renders camera-frame z of the nearest surface hit per pixel, with
/// zero-mean Gaussian noise of std `noise_sigma` added to valid depths.
inline DepthImage render_depth(const SurfaceModel& surface, const RigidTransform& camera_pose,
                               const PinholeIntrinsics& intr, double noise_sigma, std::uint64_t rng_seed) {
    intr.validate();
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");

    DepthImage img(intr.width, intr.height);
    // Cast in the shape's local frame; t equals camera-frame depth because the
    // camera-frame ray direction has unit z.
    const RigidTransform local_cam = surface.pose.inverse() * camera_pose;
    const Mat3 r = local_cam.rotation_matrix();
    const Vec3 o = local_cam.translation();
    const double tmax = kMaxDepth * (1.0 + 1e-9);

    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::visit(
        [&](const auto& shape) {
            for (int v = 0; v < intr.height; ++v) {
                for (int u = 0; u < intr.width; ++u) {
                    const Vec3 ray_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
                    const auto hit = detail::intersect_local(shape, o, r * ray_cam, 0.0, tmax);
                    if (!hit || hit->t < kMinDepth || hit->t > kMaxDepth) continue;
                    double d = hit->t;
                    if (noise_sigma > 0.0) d += noise_sigma * noise(rng);
                    if (d >= kMinDepth && d <= kMaxDepth) img.at(u, v) = d;
                }
            }
        },
        surface.shape);
    return img;
}

/// Back-projects valid pixels: (u, v, d) -> ((u - cx) d / fx, (v - cy) d / fy, d).
inline PointCloud depth_to_cloud(const DepthImage& img, const PinholeIntrinsics& intr) {
    PointCloud c;
    c.points.reserve(img.valid_count());
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const double d = img.at(u, v);
            if (!std::isfinite(d)) continue;
            c.points.emplace_back((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
        }
    }
    return c;
}

/// Seeds of the two rig cameras are decorrelated from one user seed.
inline std::uint64_t cam2_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

/// Renders both cameras. cam2_to_cam1 maps cam2-frame coordinates into the
/// cam1 frame, so the world pose of cam2 is cam1_pose ∘ cam2_to_cam1.
/// Returns (cam1-frame cloud, cam2-frame cloud).
inline std::pair<PointCloud, PointCloud> render_rig(const SurfaceModel& surface, const RigidTransform& cam1_pose,
                                                    const RigidTransform& cam2_to_cam1,
                                                    const PinholeIntrinsics& intr, double noise_sigma,
                                                    std::uint64_t seed) {
    const RigidTransform cam2_pose = cam1_pose * cam2_to_cam1;
    PointCloud c1 = depth_to_cloud(render_depth(surface, cam1_pose, intr, noise_sigma, seed), intr);
    PointCloud c2 = depth_to_cloud(render_depth(surface, cam2_pose, intr, noise_sigma, cam2_seed(seed)), intr);
    c1.frame_id = "cam1";
    c2.frame_id = "cam2";
    return {std::move(c1), std::move(c2)};
}

/// Mounting of the two side cameras relative to the probe tip frame
/// (z from the tip toward the patient). Each camera sits `lateral_offset`
/// to either side along probe x, `standoff` behind the tip, and is pitched
/// by `pitch` toward the probe axis.
struct RigGeometry {
    double lateral_offset = 0.06;
    double standoff = 0.15;
    double pitch = deg2rad(25.0);

    RigidTransform probe_from_cam1() const {
        return {Eigen::Quaterniond(Eigen::AngleAxisd(pitch, Vec3::UnitY())),
                Vec3(-lateral_offset, 0.0, -standoff)};
    }

    RigidTransform probe_from_cam2() const {
        return {Eigen::Quaterniond(Eigen::AngleAxisd(-pitch, Vec3::UnitY())),
                Vec3(lateral_offset, 0.0, -standoff)};
    }
};

} // namespace asee
