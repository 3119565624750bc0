#pragma once

// Built-in scenarios reproducing the bench experiments, plus the helpers
// that evaluate them against analytic ground truth.

#include <string>
#include <vector>

#include "asee/metrics.hpp"
#include "asee/phantoms.hpp"
#include "asee/sim.hpp"

namespace asee::scenarios {

inline constexpr double kContactDepth = 0.007;  // 3.5 N at 500 N/m

/// Plane facing the probe, `offset` metres beyond the tip along the probe
/// axis (positive: tip penetrates by `offset`), in the initial tip frame.
inline SurfaceModel plane_under_tip(double offset) {
    SurfaceModel s;
    s.shape = Plane{Vec3::Zero(), Vec3::UnitZ()};
    s.pose = RigidTransform::from_translation(Vec3(0.0, 0.0, -offset)) *
             RigidTransform::from_rotation(Eigen::AngleAxisd(kPi, Vec3::UnitX()));
    return s;
}

/// Probe in contact with a flat plane at the target force, aligned.
inline ScenarioConfig equilibrium(double noise_sigma = 0.0) {
    ScenarioConfig c;
    c.name = "equilibrium";
    c.surface = plane_under_tip(kContactDepth);
    c.anchor_to_initial_tip = true;
    c.rig.noise_sigma = noise_sigma;
    c.duration = 100.0 / 30.0;
    return c;
}

/// Flat-plane tracking: the plane is re-tilted in four phases (each change
/// between 10 and 20 degrees), repeated, while the probe holds contact.
inline ScenarioConfig flat_tracking(double noise_sigma = 0.0005, std::size_t repeats = 4, double phase = 3.5) {
    ScenarioConfig c = equilibrium(noise_sigma);
    c.name = "flat_tracking";
    const std::vector<std::pair<Vec3, double>> phases = {
        {Vec3::UnitX(), deg2rad(12.0)},
        {Vec3::UnitY(), deg2rad(15.0)},
        {Vec3::UnitX(), deg2rad(-10.0)},
        {Vec3::UnitY(), deg2rad(-15.0)},
    };
    for (std::size_t r = 0; r < repeats; ++r)
        for (std::size_t i = 0; i < phases.size(); ++i)
            c.tilt_schedule.push_back(
                {phase * static_cast<double>(r * phases.size() + i) + 1.0, phases[i].first, phases[i].second});
    c.duration = phase * static_cast<double>(repeats * phases.size()) + 1.0;
    return c;
}

/// Single tilt step of `angle_deg` about probe x at time `at`.
inline ScenarioConfig tilt_step(double angle_deg = 10.0, double at = 2.0, double duration = 7.0,
                                double noise_sigma = 0.0005) {
    ScenarioConfig c = equilibrium(noise_sigma);
    c.name = "tilt_step";
    c.tilt_schedule.push_back({at, Vec3::UnitX(), deg2rad(angle_deg)});
    c.duration = duration;
    return c;
}

/// Autonomous landing onto a flat phantom from 25 cm (camera lens to surface).
inline ScenarioConfig landing(double noise_sigma = 0.0005) {
    ScenarioConfig c;
    c.name = "landing";
    c.surface = plane_under_tip(-(0.25 - c.rig.geometry.standoff));
    c.anchor_to_initial_tip = true;
    c.rig.noise_sigma = noise_sigma;
    c.duration = 15.0;
    return c;
}

/// Curved phantom: sphere of `radius` touching the probe at the target force.
inline ScenarioConfig slide(double radius = 0.25, double speed = 0.01, double traverse = 0.10,
                            double noise_sigma = 0.0005) {
    ScenarioConfig c;
    c.name = "slide";
    c.surface.shape = Sphere{Vec3(0.0, 0.0, radius - kContactDepth), radius};
    c.anchor_to_initial_tip = true;
    c.rig.noise_sigma = noise_sigma;
    c.mode = Mode::Teleop;
    c.duration = 1.0 + traverse / speed + 1.0;
    c.teleop_script.push_back({1.0, 1.0 + traverse / speed, {speed, 0.0, 0.0}});
    return c;
}

/// Probe hovering `clearance` above the top of the dome phantom.
inline ScenarioConfig dome_capture(double clearance = 0.02, double noise_sigma = 0.0005) {
    ScenarioConfig c;
    c.name = "dome_capture";
    const phantoms::DomeParams dp;
    c.surface.shape = phantoms::dome(dp);
    c.surface.pose = RigidTransform::from_translation(Vec3(0.0, 0.0, dp.height + clearance)) *
                     RigidTransform::from_rotation(Eigen::AngleAxisd(kPi, Vec3::UnitX()));
    c.anchor_to_initial_tip = true;
    c.rig.noise_sigma = noise_sigma;
    c.mode = Mode::Teleop;
    c.force_control = false;
    c.duration = 10.0 / 30.0;
    return c;
}

// ---- torso normal estimation -------------------------------------------------

struct TorsoTarget {
    double x = 0.0;
    double y = 0.0;
};

inline std::vector<TorsoTarget> torso_targets() {
    std::vector<TorsoTarget> t;
    for (double y : {0.02, 0.07, 0.12})
        for (double x : {-0.09, -0.03, 0.03, 0.09}) t.push_back({x, y});
    return t;
}

/// Mean outward normal over a disk of `radius` around (x, y), by the
/// analytic gradient sampled on a polar grid.
inline Vec3 disk_mean_normal(const Heightfield& h, double x, double y, double radius) {
    Vec3 sum = h.normal(x, y);
    for (int ring = 1; ring <= 6; ++ring) {
        const double r = radius * ring / 6.0;
        const int n = 8 * ring;
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * kPi * k / n;
            sum += h.normal(x + r * std::cos(a), y + r * std::sin(a));
        }
    }
    return sum.normalized();
}

struct TargetResult {
    TorsoTarget target;
    Vec3 estimated;     // world frame, outward
    Vec3 ground_truth;  // world frame, outward
    double error_deg = 0.0;
};

struct TorsoConfig {
    double standoff = 0.03;         // tip clearance along the ground-truth normal
    double misalignment_deg = 8.0;  // probe axis tilt away from the normal
    double noise_sigma = 0.001;
    double disk_radius = 0.03;
    std::size_t frames = 7;
    std::uint64_t seed = 7;
    PipelineConfig pipeline;
    RigConfig rig;
};

/// Places the probe over each target (no arm) and estimates the surface
/// normal from `frames` consecutive captures through the moving average.
inline std::vector<TargetResult> torso_normal_estimation(const TorsoConfig& cfg = {}) {
    SurfaceModel surface;
    const Heightfield h = phantoms::torso();
    surface.shape = h;
    RigConfig rig = cfg.rig;
    rig.noise_sigma = cfg.noise_sigma;
    const RigExtrinsics ext{rig.fusion_extrinsic(), rig.geometry.probe_from_cam1()};

    std::vector<TargetResult> out;
    std::uint64_t stream = cfg.seed;
    for (const auto& tgt : torso_targets()) {
        const Vec3 n = disk_mean_normal(h, tgt.x, tgt.y, cfg.disk_radius);
        const Vec3 p(tgt.x, tgt.y, h.height(tgt.x, tgt.y));
        // Probe axis points into the surface, tilted about a direction
        // orthogonal to the normal.
        const Vec3 side = n.cross(Vec3::UnitX()).normalized();
        const Vec3 axis = Eigen::AngleAxisd(deg2rad(cfg.misalignment_deg), side) * Vec3(-n);
        const Vec3 x_dir = side.cross(axis).normalized();
        Mat3 r;
        r.col(0) = x_dir;
        r.col(1) = axis.cross(x_dir);
        r.col(2) = axis;
        const RigidTransform probe(r, p - cfg.standoff * axis);
        const RigidTransform cam1 = probe * ext.cam1_to_probe;

        MovingAverageFilter filter(cfg.pipeline.ma_window);
        NormalEstimate est;
        for (std::size_t f = 0; f < cfg.frames; ++f) {
            stream = splitmix64(stream);
            auto [c1, c2] = render_rig(surface, cam1, rig.true_extrinsic(), rig.intrinsics, rig.noise_sigma, stream);
            PipelineConfig pc = cfg.pipeline;
            pc.seed = stream;
            const PointCloud processed = process_clouds(c1, c2, pc, ext, /*region_only=*/true);
            est = filter.smooth(region_normal(processed, pc.region_x, pc.region_y, ext.cam1_to_probe, double(f)));
        }
        // Estimate is in the probe frame pointing along +z (into the body);
        // the outward world normal is its negation.
        const Vec3 world = -probe.rotate(est.normal);
        out.push_back({tgt, world, n, angle_between(world, n)});
    }
    return out;
}

// ---- reconstruction ground truth --------------------------------------------

/// Mesh samples (world frame) that the rig at `cam1_pose` can observe:
/// inside the image, within depth and crop limits, not occluded, and
/// outside the probe exclusion box.
inline std::vector<Vec3> visible_samples(const SurfaceModel& surface, const std::vector<Vec3>& world_samples,
                                         const RigidTransform& cam1_pose, const RigConfig& rig,
                                         const PipelineConfig& pc) {
    const RigidTransform cam2_pose = cam1_pose * rig.true_extrinsic();
    const RigidTransform world_to_probe = (cam1_pose * rig.geometry.probe_from_cam1().inverse()).inverse();
    auto seen_by = [&](const RigidTransform& cam, const Vec3& w) {
        const Vec3 p = cam.inverse().apply(w);
        if (!(p.z() >= std::max(kMinDepth, pc.z_min) && p.z() <= std::min(kMaxDepth, pc.z_max))) return false;
        const Eigen::Vector2d uv = rig.intrinsics.project(p);
        if (uv.x() < -0.5 || uv.y() < -0.5 || uv.x() > rig.intrinsics.width - 0.5 ||
            uv.y() > rig.intrinsics.height - 0.5)
            return false;
        const Vec3 dir = cam.rotate(p / p.z());
        const auto hit = intersect(surface, cam.translation(), dir, 0.0, kMaxDepth);
        return hit && hit->t > p.z() - 1e-4;
    };
    std::vector<Vec3> out;
    for (const auto& w : world_samples) {
        if (pc.probe_box.contains(world_to_probe.apply(w))) continue;
        if (seen_by(cam1_pose, w) || seen_by(cam2_pose, w)) out.push_back(w);
    }
    return out;
}

struct ReconstructionResult {
    double chamfer = 0.0;  // m
    std::size_t cloud_points = 0;
    std::size_t reference_points = 0;
};

/// Runs the dome capture and compares the processed fused cloud with
/// visible ground-truth samples after fiducial registration.
inline ReconstructionResult dome_reconstruction(double extrinsic_error_deg = 0.0, double noise_sigma = 0.0005,
                                                std::size_t samples = 60000) {
    ScenarioConfig c = dome_capture(0.02, noise_sigma);
    c.rig.extrinsic_error = deg2rad(extrinsic_error_deg);
    const RunResult run = run_scenario(c);
    Simulator probe_sim(c);  // for the anchored surface and initial pose
    const SurfaceModel& surface = probe_sim.config().surface;
    const auto& mesh = std::get<TriangleMesh>(surface.shape);

    // Fiducials on the plate corners, as measured in the mesh frame and in
    // the world; registration maps mesh samples into the world frame.
    const phantoms::DomeParams dp;
    const double e = 0.45 * dp.plate;
    const std::vector<Vec3> fid_mesh = {Vec3(-e, -e, 0), Vec3(e, -e, 0), Vec3(e, e, 0), Vec3(-e, e, 0),
                                        Vec3(0, 0, dp.height)};
    std::vector<Vec3> fid_world;
    for (const auto& f : fid_mesh) fid_world.push_back(surface.pose.apply(f));
    const Registration reg = register_fiducials(fid_mesh, fid_world);

    std::vector<Vec3> world;
    for (const auto& s : phantoms::sample_mesh(mesh, samples, 11)) world.push_back(reg.transform.apply(s));
    // Visibility from the final pose, matching the final cloud.
    const RigidTransform final_cam1 =
        forward_kinematics(c.chain, run.records.back().q) * c.rig.geometry.probe_from_cam1();
    const auto reference = visible_samples(surface, world, final_cam1, c.rig, c.pipeline);

    ReconstructionResult r;
    r.cloud_points = run.final_cloud.size();
    r.reference_points = reference.size();
    r.chamfer = chamfer_distance(run.final_cloud.points, reference);
    return r;
}

} // namespace asee::scenarios
