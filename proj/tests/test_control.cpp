#include <gtest/gtest.h>

#include <array>

#include "asee/controllers.hpp"
#include "support.hpp"

using namespace asee;

namespace {

Vec3 tilted_normal(double ax_deg, double ay_deg) {
    return Vec3(std::sin(deg2rad(ay_deg)), -std::sin(deg2rad(ax_deg)), 1.0).normalized();
}

} // namespace

TEST(Orientation, AlignedGivesZero) {
    OrientationPDConfig cfg;
    ControllerState s;
    const auto [wx, wy] = orientation_step(cfg, s, Vec3::UnitZ());
    EXPECT_EQ(wx, 0.0);
    EXPECT_EQ(wy, 0.0);
}

TEST(Orientation, FirstStepIsProportionalOnly) {
    OrientationPDConfig cfg;
    ControllerState s;
    const Vec3 n(std::sin(0.1), 0.0, std::cos(0.1));
    const auto [wx, wy] = orientation_step(cfg, s, n);
    EXPECT_NEAR(wx, 0.0, 1e-15);
    EXPECT_NEAR(wy, 1.5 * std::sin(0.1), 1e-12);
    EXPECT_NEAR(wy, 0.14975, 1e-5);
}

TEST(Orientation, DerivativeUsesPreviousError) {
    OrientationPDConfig cfg;
    ControllerState s;
    orientation_step(cfg, s, Vec3::UnitZ());
    const Vec3 n(0.0, -std::sin(0.05), std::cos(0.05));
    const auto [wx, wy] = orientation_step(cfg, s, n);
    const double ex = std::sin(0.05);
    EXPECT_NEAR(wx, 1.5 * ex + 0.05 * ex * 30.0, 1e-12);
    EXPECT_NEAR(wy, 0.0, 1e-15);
}

TEST(Orientation, RejectsNonUnitNormal) {
    OrientationPDConfig cfg;
    ControllerState s;
    EXPECT_THROW(orientation_step(cfg, s, Vec3(0, 0, 2)), InvalidArgument);
}

TEST(Orientation, ConstantErrorConvergesToProportional) {
    OrientationPDConfig cfg;
    ControllerState s;
    const Vec3 n = tilted_normal(5, -3);
    std::pair<double, double> w;
    for (int i = 0; i < 5; ++i) w = orientation_step(cfg, s, n);
    EXPECT_NEAR(w.first, 1.5 * -n.y(), 1e-12);
    EXPECT_NEAR(w.second, 1.5 * n.x(), 1e-12);
}

TEST(Orientation, ClosedLoopRotationReducesTilt) {
    // Integrating the commanded body rate about the probe axes drives the
    // estimated normal toward +z.
    OrientationPDConfig cfg;
    ControllerState s;
    Mat3 r = Eigen::AngleAxisd(deg2rad(10), Vec3(1, 1, 0).normalized()).toRotationMatrix();
    const Vec3 n_world = Vec3::UnitZ();
    double prev = 180.0;
    for (int i = 0; i < 300; ++i) {
        const Vec3 n_probe = r.transpose() * n_world;
        const double err = angle_between(n_probe, Vec3::UnitZ());
        if (i % 30 == 0) {
            EXPECT_LT(err, prev + 1e-9);
            prev = err;
        }
        const auto [wx, wy] = orientation_step(cfg, s, n_probe);
        const Vec3 w(wx, wy, 0.0);
        if (w.norm() > 0) r = r * Eigen::AngleAxisd(w.norm() * cfg.dt, w.normalized()).toRotationMatrix();
    }
    EXPECT_LT(angle_between(r.transpose() * n_world, Vec3::UnitZ()), 0.01);
}

TEST(ForceStep, LandingExample) {
    ForceControlConfig cfg;
    ControllerState s;
    const std::array<double, 3> d{0.30, 0.25, 0.40};
    const double v = force_step(cfg, s, d, 0.0);
    EXPECT_EQ(s.stage, Stage::Landing);
    EXPECT_NEAR(v, 0.5 * 0.8 * (0.25 - 0.15), 1e-15);
    EXPECT_NEAR(v, 0.04, 1e-15);
}

TEST(ForceStep, ScanningExample) {
    ForceControlConfig cfg;
    ControllerState s;
    s.stage = Stage::Scanning;
    s.prev_vz = 0.002;
    const double v = force_step(cfg, s, std::span<const double>{}, 4.5);
    EXPECT_NEAR(v, 0.5 * 0.004 * (3.5 - 4.5) + 0.5 * 0.002, 1e-15);
    EXPECT_NEAR(v, -0.001, 1e-15);
}

TEST(ForceStep, Errors) {
    ForceControlConfig cfg;
    ControllerState s;
    EXPECT_THROW(force_step(cfg, s, std::span<const double>{}, 0.0), NoDepth);
    const std::array<double, 1> d{0.3};
    EXPECT_THROW(force_step(cfg, s, d, -0.1), InvalidArgument);
    ForceControlConfig bad;
    bad.w = 1.0;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(ForceStep, StageLatchesUntilReset) {
    ForceControlConfig cfg;
    ControllerState s;
    const std::array<double, 1> near{0.10}, far{0.50};
    force_step(cfg, s, near, 0.0);
    EXPECT_EQ(s.stage, Stage::Scanning);
    force_step(cfg, s, far, 0.0);
    EXPECT_EQ(s.stage, Stage::Scanning);
    s.reset_stage();
    EXPECT_EQ(s.stage, Stage::Landing);
    EXPECT_EQ(s.prev_vz, 0.0);
    force_step(cfg, s, far, 0.0);
    EXPECT_EQ(s.stage, Stage::Landing);
}

TEST(ForceStep, ThresholdIsStrict) {
    ForceControlConfig cfg;
    ControllerState s;
    const std::array<double, 1> at{0.150};
    EXPECT_EQ(stage_update(cfg, s, at), Stage::Landing);
}

TEST(ForceStep, SmoothingConvergesGeometrically) {
    ForceControlConfig cfg;
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        ControllerState s;
        s.stage = Stage::Scanning;
        s.prev_vz = asee::test::uniform(rng, -0.05, 0.05);
        const double f = asee::test::uniform(rng, 0.0, 8.0);
        const double target = cfg.kp_force * (cfg.f_desired - f);
        double gap = std::abs(s.prev_vz - target);
        for (int i = 0; i < 40; ++i) {
            const double v = force_step(cfg, s, std::span<const double>{}, f);
            const double g = std::abs(v - target);
            EXPECT_LE(g, 0.5 * gap * (1.0 + 1e-9) + 1e-17);
            gap = g;
        }
        EXPECT_LE(gap, 1e-12);
    }
}

TEST(ForceStep, LandingApproachIsMonotone) {
    // Closing distance with the commanded velocity: d shrinks and velocity
    // stays non-negative until the threshold is crossed.
    ForceControlConfig cfg;
    ControllerState s;
    double d = 0.40;
    const double dt = 1.0 / 30.0;
    int steps = 0;
    while (s.stage == Stage::Landing && steps < 2000) {
        const std::array<double, 1> dz{d};
        const double v = force_step(cfg, s, dz, 0.0);
        if (s.stage == Stage::Landing) {
            EXPECT_GE(v, 0.0);
        }
        const double next = d - std::max(v, 1e-4) * dt;
        EXPECT_LT(next, d);
        d = next;
        ++steps;
    }
    EXPECT_EQ(s.stage, Stage::Scanning);
}

TEST(ForceStep, SpringEquilibriumAtDesiredForce) {
    ForceControlConfig cfg;
    ControllerState s;
    s.stage = Stage::Scanning;
    const double k = 500.0, dt = 1.0 / 30.0;
    double depth = 0.0;
    for (int i = 0; i < 600; ++i) depth += force_step(cfg, s, std::span<const double>{}, k * std::max(depth, 0.0)) * dt;
    EXPECT_NEAR(k * depth, cfg.f_desired, 1e-6);
}
