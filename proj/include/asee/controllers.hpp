#pragma once

// Probe orientation PD control and two-stage (landing / scanning) contact
// force control. Probe frame: z points from the tip toward the patient; a
// positive v_tz moves the probe toward the surface.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>

#include "asee/geometry.hpp"

namespace asee {

struct OrientationPDConfig {
    double kp = 1.5;        // 1/s
    double kd = 0.05;       // unitless
    double dt = 1.0 / 30.0; // s

    void validate() const {
        if (!(kp > 0.0)) throw InvalidArgument("orientation K_p must be positive");
        if (!(kd >= 0.0)) throw InvalidArgument("orientation K_d must be non-negative");
        if (!(dt > 0.0)) throw InvalidArgument("control period must be positive");
    }
};

struct ForceControlConfig {
    double w = 0.5;              // velocity smoothing weight in (0, 1)
    double kp_landing = 0.8;     // 1/s
    double kp_force = 0.004;     // m/(s N)
    double d_threshold = 0.150;  // m, camera lens to probe tip
    double f_desired = 3.5;      // N

    void validate() const {
        if (!(w > 0.0 && w < 1.0)) throw InvalidArgument("force smoothing weight must lie in (0, 1)");
        if (!(kp_landing > 0.0 && kp_force > 0.0)) throw InvalidArgument("force gains must be positive");
        if (!(d_threshold > 0.0)) throw InvalidArgument("landing threshold must be positive");
    }
};

enum class Stage { Landing, Scanning };

inline const char* to_string(Stage s) { return s == Stage::Landing ? "landing" : "scanning"; }

struct ControllerState {
    double prev_ex = 0.0;
    double prev_ey = 0.0;
    bool orientation_initialized = false;
    double prev_vz = 0.0;
    Stage stage = Stage::Landing;

    /// Retract: back to landing with the velocity memory cleared.
    void reset_stage() {
        stage = Stage::Landing;
        prev_vz = 0.0;
    }
};

/// Misalignment of the probe axis with the surface normal n (probe frame):
/// r = z x n = (-n_y, n_x, 0), whose components are the sines of the
/// projected tilt angles.
inline std::pair<double, double> orientation_error(const Vec3& n) { return {-n.y(), n.x()}; }

/// Per-axis PD on the orientation error; returns (w_x, w_y) in rad/s.
inline std::pair<double, double> orientation_step(const OrientationPDConfig& cfg, ControllerState& state,
                                                  const Vec3& n_hat) {
    if (!is_unit(n_hat, 1e-6)) throw InvalidArgument("orientation_step: normal must be unit length");
    const auto [ex, ey] = orientation_error(n_hat);
    double dex = 0.0, dey = 0.0;
    if (state.orientation_initialized) {
        dex = (ex - state.prev_ex) / cfg.dt;
        dey = (ey - state.prev_ey) / cfg.dt;
    }
    state.prev_ex = ex;
    state.prev_ey = ey;
    state.orientation_initialized = true;
    return {cfg.kp * ex + cfg.kd * dex, cfg.kp * ey + cfg.kd * dey};
}

/// Landing while min(d_z) >= threshold; scanning once it drops below.
/// Scanning is latched until ControllerState::reset_stage().
inline Stage stage_update(const ForceControlConfig& cfg, ControllerState& state, std::span<const double> d_z) {
    if (state.stage == Stage::Landing && !d_z.empty()) {
        if (*std::min_element(d_z.begin(), d_z.end()) < cfg.d_threshold) state.stage = Stage::Scanning;
    }
    return state.stage;
}

/// Unsmoothed z-velocity for the current stage.
inline double raw_force_velocity(const ForceControlConfig& cfg, Stage stage, std::span<const double> d_z,
                                 double f_measured) {
    if (stage == Stage::Landing) {
        if (d_z.empty()) throw NoDepth("force_step: no depth samples during landing");
        return cfg.kp_landing * (*std::min_element(d_z.begin(), d_z.end()) - cfg.d_threshold);
    }
    return cfg.kp_force * (cfg.f_desired - f_measured);
}

/// One force-loop update: stage transition, raw velocity, then the
/// exponential blend v_fz = w v + (1 - w) v_fz_prev.
inline double force_step(const ForceControlConfig& cfg, ControllerState& state, std::span<const double> d_z,
                         double f_measured) {
    if (!(f_measured >= 0.0)) throw InvalidArgument("force_step: measured force must be non-negative");
    const Stage stage = stage_update(cfg, state, d_z);
    const double v = raw_force_velocity(cfg, stage, d_z, f_measured);
    state.prev_vz = cfg.w * v + (1.0 - cfg.w) * state.prev_vz;
    return state.prev_vz;
}

} // namespace asee
