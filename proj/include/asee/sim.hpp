#pragma once

// Closed-loop simulation at the control rate: render both cameras, run the
// perception chain, evaluate the orientation and force laws, blend in the
// operator command, resolve joint velocities, integrate, and update the
// spring contact.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asee/calibration.hpp"
#include "asee/controllers.hpp"
#include "asee/depth_camera.hpp"
#include "asee/geometry.hpp"
#include "asee/kinematics.hpp"
#include "asee/perception.hpp"
#include "asee/surfaces.hpp"

namespace asee {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct TeleopCommand {
    double vx = 0.0;  // m/s, probe x
    double vy = 0.0;  // m/s, probe y
    double wz = 0.0;  // rad/s, about the probe axis
};

/// Scripted operator input active for t in [t0, t1).
struct TeleopSegment {
    double t0 = 0.0;
    double t1 = 0.0;
    TeleopCommand cmd;
};

/// From time `t` on, the surface is rotated by `angle` (rad) about `axis`
/// (surface-local) relative to its initial placement.
struct TiltPhase {
    double t = 0.0;
    Vec3 axis = Vec3::UnitX();
    double angle = 0.0;
};

enum class Mode { AutonomousLand, Teleop };

struct RigConfig {
    PinholeIntrinsics intrinsics;
    RigGeometry geometry;
    double noise_sigma = 0.0005;
    std::uint64_t seed = 1;
    // Rotation error injected into the cam2->cam1 transform used for fusion.
    double extrinsic_error = 0.0;
    Vec3 extrinsic_error_axis = Vec3::UnitY();

    RigidTransform true_extrinsic() const { return static_extrinsic(geometry); }

    RigidTransform fusion_extrinsic() const {
        return true_extrinsic() *
               RigidTransform::from_rotation(Eigen::AngleAxisd(extrinsic_error, extrinsic_error_axis.normalized()));
    }
};

struct ScenarioConfig {
    std::string name = "scenario";
    SurfaceModel surface;
    // When set, the surface pose is read in the probe tip frame at initial_q.
    bool anchor_to_initial_tip = false;
    std::vector<TiltPhase> tilt_schedule;
    RigConfig rig;
    KinematicChain chain = default_chain();
    PipelineConfig pipeline;
    OrientationPDConfig orientation;
    ForceControlConfig force;
    double stiffness = 500.0;  // N/m
    JointVector initial_q = ready_configuration();
    double duration = 10.0;    // s
    // Teleop commands (scripted or from the socket) are honoured only in
    // teleop mode.
    Mode mode = Mode::AutonomousLand;
    // Force loop engaged at start; land/retract actions toggle it.
    bool force_control = true;
    bool orientation_during_landing = true;
    std::size_t hold_cycles = 10;
    double retract_speed = 0.02;  // m/s
    std::vector<TeleopSegment> teleop_script;

    double dt() const { return orientation.dt; }
    std::size_t step_count() const { return static_cast<std::size_t>(std::llround(duration / dt())); }

    void validate() const {
        if (!(duration > 0.0)) throw ConfigError("duration must be positive");
        if (!(stiffness > 0.0)) throw ConfigError("contact stiffness must be positive");
        for (std::size_t i = 1; i < tilt_schedule.size(); ++i)
            if (!(tilt_schedule[i].t > tilt_schedule[i - 1].t)) throw ConfigError("tilt schedule times must increase");
        try {
            surface.validate();
            rig.intrinsics.validate();
            chain.validate();
            pipeline.validate();
            orientation.validate();
            force.validate();
            if (!(rig.noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
            chain.check_limits(initial_q);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
};

/// Spring contact along the surface normal: k * max(0, penetration).
/// `probe_axis` is accepted for interface symmetry; the force is reported
/// as the magnitude along the probe axis.
inline double contact_force(const SurfaceModel& surface, const Vec3& probe_tip, const Vec3& /*probe_axis*/,
                            double stiffness) {
    if (!(stiffness > 0.0)) throw InvalidArgument("contact_force: stiffness must be positive");
    const double penetration = std::max(0.0, -closest_point(surface, probe_tip).signed_distance);
    return stiffness * penetration;
}

struct LogRecord {
    double t = 0.0;
    JointVector q = JointVector::Zero(7);
    Vec3 position = Vec3::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
    Vec3 normal = Vec3::UnitZ();
    double err_deg = 0.0;
    double force = 0.0;
    Stage stage = Stage::Landing;
    Vec6 twist = Vec6::Zero();  // commanded probe body twist (v_tx v_ty v_tz w_nx w_ny w_nz)
};

struct SimState {
    double t = 0.0;
    std::size_t step = 0;
    JointState joints;
    RigidTransform probe_pose;
    std::optional<NormalEstimate> normal;  // latest smoothed estimate
    std::size_t cycles_without_estimate = 0;
    double force = 0.0;
    double err_deg = 0.0;
    Twist last_twist;  // body frame
    ControllerState control;
    bool force_engaged = true;
    bool retracting = false;
    bool paused = false;

    Stage stage() const { return control.stage; }
};

class Simulator {
public:
    explicit Simulator(ScenarioConfig cfg) : cfg_(std::move(cfg)), filter_(cfg_.pipeline.ma_window) {
        cfg_.validate();
        if (cfg_.anchor_to_initial_tip) {
            cfg_.surface.pose = forward_kinematics(cfg_.chain, cfg_.initial_q) * cfg_.surface.pose;
            cfg_.anchor_to_initial_tip = false;
        }
        state_.joints.q = cfg_.initial_q;
        state_.joints.qd = JointVector::Zero(static_cast<Eigen::Index>(cfg_.chain.dof()));
        state_.force_engaged = cfg_.force_control;
        refresh_plant();
    }

    const ScenarioConfig& config() const { return cfg_; }
    const SimState& state() const { return state_; }
    const PointCloud& last_processed() const { return processed_; }

    PointCloud last_processed_world() const {
        PointCloud c = transform_cloud(state_cam1_pose_ , processed_);
        c.frame_id = "world";
        return c;
    }

    SurfaceModel surface_at(double t) const {
        SurfaceModel s = cfg_.surface;
        const TiltPhase* active = nullptr;
        for (const auto& p : cfg_.tilt_schedule)
            if (t + 1e-9 >= p.t) active = &p;
        if (active)
            s.pose = s.pose * RigidTransform::from_rotation(Eigen::AngleAxisd(active->angle, active->axis.normalized()));
        return s;
    }

    /// Ground-truth probe direction: into the surface at the closest point to the tip.
    Vec3 ground_truth_direction(double t, const Vec3& tip) const { return -closest_point(surface_at(t), tip).normal; }

    void land() {
        state_.retracting = false;
        state_.force_engaged = true;
        state_.control.reset_stage();
    }

    void retract() {
        state_.retracting = true;
        state_.force_engaged = false;
        state_.control.reset_stage();
    }

    void pause() { state_.paused = true; }
    void resume() { state_.paused = false; }

    /// Runtime gain update; returns false for unknown keys or invalid values.
    bool tune(const std::string& key, double value) {
        OrientationPDConfig o = cfg_.orientation;
        ForceControlConfig f = cfg_.force;
        if (key == "kp") o.kp = value;
        else if (key == "kd") o.kd = value;
        else if (key == "kp_landing" || key == "kp1") f.kp_landing = value;
        else if (key == "kp_force" || key == "kp2") f.kp_force = value;
        else if (key == "w") f.w = value;
        else if (key == "f_desired") f.f_desired = value;
        else if (key == "d_threshold") f.d_threshold = value;
        else return false;
        try {
            o.validate();
            f.validate();
        } catch (const InvalidArgument&) {
            return false;
        }
        cfg_.orientation = o;
        cfg_.force = f;
        return true;
    }

    LogRecord step(const TeleopCommand& teleop = {}) {
        const double dt = cfg_.dt();
        const SurfaceModel surface = surface_at(state_.t);
        sense(surface);

        double wx = 0.0, wy = 0.0, vz = 0.0;
        if (!state_.paused) {
            const bool orient_active =
                !state_.retracting && (cfg_.orientation_during_landing || state_.control.stage == Stage::Scanning);
            if (orient_active && state_.normal && state_.cycles_without_estimate <= cfg_.hold_cycles) {
                std::tie(wx, wy) = orientation_step(cfg_.orientation, state_.control, state_.normal->normal);
            }
            if (state_.retracting) {
                vz = -cfg_.retract_speed;
            } else if (state_.force_engaged) {
                try {
                    vz = force_step(cfg_.force, state_.control, d_z_, state_.force);
                } catch (const NoDepth&) {
                    state_.control.prev_vz = 0.0;
                    vz = 0.0;
                }
            }
        }
        const TeleopCommand cmd = state_.paused || cfg_.mode != Mode::Teleop ? TeleopCommand{} : teleop;

        const Twist body = probe_body_twist(cmd.vx, cmd.vy, vz, wx, wy, cmd.wz);
        const Twist base = adjoint_map(state_.probe_pose, body);
        const JointVector qd = twist_to_joint_velocities(cfg_.chain, state_.joints.q, base);
        for (std::size_t i = 0; i < cfg_.chain.dof(); ++i) {
            if (std::abs(qd[static_cast<Eigen::Index>(i)]) > cfg_.chain.joints[i].qd_max * (1.0 + 1e-12))
                throw LimitViolation("commanded joint velocity exceeds its limit");
        }
        state_.joints.qd = qd;
        state_.joints.q = cfg_.chain.clamp(state_.joints.q + qd * dt);
        ++state_.step;
        state_.t = static_cast<double>(state_.step) * dt;
        state_.joints.timestamp = state_.t;
        state_.last_twist = body;
        refresh_plant();
        return record();
    }

    LogRecord record() const {
        LogRecord r;
        r.t = state_.t;
        r.q = state_.joints.q;
        r.position = state_.probe_pose.translation();
        r.orientation = state_.probe_pose.quaternion();
        r.normal = state_.normal ? state_.normal->normal : Vec3(Vec3::UnitZ());
        r.err_deg = state_.err_deg;
        r.force = state_.force;
        r.stage = state_.control.stage;
        r.twist = state_.last_twist.stacked();
        return r;
    }

    TeleopCommand scripted_command(double t) const {
        for (const auto& s : cfg_.teleop_script)
            if (t + 1e-9 >= s.t0 && t + 1e-9 < s.t1) return s.cmd;
        return {};
    }

private:
    void sense(const SurfaceModel& surface) {
        state_cam1_pose_ = state_.probe_pose * cfg_.rig.geometry.probe_from_cam1();
        const std::uint64_t k = state_.step;
        auto [c1, c2] = render_rig(surface, state_cam1_pose_, cfg_.rig.true_extrinsic(), cfg_.rig.intrinsics,
                                   cfg_.rig.noise_sigma, splitmix64(cfg_.rig.seed + k));
        PipelineConfig pc = cfg_.pipeline;
        pc.seed = splitmix64(cfg_.pipeline.seed ^ (k << 20));
        const RigExtrinsics ext{cfg_.rig.fusion_extrinsic(), cfg_.rig.geometry.probe_from_cam1()};
        d_z_.clear();
        try {
            processed_ = process_clouds(c1, c2, pc, ext, /*region_only=*/true);
            d_z_.reserve(processed_.size());
            for (const auto& p : processed_.points) d_z_.push_back(p.z());
            const NormalEstimate raw = region_normal(processed_, pc.region_x, pc.region_y, ext.cam1_to_probe, state_.t);
            state_.normal = filter_.smooth(raw);
            state_.cycles_without_estimate = 0;
        } catch (const NoSupport&) {
            ++state_.cycles_without_estimate;
        }
    }

    void refresh_plant() {
        state_.probe_pose = forward_kinematics(cfg_.chain, state_.joints.q);
        const SurfaceModel surface = surface_at(state_.t);
        const Vec3 tip = state_.probe_pose.translation();
        const Vec3 axis = state_.probe_pose.rotate(Vec3::UnitZ());
        state_.force = contact_force(surface, tip, axis, cfg_.stiffness);
        state_.err_deg = angle_between(axis, -closest_point(surface, tip).normal);
        state_cam1_pose_ = state_.probe_pose * cfg_.rig.geometry.probe_from_cam1();
    }

    ScenarioConfig cfg_;
    MovingAverageFilter filter_;
    SimState state_;
    RigidTransform state_cam1_pose_;
    PointCloud processed_;
    std::vector<double> d_z_;
};

struct RunResult {
    std::vector<LogRecord> records;
    PointCloud final_cloud;  // processed fused cloud of the last step, world frame
};

inline RunResult run_scenario(const ScenarioConfig& cfg) {
    Simulator sim(cfg);
    RunResult out;
    const std::size_t n = cfg.step_count();
    out.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.records.push_back(sim.step(sim.scripted_command(sim.state().t)));
    out.final_cloud = sim.last_processed_world();
    return out;
}

// ---- log files --------------------------------------------------------------

inline const char* log_header() {
    return "t,q1,q2,q3,q4,q5,q6,q7,px,py,pz,qw,qx,qy,qz,nx,ny,nz,err_deg,force_n,stage,"
           "cmd_vx,cmd_vy,cmd_vz,cmd_wx,cmd_wy,cmd_wz";
}

/// Fixed-point with nine fractional digits.
inline std::string format_log_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    // Normalize negative zero so identical states print identically.
    if (std::string_view(buf) == "-0.000000000") return "0.000000000";
    return buf;
}

inline void write_log(std::ostream& out, const std::vector<LogRecord>& records) {
    out << log_header() << '\n';
    for (const auto& r : records) {
        std::string line = format_log_value(r.t);
        auto put = [&line](double v) {
            line += ',';
            line += format_log_value(v);
        };
        for (Eigen::Index i = 0; i < r.q.size(); ++i) put(r.q[i]);
        for (int i = 0; i < 3; ++i) put(r.position[i]);
        put(r.orientation.w());
        put(r.orientation.x());
        put(r.orientation.y());
        put(r.orientation.z());
        for (int i = 0; i < 3; ++i) put(r.normal[i]);
        put(r.err_deg);
        put(r.force);
        line += ',';
        line += to_string(r.stage);
        for (int i = 0; i < 6; ++i) put(r.twist[i]);
        out << line << '\n';
    }
}

inline void export_logs(const std::vector<LogRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write log " + path.string());
    write_log(out, records);
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<LogRecord> parse_log(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty log file");
    if (line != log_header()) throw IoError("unexpected log header");
    std::vector<LogRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 27) throw IoError("log row has " + std::to_string(cells.size()) + " columns, expected 27");
        LogRecord r;
        auto num = [&](std::size_t i) { return std::stod(cells[i]); };
        r.t = num(0);
        for (int i = 0; i < 7; ++i) r.q[i] = num(1 + i);
        r.position = Vec3(num(8), num(9), num(10));
        r.orientation = Eigen::Quaterniond(num(11), num(12), num(13), num(14));
        r.normal = Vec3(num(15), num(16), num(17));
        r.err_deg = num(18);
        r.force = num(19);
        if (cells[20] == "landing") r.stage = Stage::Landing;
        else if (cells[20] == "scanning") r.stage = Stage::Scanning;
        else throw IoError("unknown stage '" + cells[20] + "'");
        for (int i = 0; i < 6; ++i) r.twist[i] = num(21 + i);
        out.push_back(r);
    }
    return out;
}

inline std::vector<LogRecord> load_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log " + path.string());
    return parse_log(in);
}

} // namespace asee
