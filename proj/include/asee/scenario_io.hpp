#pragma once

// Scenario files: one JSON document per experiment. Unknown keys are
// ignored; missing keys keep their defaults. The schema is described in
// README.md.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "asee/io.hpp"
#include "asee/phantoms.hpp"
#include "asee/sim.hpp"

namespace asee {

namespace detail {

using nlohmann::json;

inline Vec3 vec3_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline RigidTransform pose_of(const json& j) {
    Vec3 t = Vec3::Zero();
    if (j.contains("translation")) t = vec3_of(j["translation"], "pose.translation");
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
    if (j.contains("quat_wxyz")) {
        const auto& a = j["quat_wxyz"];
        if (!a.is_array() || a.size() != 4) throw ConfigError("pose.quat_wxyz: expected 4 numbers");
        q = Eigen::Quaterniond(a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>());
        if (!(q.norm() > 0.0)) throw ConfigError("pose.quat_wxyz: zero quaternion");
        q.normalize();
    } else if (j.contains("rpy_deg")) {
        // Fixed-axis roll, pitch, yaw: R = Rz(yaw) Ry(pitch) Rx(roll).
        const Vec3 rpy = vec3_of(j["rpy_deg"], "pose.rpy_deg");
        q = Eigen::AngleAxisd(deg2rad(rpy.z()), Vec3::UnitZ()) * Eigen::AngleAxisd(deg2rad(rpy.y()), Vec3::UnitY()) *
            Eigen::AngleAxisd(deg2rad(rpy.x()), Vec3::UnitX());
    }
    return {q, t};
}

inline Shape shape_of(const json& j, const std::filesystem::path& base_dir) {
    const std::string type = j.value("type", "");
    auto resolve = [&](const std::string& f) {
        const std::filesystem::path p(f);
        return p.is_absolute() ? p : base_dir / p;
    };
    if (type == "plane") {
        Plane p;
        if (j.contains("point")) p.point = vec3_of(j["point"], "surface.point");
        if (j.contains("normal")) p.normal = vec3_of(j["normal"], "surface.normal");
        if (!(p.normal.norm() > 0.0)) throw ConfigError("surface.normal must be non-zero");
        p.normal.normalize();
        return p;
    }
    if (type == "sphere") {
        Sphere s;
        if (j.contains("center")) s.center = vec3_of(j["center"], "surface.center");
        read_opt(j, "radius", s.radius);
        return s;
    }
    if (type == "heightfield") {
        if (j.contains("file")) return io::read_heightfield_csv(resolve(j["file"].get<std::string>()));
        if (j.value("generator", "") == "torso") return phantoms::torso();
        throw ConfigError("heightfield surface needs 'file' or generator 'torso'");
    }
    if (type == "mesh") {
        if (j.contains("file")) return io::read_mesh(resolve(j["file"].get<std::string>()));
        if (j.value("generator", "") == "dome") return phantoms::dome();
        throw ConfigError("mesh surface needs 'file' or generator 'dome'");
    }
    throw ConfigError("surface.type must be plane, sphere, heightfield or mesh (got '" + type + "')");
}

} // namespace detail

/// Seed override from ASEE_SIM_SEED, if set to an unsigned integer.
inline std::optional<std::uint64_t> seed_override_from_env() {
    const char* v = std::getenv("ASEE_SIM_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto s = std::stoull(v, &used, 0);
        if (used != std::string(v).size()) throw ConfigError("");
        return s;
    } catch (const std::exception&) {
        throw ConfigError(std::string("ASEE_SIM_SEED is not an unsigned integer: ") + v);
    }
}

inline void apply_seed(ScenarioConfig& c, std::uint64_t seed) {
    c.rig.seed = seed;
    c.pipeline.seed = seed;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
    using detail::read_opt;
    using detail::vec3_of;
    ScenarioConfig c;
    try {
        read_opt(j, "name", c.name);
        if (!j.contains("surface")) throw ConfigError("scenario needs a 'surface'");
        const auto& s = j["surface"];
        c.surface.shape = detail::shape_of(s, base_dir);
        if (s.contains("pose")) c.surface.pose = detail::pose_of(s["pose"]);
        const std::string anchor = s.value("anchor", "base");
        if (anchor != "base" && anchor != "initial_tip") throw ConfigError("surface.anchor must be base or initial_tip");
        c.anchor_to_initial_tip = anchor == "initial_tip";

        for (const auto& p : j.value("tilt_schedule", nlohmann::json::array())) {
            TiltPhase t;
            t.t = p.at("t").get<double>();
            if (p.contains("axis")) t.axis = vec3_of(p["axis"], "tilt_schedule.axis");
            if (!(t.axis.norm() > 0.0)) throw ConfigError("tilt_schedule.axis must be non-zero");
            t.angle = deg2rad(p.value("angle_deg", 0.0));
            c.tilt_schedule.push_back(t);
        }

        if (j.contains("rig")) {
            const auto& r = j["rig"];
            if (r.contains("intrinsics")) {
                const auto& in = r["intrinsics"];
                read_opt(in, "fx", c.rig.intrinsics.fx);
                read_opt(in, "fy", c.rig.intrinsics.fy);
                read_opt(in, "cx", c.rig.intrinsics.cx);
                read_opt(in, "cy", c.rig.intrinsics.cy);
                read_opt(in, "width", c.rig.intrinsics.width);
                read_opt(in, "height", c.rig.intrinsics.height);
            }
            read_opt(r, "lateral_offset", c.rig.geometry.lateral_offset);
            read_opt(r, "standoff", c.rig.geometry.standoff);
            if (r.contains("pitch_deg")) c.rig.geometry.pitch = deg2rad(r["pitch_deg"].get<double>());
            read_opt(r, "noise_sigma", c.rig.noise_sigma);
            read_opt(r, "seed", c.rig.seed);
            if (r.contains("extrinsic_error_deg")) c.rig.extrinsic_error = deg2rad(r["extrinsic_error_deg"].get<double>());
            if (r.contains("extrinsic_error_axis"))
                c.rig.extrinsic_error_axis = vec3_of(r["extrinsic_error_axis"], "rig.extrinsic_error_axis");
        }

        if (j.contains("chain")) {
            const std::filesystem::path p(j["chain"].get<std::string>());
            c.chain = load_chain(p.is_absolute() ? p : base_dir / p);
        }

        if (j.contains("pipeline")) {
            const auto& p = j["pipeline"];
            read_opt(p, "z_min", c.pipeline.z_min);
            read_opt(p, "z_max", c.pipeline.z_max);
            read_opt(p, "per_camera_cap", c.pipeline.per_camera_cap);
            if (p.contains("probe_box")) {
                c.pipeline.probe_box.lo = vec3_of(p["probe_box"].at("lo"), "pipeline.probe_box.lo");
                c.pipeline.probe_box.hi = vec3_of(p["probe_box"].at("hi"), "pipeline.probe_box.hi");
            }
            read_opt(p, "voxel_size", c.pipeline.voxel_size);
            read_opt(p, "sor_k", c.pipeline.sor_k);
            read_opt(p, "sor_std_mult", c.pipeline.sor_std_mult);
            read_opt(p, "normal_k", c.pipeline.normal_k);
            read_opt(p, "region_x", c.pipeline.region_x);
            read_opt(p, "region_y", c.pipeline.region_y);
            read_opt(p, "ma_window", c.pipeline.ma_window);
            read_opt(p, "seed", c.pipeline.seed);
        }
        if (j.contains("orientation")) {
            const auto& o = j["orientation"];
            read_opt(o, "kp", c.orientation.kp);
            read_opt(o, "kd", c.orientation.kd);
            read_opt(o, "dt", c.orientation.dt);
        }
        if (j.contains("force")) {
            const auto& f = j["force"];
            read_opt(f, "w", c.force.w);
            read_opt(f, "kp_landing", c.force.kp_landing);
            read_opt(f, "kp_force", c.force.kp_force);
            read_opt(f, "d_threshold", c.force.d_threshold);
            read_opt(f, "f_desired", c.force.f_desired);
        }

        read_opt(j, "stiffness", c.stiffness);
        if (j.contains("initial_q")) {
            const auto v = j["initial_q"].get<std::vector<double>>();
            c.initial_q = Eigen::Map<const JointVector>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        if (c.initial_q.size() != static_cast<Eigen::Index>(c.chain.dof()))
            throw ConfigError("initial_q length does not match the chain");
        read_opt(j, "duration", c.duration);
        const std::string mode = j.value("mode", "autonomous_land");
        if (mode == "autonomous_land") c.mode = Mode::AutonomousLand;
        else if (mode == "teleop") c.mode = Mode::Teleop;
        else throw ConfigError("mode must be autonomous_land or teleop");
        read_opt(j, "force_control", c.force_control);
        read_opt(j, "orientation_during_landing", c.orientation_during_landing);
        read_opt(j, "hold_cycles", c.hold_cycles);
        read_opt(j, "retract_speed", c.retract_speed);
        for (const auto& s : j.value("teleop_script", nlohmann::json::array())) {
            TeleopSegment seg;
            seg.t0 = s.at("t0").get<double>();
            seg.t1 = s.at("t1").get<double>();
            seg.cmd.vx = s.value("vx", 0.0);
            seg.cmd.vy = s.value("vy", 0.0);
            seg.cmd.wz = s.value("wz", 0.0);
            c.teleop_script.push_back(seg);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    c.validate();
    return c;
}

/// Reads a scenario file; relative surface and chain paths resolve against
/// the file's directory. ASEE_SIM_SEED, when set, replaces every seed.
inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario " + path.string() + ": " + e.what());
    }
    ScenarioConfig c = scenario_from_json(j, path.parent_path().empty() ? "." : path.parent_path());
    if (const auto s = seed_override_from_env()) apply_seed(c, *s);
    return c;
}

} // namespace asee
