#pragma once

// Serial-arm kinematics at the velocity level: forward kinematics over a
// modified Denavit-Hartenberg chain, Jacobians, Moore-Penrose resolution of
// a base-frame twist into joint velocities, and assembly of the probe twist.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "asee/geometry.hpp"

namespace asee {

using JointVector = Eigen::VectorXd;
using JacobianMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Revolute joint in modified DH (Craig) form: the link transform is
/// RotX(alpha) TransX(a) RotZ(q + theta_offset) TransZ(d).
struct Joint {
    double a = 0.0;
    double d = 0.0;
    double alpha = 0.0;
    double theta_offset = 0.0;
    double q_min = -kPi;
    double q_max = kPi;
    double qd_max = 1.0;

    RigidTransform link(double q) const {
        const Eigen::Quaterniond rx(Eigen::AngleAxisd(alpha, Vec3::UnitX()));
        const Eigen::Quaterniond rz(Eigen::AngleAxisd(q + theta_offset, Vec3::UnitZ()));
        // RotX(alpha) TransX(a) RotZ(theta) TransZ(d)
        return {rx * rz, rx * Vec3(a, 0.0, 0.0) + (rx * rz) * Vec3(0.0, 0.0, d)};
    }
};

struct KinematicChain {
    std::vector<Joint> joints;
    RigidTransform flange_to_tip;

    std::size_t dof() const { return joints.size(); }

    void validate() const {
        if (joints.empty()) throw InvalidArgument("kinematic chain has no joints");
        for (const auto& j : joints) {
            if (!(j.q_min < j.q_max)) throw InvalidArgument("joint limits must satisfy q_min < q_max");
            if (!(j.qd_max > 0.0)) throw InvalidArgument("joint velocity limits must be positive");
        }
    }

    void check_limits(const JointVector& q) const {
        if (static_cast<std::size_t>(q.size()) != dof()) throw InvalidArgument("joint vector size mismatch");
        for (std::size_t i = 0; i < dof(); ++i) {
            if (!(q[i] >= joints[i].q_min && q[i] <= joints[i].q_max))
                throw LimitViolation("joint " + std::to_string(i + 1) + " outside its position limits");
        }
    }

    JointVector clamp(const JointVector& q) const {
        JointVector out = q;
        for (std::size_t i = 0; i < dof(); ++i) out[i] = std::clamp(q[i], joints[i].q_min, joints[i].q_max);
        return out;
    }
};

struct JointState {
    JointVector q;
    JointVector qd;
    double timestamp = 0.0;
};

/// Frames of every joint (axis = local z) followed by the tip, all in base.
inline std::vector<RigidTransform> joint_frames(const KinematicChain& chain, const JointVector& q) {
    chain.check_limits(q);
    std::vector<RigidTransform> frames;
    frames.reserve(chain.dof() + 1);
    RigidTransform t;
    for (std::size_t i = 0; i < chain.dof(); ++i) {
        t = t * chain.joints[i].link(q[i]);
        frames.push_back(t);
    }
    frames.push_back(t * chain.flange_to_tip);
    return frames;
}

/// Base -> probe tip.
inline RigidTransform forward_kinematics(const KinematicChain& chain, const JointVector& q) {
    return joint_frames(chain, q).back();
}

/// Column i = (z_i x (p_tip - p_i), z_i): maps joint rates to the tip's
/// linear velocity and the angular velocity, both in base axes.
inline JacobianMatrix geometric_jacobian(const KinematicChain& chain, const JointVector& q) {
    const auto frames = joint_frames(chain, q);
    const Vec3 tip = frames.back().translation();
    JacobianMatrix j(6, static_cast<Eigen::Index>(chain.dof()));
    for (std::size_t i = 0; i < chain.dof(); ++i) {
        const Vec3 z = frames[i].rotate(Vec3::UnitZ());
        const Vec3 p = frames[i].translation();
        j.col(static_cast<Eigen::Index>(i)) << z.cross(tip - p), z;
    }
    return j;
}

/// Jacobian onto the spatial twist (velocity of the point coincident with
/// the base origin), the twist produced by adjoint_map of a body twist:
/// J_s = [I [p_tip]; 0 I] J.
inline JacobianMatrix spatial_jacobian(const KinematicChain& chain, const JointVector& q) {
    JacobianMatrix j = geometric_jacobian(chain, q);
    const Vec3 tip = forward_kinematics(chain, q).translation();
    j.topRows<3>() += skew(tip) * j.bottomRows<3>();
    return j;
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// rel_tol * sigma_max are treated as zero.
inline Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& m, double rel_tol = 1e-6) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(m.cols(), m.rows());
    if (s.size() == 0 || s(0) <= 0.0) return pinv;
    const double cutoff = rel_tol * s(0);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff) pinv += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).transpose();
    }
    return pinv;
}

/// Uniformly scales qd so that no joint exceeds its velocity limit.
inline JointVector limit_joint_velocities(const KinematicChain& chain, const JointVector& qd) {
    double worst = 1.0;
    for (std::size_t i = 0; i < chain.dof(); ++i) worst = std::max(worst, std::abs(qd[i]) / chain.joints[i].qd_max);
    if (worst <= 1.0) return qd;
    JointVector out = qd / worst;
    // Pin the limiting joint exactly; division can leave it an ulp above.
    for (std::size_t i = 0; i < chain.dof(); ++i)
        out[i] = std::clamp(out[i], -chain.joints[i].qd_max, chain.joints[i].qd_max);
    return out;
}

/// qd = J_s^+ [v_base; w_base], then uniform velocity-limit scaling.
inline JointVector twist_to_joint_velocities(const KinematicChain& chain, const JointVector& q,
                                             const Twist& base_twist) {
    const Eigen::MatrixXd pinv = pseudoinverse(spatial_jacobian(chain, q));
    return limit_joint_velocities(chain, pinv * base_twist.stacked());
}

/// Body twist of the probe tip frame: translations (v_tx, v_ty) and the
/// axial rotation w_nz come from the operator, v_tz from the force loop,
/// (w_nx, w_ny) from the orientation loop.
inline Twist probe_body_twist(double v_tx, double v_ty, double v_tz, double w_nx, double w_ny, double w_nz) {
    return {Vec3(v_tx, v_ty, v_tz), Vec3(w_nx, w_ny, w_nz)};
}

/// Probe body twist mapped to the base frame at the given tip pose.
inline Twist compose_probe_twist(const RigidTransform& base_to_tip, double v_tx, double v_ty, double v_tz,
                                 double w_nx, double w_ny, double w_nz) {
    return adjoint_map(base_to_tip, probe_body_twist(v_tx, v_ty, v_tz, w_nx, w_ny, w_nz));
}

/// Seven-joint arm of the 3 kg-payload research-manipulator class
/// (manufacturer-published modified DH table), with a probe mount whose tip
/// lies 0.267 m beyond joint 7 along its axis.
inline KinematicChain default_chain() {
    KinematicChain c;
    const double h = kPi / 2.0;
    c.joints = {
        {0.0, 0.333, 0.0, 0.0, -2.8973, 2.8973, 2.1750},
        {0.0, 0.0, -h, 0.0, -1.7628, 1.7628, 2.1750},
        {0.0, 0.316, h, 0.0, -2.8973, 2.8973, 2.1750},
        {0.0825, 0.0, h, 0.0, -3.0718, -0.0698, 2.1750},
        {-0.0825, 0.384, -h, 0.0, -2.8973, 2.8973, 2.6100},
        {0.0, 0.0, h, 0.0, -0.0175, 3.7525, 2.6100},
        {0.088, 0.0, h, 0.0, -2.8973, 2.8973, 2.6100},
    };
    c.flange_to_tip = RigidTransform::from_translation(Vec3(0.0, 0.0, 0.267));
    return c;
}

/// Joint configuration with the probe pointing straight down in front of the base.
inline JointVector ready_configuration() {
    JointVector q(7);
    q << 0.0, -kPi / 4.0, 0.0, -3.0 * kPi / 4.0, 0.0, kPi / 2.0, kPi / 4.0;
    return q;
}

/// Chain description: one joint per line `a d alpha theta_offset q_min q_max
/// qd_max`, then `tx ty tz qw qx qy qz` for the flange-to-tip transform.
/// Blank lines and `#` comments are ignored.
inline KinematicChain parse_chain(std::istream& in, std::size_t expected_dof = 7) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (!ls.eof()) throw IoError("chain file: non-numeric token in line: " + line);
        if (!vals.empty()) rows.push_back(std::move(vals));
    }
    if (rows.size() != expected_dof + 1)
        throw IoError("chain file: expected " + std::to_string(expected_dof) + " joint lines plus a tip line");
    KinematicChain c;
    for (std::size_t i = 0; i < expected_dof; ++i) {
        const auto& r = rows[i];
        if (r.size() != 7) throw IoError("chain file: joint lines need 7 values");
        c.joints.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6]});
    }
    const auto& t = rows.back();
    if (t.size() != 7) throw IoError("chain file: tip line needs 7 values");
    c.flange_to_tip = {Eigen::Quaterniond(t[3], t[4], t[5], t[6]), Vec3(t[0], t[1], t[2])};
    c.validate();
    return c;
}

inline KinematicChain load_chain(const std::filesystem::path& path, std::size_t expected_dof = 7) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open chain file " + path.string());
    return parse_chain(in, expected_dof);
}

} // namespace asee
