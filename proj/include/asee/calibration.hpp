#pragma once

// Offline transforms: eye-in-hand AX = XB solving, fiducial rigid
// registration, and the fixed camera-to-camera extrinsic of the rig.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "asee/depth_camera.hpp"
#include "asee/geometry.hpp"

namespace asee {

/// A: relative flange motion between two robot poses; B: relative camera
/// motion between the same two instants. The unknown X (camera in flange)
/// satisfies A X = X B.
struct MotionPair {
    RigidTransform a;
    RigidTransform b;
};

struct HandEyeResult {
    RigidTransform x;
    double rotation_residual = 0.0;    // rad, RMS over pairs
    double translation_residual = 0.0; // m, RMS over pairs
};

/// Rotation vector (axis * angle) of a unit quaternion.
inline Vec3 log_so3(const Eigen::Quaterniond& q) {
    const Eigen::AngleAxisd aa(q);
    return aa.axis() * aa.angle();
}

inline double rotation_angle(const Eigen::Quaterniond& q) { return Eigen::AngleAxisd(q).angle(); }

namespace detail {

/// (M^T M)^{-1/2} M^T, or nullopt when M^T M is numerically singular.
inline std::optional<Mat3> park_martin_rotation(const Mat3& m) {
    const Eigen::SelfAdjointEigenSolver<Mat3> es(m.transpose() * m);
    const Vec3 ev = es.eigenvalues();
    if (!(ev(2) > 0.0) || ev(0) < 1e-12 * ev(2)) return std::nullopt;
    const Mat3 v = es.eigenvectors();
    const Mat3 inv_sqrt = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    return inv_sqrt * m.transpose();
}

} // namespace detail

/// Park-Martin closed form: rotation from the log-map axes of A_i and B_i,
/// translation by linear least squares over (R_A - I) t_X = R_X t_B - t_A.
inline HandEyeResult solve_ax_xb(const std::vector<MotionPair>& pairs) {
    if (pairs.size() < 2) throw Degenerate("solve_ax_xb: at least two motion pairs are required");
    std::vector<Vec3> alpha, beta;
    for (const auto& p : pairs) {
        alpha.push_back(log_so3(p.a.quaternion()));
        beta.push_back(log_so3(p.b.quaternion()));
    }
    Mat3 m = Mat3::Zero();
    for (std::size_t i = 0; i < pairs.size(); ++i) m += beta[i] * alpha[i].transpose();

    auto rx = detail::park_martin_rotation(m);
    if (!rx) {
        // Two independent axes leave M with rank 2; alpha_i x alpha_j = R_X (beta_i x beta_j)
        // supplies the missing direction.
        double best = 0.0, scale = 0.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            scale = std::max(scale, alpha[i].squaredNorm());
            for (std::size_t j = i + 1; j < pairs.size(); ++j) {
                const double c = alpha[i].cross(alpha[j]).norm();
                if (c > best) {
                    best = c;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!(scale > 0.0) || best < 1e-6 * scale) throw Degenerate("solve_ax_xb: rotation axes are all parallel");
        m += beta[bi].cross(beta[bj]) * alpha[bi].cross(alpha[bj]).transpose();
        rx = detail::park_martin_rotation(m);
        if (!rx) throw Degenerate("solve_ax_xb: rotation axes are all parallel");
    }
    // Re-orthonormalize against round-off.
    const Eigen::JacobiSVD<Mat3> rsvd(*rx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = rsvd.matrixU() * rsvd.matrixV().transpose();
    if (r.determinant() < 0.0) throw Degenerate("solve_ax_xb: improper rotation estimate");

    Eigen::MatrixXd c(3 * pairs.size(), 3);
    Eigen::VectorXd d(3 * pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(3 * i);
        c.block<3, 3>(k, 0) = pairs[i].a.rotation_matrix() - Mat3::Identity();
        d.segment<3>(k) = r * pairs[i].b.translation() - pairs[i].a.translation();
    }
    const Vec3 t = c.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(d);

    HandEyeResult out;
    out.x = RigidTransform(r, t);
    double rot_sq = 0.0, trans_sq = 0.0;
    for (const auto& p : pairs) {
        const RigidTransform lhs = p.a * out.x;
        const RigidTransform rhs = out.x * p.b;
        const double ang = rotation_angle(lhs.quaternion().conjugate() * rhs.quaternion());
        rot_sq += ang * ang;
        trans_sq += (lhs.translation() - rhs.translation()).squaredNorm();
    }
    const double n = static_cast<double>(pairs.size());
    out.rotation_residual = std::sqrt(rot_sq / n);
    out.translation_residual = std::sqrt(trans_sq / n);
    return out;
}

enum class PairMode { Consecutive, AllPairs };

/// Builds motion pairs from synchronized absolute poses: base->flange and
/// camera->target (target pose in the camera frame) per capture.
/// Pair (i, j): A = F_j^-1 F_i, B = C_j C_i^-1.
inline std::vector<MotionPair> motion_pairs_from_poses(const std::vector<RigidTransform>& base_to_flange,
                                                       const std::vector<RigidTransform>& camera_to_target,
                                                       PairMode mode = PairMode::Consecutive) {
    if (base_to_flange.size() != camera_to_target.size())
        throw InvalidArgument("motion_pairs_from_poses: pose lists differ in length");
    std::vector<MotionPair> pairs;
    const std::size_t n = base_to_flange.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (mode == PairMode::Consecutive && j != i + 1) break;
            pairs.push_back({base_to_flange[j].inverse() * base_to_flange[i],
                             camera_to_target[j] * camera_to_target[i].inverse()});
        }
    }
    return pairs;
}

/// Random motions A_i with B_i = X^-1 A_i X, optionally perturbed on B by
/// Gaussian rotation-vector noise (rad) and translation noise (m).
inline std::vector<MotionPair> synthesize_motion_pairs(const RigidTransform& x, std::size_t count,
                                                       double rot_noise, double trans_noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.3, 1.2);
    auto random_unit = [&] {
        Vec3 v(gauss(rng), gauss(rng), gauss(rng));
        return Vec3(v.normalized());
    };
    std::vector<MotionPair> pairs;
    for (std::size_t i = 0; i < count; ++i) {
        const RigidTransform a(Eigen::Quaterniond(Eigen::AngleAxisd(angle(rng), random_unit())),
                               Vec3(gauss(rng), gauss(rng), gauss(rng)) * 0.1);
        RigidTransform b = x.inverse() * a * x;
        if (rot_noise > 0.0 || trans_noise > 0.0) {
            const Vec3 w(gauss(rng) * rot_noise, gauss(rng) * rot_noise, gauss(rng) * rot_noise);
            const Vec3 dt(gauss(rng) * trans_noise, gauss(rng) * trans_noise, gauss(rng) * trans_noise);
            const double wn = w.norm();
            const Eigen::Quaterniond dq =
                wn > 0.0 ? Eigen::Quaterniond(Eigen::AngleAxisd(wn, w / wn)) : Eigen::Quaterniond::Identity();
            b = RigidTransform(dq * b.quaternion(), b.translation() + dt);
        }
        pairs.push_back({a, b});
    }
    return pairs;
}

struct Registration {
    RigidTransform transform;  // source -> target
    double rms = 0.0;          // m
};

/// Least-squares rigid transform T minimizing sum |T s_i - t_i|^2
/// (centroid subtraction, SVD of the cross-covariance, reflection fixed).
inline Registration register_fiducials(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
    if (source.size() != target.size()) throw InvalidArgument("register_fiducials: lists differ in length");
    if (source.size() < 3) throw Degenerate("register_fiducials: at least three correspondences are required");
    const double n = static_cast<double>(source.size());
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= n;
    ct /= n;
    Mat3 h = Mat3::Zero();
    Mat3 spread = Mat3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        h += (source[i] - cs) * (target[i] - ct).transpose();
        spread += (source[i] - cs) * (source[i] - cs).transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> es(spread);
    if (!(es.eigenvalues()(2) > 0.0) || es.eigenvalues()(1) < 1e-12 * es.eigenvalues()(2))
        throw Degenerate("register_fiducials: correspondences are collinear");

    const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 fix = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) fix(2, 2) = -1.0;
    const Mat3 r = svd.matrixV() * fix * svd.matrixU().transpose();
    const Vec3 t = ct - r * cs;

    Registration out;
    out.transform = RigidTransform(r, t);
    double sq = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) sq += (out.transform.apply(source[i]) - target[i]).squaredNorm();
    out.rms = std::sqrt(sq / n);
    return out;
}

/// cam2 -> cam1 transform implied by the rig mounting, identity when the
/// rig geometry is not specified.
inline RigidTransform static_extrinsic(const std::optional<RigGeometry>& rig) {
    if (!rig) return RigidTransform::identity();
    return rig->probe_from_cam1().inverse() * rig->probe_from_cam2();
}

/// Pose-pair file: one pair per line, `tx ty tz qw qx qy qz` for A then B.
inline std::vector<MotionPair> parse_pose_pairs(std::istream& in) {
    std::vector<MotionPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (v.empty()) continue;
        if (v.size() != 14) throw IoError("pose-pair line " + std::to_string(lineno) + ": expected 14 values");
        auto tf = [&](std::size_t o) {
            return RigidTransform(Eigen::Quaterniond(v[o + 3], v[o + 4], v[o + 5], v[o + 6]),
                                  Vec3(v[o], v[o + 1], v[o + 2]));
        };
        pairs.push_back({tf(0), tf(7)});
    }
    return pairs;
}

inline std::vector<MotionPair> load_pose_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pose-pair file " + path.string());
    return parse_pose_pairs(in);
}

inline void write_pose_pairs(std::ostream& out, const std::vector<MotionPair>& pairs) {
    out << std::setprecision(17);
    auto put = [&](const RigidTransform& t) {
        const auto& q = t.quaternion();
        out << t.translation().x() << ' ' << t.translation().y() << ' ' << t.translation().z() << ' ' << q.w() << ' '
            << q.x() << ' ' << q.y() << ' ' << q.z();
    };
    for (const auto& p : pairs) {
        put(p.a);
        out << ' ';
        put(p.b);
        out << '\n';
    }
}

} // namespace asee
