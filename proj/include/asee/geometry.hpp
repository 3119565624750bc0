#pragma once

// Frames, rigid transforms, twists and point clouds.
//
// Convention (column vectors throughout): a RigidTransform T_a_b maps
// coordinates expressed in frame b into frame a, p_a = R * p_b + t.
// compose(T_a_b, T_b_c) == T_a_c.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "asee/errors.hpp"

namespace asee {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

class RigidTransform {
public:
    RigidTransform() = default;

    RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation)
        : rotation_(rotation.normalized()), translation_(translation) {}

    RigidTransform(const Mat3& rotation, const Vec3& translation)
        : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

    static RigidTransform identity() { return {}; }

    static RigidTransform from_translation(const Vec3& t) {
        return {Eigen::Quaterniond::Identity(), t};
    }

    static RigidTransform from_rotation(const Eigen::AngleAxisd& aa) {
        return {Eigen::Quaterniond(aa), Vec3::Zero()};
    }

    static RigidTransform from_matrix(const Mat4& m) {
        return {Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>())};
    }

    const Eigen::Quaterniond& quaternion() const { return rotation_; }
    Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
    const Vec3& translation() const { return translation_; }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation_matrix();
        m.topRightCorner<3, 1>() = translation_;
        return m;
    }

    Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
    Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

    RigidTransform inverse() const {
        const Eigen::Quaterniond inv = rotation_.conjugate();
        return {inv, -(inv * translation_)};
    }

    /// this ∘ other: maps a point through `other`, then through `this`.
    RigidTransform operator*(const RigidTransform& other) const {
        Eigen::Quaterniond q = rotation_ * other.rotation_;
        q.normalize();
        return {q, rotation_ * other.translation_ + translation_};
    }

private:
    Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
    Vec3 translation_ = Vec3::Zero();
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

struct Twist {
    Vec3 linear = Vec3::Zero();   // m/s
    Vec3 angular = Vec3::Zero();  // rad/s

    /// Linear stacked over angular.
    Vec6 stacked() const {
        Vec6 v;
        v << linear, angular;
        return v;
    }

    static Twist from_stacked(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty, or aligned with points
    std::string frame_id;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !normals.empty(); }
};

inline Mat3 skew(const Vec3& p) {
    Mat3 m;
    m << 0.0, -p.z(), p.y(),
         p.z(), 0.0, -p.x(),
         -p.y(), p.x(), 0.0;
    return m;
}

inline PointCloud transform_cloud(const RigidTransform& t, const PointCloud& c) {
    PointCloud out;
    out.frame_id = c.frame_id;
    out.points.reserve(c.points.size());
    const Mat3 r = t.rotation_matrix();
    for (const auto& p : c.points) out.points.push_back(r * p + t.translation());
    out.normals.reserve(c.normals.size());
    for (const auto& n : c.normals) out.normals.push_back(r * n);
    return out;
}

/// Body twist of frame b (expressed in b) to the same motion expressed in
/// frame a, given T_a_b: v_a = R v + [p] R w, w_a = R w.
inline Twist adjoint_map(const RigidTransform& t, const Twist& body) {
    const Mat3 r = t.rotation_matrix();
    const Vec3 rw = r * body.angular;
    return {r * body.linear + skew(t.translation()) * rw, rw};
}

/// Angle between two nonzero vectors, degrees in [0, 180].
inline double angle_between(const Vec3& a, const Vec3& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("angle_between: zero-length vector");
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return rad2deg(std::acos(c));
}

/// Unit-length check shared by several modules.
inline bool is_unit(const Vec3& v, double tol = 1e-6) { return std::abs(v.norm() - 1.0) <= tol; }

} // namespace asee
