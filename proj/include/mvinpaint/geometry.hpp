#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mvi {

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Rigid transform in SE(3). Stored as unit quaternion + translation.
///
/// Naming convention: a Pose called `a_from_b` maps points expressed in
/// frame b into frame a, i.e. p_a = a_from_b * p_b. Camera poses read from
/// a trajectory file are world_from_camera.
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Pose() = default;
    Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);
    Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t);
    explicit Pose(const Eigen::Matrix4d& m);

    static Pose identity() { return {}; }

    Pose inverse() const;
    Pose operator*(const Pose& other) const;
    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const;

    Eigen::Matrix4d matrix() const;
    Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

    /// Rotation angle in radians, in [0, pi].
    double angle() const;
};

/// se(3) exponential and logarithm. Tangent layout is (rho, phi):
/// translational part first, rotation vector second.
Pose se3_exp(const Vec6& xi);
Vec6 se3_log(const Pose& pose);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

}  // namespace mvi
