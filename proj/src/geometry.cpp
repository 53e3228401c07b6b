#include "mvinpaint/geometry.hpp"

#include <cmath>

namespace mvi {

Pose::Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
    : rotation(q.normalized()), translation(t) {}

Pose::Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t)
    : rotation(Eigen::Quaterniond(r).normalized()), translation(t) {}

Pose::Pose(const Eigen::Matrix4d& m)
    : Pose(Eigen::Matrix3d(m.topLeftCorner<3, 3>()), Eigen::Vector3d(m.topRightCorner<3, 1>())) {}

Pose Pose::inverse() const {
    Eigen::Quaterniond qi = rotation.conjugate();
    return Pose(qi, -(qi * translation));
}

Pose Pose::operator*(const Pose& other) const {
    return Pose(rotation * other.rotation, rotation * other.translation + translation);
}

Eigen::Vector3d Pose::operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
}

Eigen::Matrix4d Pose::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
}

double Pose::angle() const {
    double w = std::min(1.0, std::abs(rotation.w()));
    double v = rotation.vec().norm();
    return 2.0 * std::atan2(v, w);
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

namespace {

// Left Jacobian of SO(3) and its inverse.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
    double theta = phi.norm();
    Eigen::Matrix3d k = skew(phi);
    if (theta < 1e-8) return Eigen::Matrix3d::Identity() + 0.5 * k;
    double t2 = theta * theta;
    return Eigen::Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * k +
           (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
    double theta = phi.norm();
    Eigen::Matrix3d k = skew(phi);
    if (theta < 1e-8) return Eigen::Matrix3d::Identity() - 0.5 * k;
    double t2 = theta * theta;
    double c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
    return Eigen::Matrix3d::Identity() - 0.5 * k + c * k * k;
}

}  // namespace

Pose se3_exp(const Vec6& xi) {
    Eigen::Vector3d rho = xi.head<3>();
    Eigen::Vector3d phi = xi.tail<3>();
    double theta = phi.norm();
    Eigen::Quaterniond q = theta < 1e-12
                               ? Eigen::Quaterniond(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z())
                               : Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
    return Pose(q, so3_left_jacobian(phi) * rho);
}

Vec6 se3_log(const Pose& pose) {
    Eigen::Quaterniond q = pose.rotation;
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    double v = q.vec().norm();
    Eigen::Vector3d phi;
    if (v < 1e-12) {
        phi = 2.0 * q.vec();
    } else {
        double theta = 2.0 * std::atan2(v, q.w());
        phi = q.vec() / v * theta;
    }
    Vec6 xi;
    xi.head<3>() = so3_left_jacobian_inverse(phi) * pose.translation;
    xi.tail<3>() = phi;
    return xi;
}

}  // namespace mvi
