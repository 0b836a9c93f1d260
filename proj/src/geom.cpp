// SPDX-License-Identifier: Apache-2.0

#include "ega/geom.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace ega {

bool Pose6D::is_valid_rotation(double tol) const {
  const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return err.norm() < tol && rotation.determinant() > 0.0;
}

Eigen::Matrix3d GravityRotation::matrix() const { return rotation_from_s(s, g); }

double GravityRotation::angle() const { return 2.0 * std::atan2(1.0, s); }

Pose6D RigCalibration::camera_pose(const Pose6D& imu_pose) const {
  Pose6D cam;
  cam.rotation = imu_pose.rotation * cam_from_imu_rotation.transpose();
  cam.translation = imu_pose.translation - cam.rotation * cam_from_imu_translation;
  cam.time = imu_pose.time;
  return cam;
}

Eigen::Matrix<double, 3, 2> SymmetryPlane::tangent_basis() const {
  // pick the unit axis least aligned with n, orthogonalize
  int k = 0;
  n.cwiseAbs().minCoeff(&k);
  const Eigen::Vector3d e = Eigen::Vector3d::Unit(k);
  const Eigen::Vector3d b1 = (e - n.dot(e) * n).normalized();
  const Eigen::Vector3d b2 = n.cross(b1);
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = b1;
  B.col(1) = b2;
  return B;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d rotation_from_s(double s, const Eigen::Vector3d& g) {
  if (std::abs(g.norm() - 1.0) > 1e-12) {
    throw InvalidInputError("rotation_from_s: gravity axis must be unit length");
  }
  const Eigen::Matrix3d num =
      2.0 * (g * g.transpose() + s * skew(g)) + (s * s - 1.0) * Eigen::Matrix3d::Identity();
  return num / (1.0 + s * s);
}

double pan_angle(const Eigen::Matrix3d& R, const Eigen::Vector3d& g) {
  // rotate a vector orthogonal to g and read off the signed angle
  int k = 0;
  g.cwiseAbs().minCoeff(&k);
  const Eigen::Vector3d v = (Eigen::Vector3d::Unit(k) - g.dot(Eigen::Vector3d::Unit(k)) * g).normalized();
  const Eigen::Vector3d w = R * v;
  return std::atan2(g.dot(v.cross(w)), v.dot(w));
}

double s_from_rotation(const Eigen::Matrix3d& R, const Eigen::Vector3d& g) {
  if (std::abs(g.norm() - 1.0) > 1e-12) {
    throw InvalidInputError("s_from_rotation: gravity axis must be unit length");
  }
  const Eigen::Matrix3d orth = R.transpose() * R - Eigen::Matrix3d::Identity();
  if (orth.norm() > 1e-6 || R.determinant() < 0.0 || (R * g - g).norm() > 1e-6) {
    throw InvalidInputError("s_from_rotation: matrix is not a rotation about g");
  }
  const double theta = pan_angle(R, g);
  if (std::abs(theta) < 1e-9) {
    throw CriticalConfigurationError("s_from_rotation: zero pan angle, s diverges");
  }
  // s = 1/tan(theta/2); cot is pi-periodic so the (-pi, pi] branch works directly
  return std::cos(theta / 2.0) / std::sin(theta / 2.0);
}

Eigen::Vector3d backproject(const Eigen::Vector2d& u, const CameraIntrinsics& intr) {
  if (std::abs(intr.K.determinant()) < 1e-12) {
    throw InvalidInputError("backproject: calibration matrix not invertible");
  }
  const Eigen::Vector3d ray = intr.K.inverse() * u.homogeneous();
  return ray.normalized();
}

SymmetryPlane symmetry_plane(const RigCalibration& rig) {
  const Eigen::Vector3d baseline = rig.right_cam_in_imu - rig.left_cam_in_imu;
  if (baseline.norm() <= 1e-6) {
    throw InvalidInputError("symmetry_plane: stereo cameras coincide");
  }
  SymmetryPlane plane;
  plane.n = baseline.normalized();
  plane.midpoint = 0.5 * (rig.right_cam_in_imu + rig.left_cam_in_imu);
  plane.d = -plane.n.dot(plane.midpoint);
  return plane;
}

std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& intr,
                                             const Pose6D& cam_pose,
                                             const Eigen::Vector3d& x_world) {
  const Eigen::Vector3d x_cam = cam_pose.to_body(x_world);
  if (x_cam.z() <= 1e-9) return std::nullopt;
  const Eigen::Vector3d h = intr.K * x_cam;
  return Eigen::Vector2d(h.x() / h.z(), h.y() / h.z());
}

Eigen::Matrix3d rot_z(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d m;
  m << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return m;
}

double wrap_angle(double theta) {
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(theta + M_PI, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - M_PI;
}

}  // namespace ega
