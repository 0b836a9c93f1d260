// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_GEOM_HPP
#define EGA_GEOM_HPP

#include <Eigen/Core>
#include <optional>

#include "ega/errors.hpp"

namespace ega {

/// Default world convention: gravity axis is +z in every local frame.
inline Eigen::Vector3d gravity_axis() { return Eigen::Vector3d::UnitZ(); }

/// Timestamped rigid transform of a body frame in a local world frame
/// (world-from-body): X_world = rotation * X_body + translation.
struct Pose6D {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double time = 0.0;

  Eigen::Vector3d to_world(const Eigen::Vector3d& x_body) const {
    return rotation * x_body + translation;
  }
  Eigen::Vector3d to_body(const Eigen::Vector3d& x_world) const {
    return rotation.transpose() * (x_world - translation);
  }
  Pose6D inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation), time};
  }

  /// Orthonormality check, ||R^T R - I|| < tol and det = +1.
  bool is_valid_rotation(double tol = 1e-9) const;
};

/// 1-DoF rotation about the gravity axis, parametrized by the scalar s with
/// theta = 2*atan2(1, s).
struct GravityRotation {
  double s = 0.0;
  Eigen::Vector3d g = Eigen::Vector3d::UnitZ();

  Eigen::Matrix3d matrix() const;
  double angle() const;  // radians, in (0, 2*pi)
};

/// Pinhole calibration, pixels. K upper triangular with K(2,2) = 1.
struct CameraIntrinsics {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  int width = 0;
  int height = 0;

  bool contains(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() <= width && px.y() >= 0.0 && px.y() <= height;
  }
};

/// Camera-IMU rig: camera extrinsics and the stereo camera positions in the
/// IMU frame (used to construct the face symmetry plane).
struct RigCalibration {
  Eigen::Matrix3d cam_from_imu_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d cam_from_imu_translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d left_cam_in_imu = Eigen::Vector3d::Zero();
  Eigen::Vector3d right_cam_in_imu = Eigen::Vector3d::Zero();

  /// Camera pose in the local world given the IMU pose (world-from-camera).
  Pose6D camera_pose(const Pose6D& imu_pose) const;
};

/// Plane n^T x + d = 0 in the IMU frame, through the stereo midpoint.
struct SymmetryPlane {
  Eigen::Vector3d n = Eigen::Vector3d::UnitX();
  double d = 0.0;
  Eigen::Vector3d midpoint = Eigen::Vector3d::Zero();

  /// Orthonormal basis of the plane through `midpoint`: x = midpoint + B*[a;b].
  Eigen::Matrix<double, 3, 2> tangent_basis() const;
};

/// Cross-product matrix: skew(v) * w == v x w.
Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Quaternion-based gravity rotation: R(s) = (2(g g^T + s [g]x) + (s^2-1) I) / (1+s^2).
/// Throws InvalidInputError if g is not unit length.
Eigen::Matrix3d rotation_from_s(double s, const Eigen::Vector3d& g);

/// Inverse of rotation_from_s. R must be a rotation about g (||Rg - g|| < 1e-6).
/// Throws CriticalConfigurationError when the angle is zero (s infinite).
double s_from_rotation(const Eigen::Matrix3d& R, const Eigen::Vector3d& g);

/// Signed pan angle of a rotation about g, in (-pi, pi].
double pan_angle(const Eigen::Matrix3d& R, const Eigen::Vector3d& g);

/// Unit ray N(K^-1 [u;1]) in the camera frame.
Eigen::Vector3d backproject(const Eigen::Vector2d& u, const CameraIntrinsics& K);

/// Symmetry plane through the stereo midpoint with normal along the baseline.
/// Throws InvalidInputError when the cameras coincide.
SymmetryPlane symmetry_plane(const RigCalibration& rig);

/// Pixel projection of a world point through a world-from-camera pose.
/// Empty when the point is not in front of the camera.
std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& intr,
                                             const Pose6D& cam_pose,
                                             const Eigen::Vector3d& x_world);

/// z-rotation by theta (pan about the +z gravity axis).
Eigen::Matrix3d rot_z(double theta);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double theta);

}  // namespace ega

#endif
