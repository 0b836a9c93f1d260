// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_FACTOR_GRAPH_HPP
#define EGA_FACTOR_GRAPH_HPP

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "ega/geom.hpp"
#include "ega/qep.hpp"

namespace ega {

/// Camera state: position in the common frame (anchored at A's origin) plus
/// the pan of the camera's local VIO frame w.r.t. the common frame,
/// x = (x, y, z, theta), theta wrapped to (-pi, pi].
using StateVec = Eigen::Vector4d;

/// Gaussian in information form; zero lambda means infinite uncertainty.
struct GaussianInfo {
  Eigen::Vector4d eta = Eigen::Vector4d::Zero();
  Eigen::Matrix4d lambda = Eigen::Matrix4d::Zero();

  GaussianInfo& operator+=(const GaussianInfo& o) {
    eta += o.eta;
    lambda += o.lambda;
    return *this;
  }
  friend GaussianInfo operator-(const GaussianInfo& a, const GaussianInfo& b) {
    return {a.eta - b.eta, a.lambda - b.lambda};
  }
  bool informative(double tol = 1e-9) const;
  Eigen::Vector4d mean() const;  // lambda^-1 eta (requires informative())
};

enum class FactorKind { PosePrior, Odometry, Detection };

/// Constants of a detection factor (all taken from VIO / calibration at the
/// keyframe; the states only carry position and pan).
struct DetectionContext {
  Eigen::Matrix3d cam_from_local_rot = Eigen::Matrix3d::Identity();
  Eigen::Vector3d imu_in_cam = Eigen::Vector3d::Zero();
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Vector3d lever = Eigen::Vector3d::Zero();  // target IMU frame
  Eigen::Matrix3d target_imu_rot = Eigen::Matrix3d::Identity();
};

struct Factor {
  FactorKind kind = FactorKind::PosePrior;
  int v1 = -1;
  int v2 = -1;  // -1 for unary factors
  Eigen::VectorXd z;
  Eigen::MatrixXd meas_precision;
  DetectionContext det;

  // linearization cache (Eqs. eta_f = J^T L (J y + z - h), lambda_f = J^T L J)
  Eigen::VectorXd lin_point;
  Eigen::VectorXd eta_f;
  Eigen::MatrixXd lambda_f;
  bool active = true;  // false while the target is behind the camera

  std::array<GaussianInfo, 2> inbox;   // variable -> factor
  std::array<GaussianInfo, 2> outbox;  // factor -> variable

  int n_vars() const { return v2 >= 0 ? 2 : 1; }
  int var(int slot) const { return slot == 0 ? v1 : v2; }
};

struct VariableNode {
  int id = 0;
  int camera = 0;  // 0 = A, 1 = B
  int frame = 0;   // keyframe index into the owning stream
  Pose6D vio_pose; // raw VIO IMU pose (local frame) at this keyframe
  StateVec mean = StateVec::Zero();
  GaussianInfo belief;
};

struct FactorGraph {
  std::vector<VariableNode> variables;
  std::vector<Factor> factors;
  std::vector<std::vector<int>> adjacency;  // variable id -> factor indices
  AlignmentEstimate init;
  Eigen::Vector3d lever_l = Eigen::Vector3d::Zero();
  Eigen::Vector3d lever_k = Eigen::Vector3d::Zero();

  int first_variable(int camera) const;
};

struct GraphNoiseConfig {
  double prior_a_sigma_t = 1e-6;      // gauge anchor
  double prior_a_sigma_theta = 1e-6;
  double prior_b_sigma_t = 0.3;       // loose prior seeded by the initial estimate
  double prior_b_sigma_theta = 5.0 * M_PI / 180.0;
  double odo_sigma_t_per_m = 0.005;   // 5 mm per 1 m of VIO travel
  double odo_sigma_theta_per_m = 0.1 * M_PI / 180.0;  // 0.1 deg per 1 m
  double odo_sigma_t_floor = 1e-5;
  double odo_sigma_theta_floor = 2e-7;
  double detection_sigma_px = 1.0;
  double huber_delta = 2.0;  // Mahalanobis units
  bool huber = false;        // RANSAC pre-filters outliers, so off by default
};

struct CameraStream {
  std::vector<Pose6D> imu_poses;
  CameraIntrinsics intrinsics;
  RigCalibration rig;
};

struct GraphDetection {
  int frame = 0;  // index into the observer's stream; streams are index-aligned
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

/// Builds the refinement graph: one variable per camera per detection-bearing
/// keyframe (all frames when there are no detections), odometry factors
/// between consecutive keyframes, one detection factor per observation, and
/// pose priors on both cameras' first keyframes (strong for A, loose for B,
/// seeded by `init`). Frames in detections must exist in both streams.
FactorGraph build_graph(const CameraStream& stream_a, const CameraStream& stream_b,
                        std::span<const GraphDetection> detections_a,
                        std::span<const GraphDetection> detections_b,
                        const AlignmentEstimate& init, const Eigen::Vector3d& lever_k,
                        const Eigen::Vector3d& lever_l, const GraphNoiseConfig& cfg);

struct FactorEval {
  Eigen::VectorXd h;
  Eigen::MatrixXd J;
  bool valid = true;
};

/// h = x, J = I4.
FactorEval eval_pose_prior(const StateVec& x);

/// h = [Rz(theta1)^T (p2 - p1); theta2 - theta1], J analytic.
FactorEval eval_odometry(const StateVec& x1, const StateVec& x2);

/// Pixel prediction of the tracked lever point; J has an analytic translation
/// block and finite-difference pan columns. invalid when the point is behind
/// the observer camera.
FactorEval eval_detection(const StateVec& x_obs, const StateVec& x_tgt,
                          const DetectionContext& ctx);

/// Recomputes the factor's cached information at the given states, applying
/// the Huber precision scaling when enabled and the residual exceeds delta.
void linearize(Factor& factor, std::span<const VariableNode> variables,
               const GraphNoiseConfig& cfg);

struct GbpConfig {
  double damping = 0.4;
  int relinearize_every = 5;
  int max_iterations = 200;
  double tol_translation = 1e-6;  // meters
  double tol_theta = 1e-6;        // radians
  bool freeze_linearization = false;  // linearize once at the initial means
  GraphNoiseConfig noise;
  std::ostream* trace = nullptr;  // optional per-iteration state dump (JSONL)
};

struct GbpReport {
  bool converged = false;
  int iterations = 0;
  double final_max_delta = 0.0;
  int deactivated_factor_evals = 0;
  int skipped_messages = 0;
};

/// Synchronous loopy GBP with damped factor-to-variable messages. Beliefs and
/// means are updated in place.
GbpReport gbp_iterate(FactorGraph& graph, const GbpConfig& cfg);

struct DenseMapResult {
  std::vector<StateVec> means;
  std::vector<Eigen::Matrix4d> covariances;  // marginal blocks of the inverse
  int iterations = 0;
};

/// Reference MAP solver: stacks all linearized factors into one information
/// system with the same relinearization loop. Throws GaugeDeficiencyError
/// when the stacked precision matrix is rank deficient.
DenseMapResult dense_map_solve(const FactorGraph& graph, const GraphNoiseConfig& cfg,
                               int max_outer = 100, double tol = 1e-12,
                               bool freeze_linearization = false);

/// Relative transform recovered from B's refined state at the given keyframe
/// slot (default: B's first keyframe) against its raw VIO pose.
AlignmentEstimate extract_relative_pose(const FactorGraph& graph, int b_slot = 0);

/// Sum of (possibly wrapped) weighted squared factor residuals at the given
/// states; evaluation utility for convergence checks.
double total_weighted_residual(const FactorGraph& graph, std::span<const StateVec> states);

}  // namespace ega

#endif
