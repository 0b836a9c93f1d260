// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_SIM_HPP
#define EGA_SIM_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ega/geom.hpp"
#include "ega/qep.hpp"

namespace ega {

enum class Trajectory { LateralSweep, Orbit, SmallHeadMotion };

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int n_keyframes = 6;
  Trajectory trajectory = Trajectory::LateralSweep;
  double true_theta_deg = 180.0;
  Eigen::Vector3d true_translation = Eigen::Vector3d(3.0, 0.0, 0.0);
  Eigen::Vector3d lever_l = Eigen::Vector3d(0.0, 0.05, 0.08);
  Eigen::Vector3d lever_k = Eigen::Vector3d(0.0, 0.05, 0.08);
  double pixel_sigma = 0.0;
  double outlier_fraction = 0.0;
  double lever_prior_shift = 0.10;
  CameraIntrinsics intrinsics;  // defaulted in default_scenario_config()
  RigCalibration rig;
  bool allow_critical_theta = false;  // permit true_theta == 0 (critical-config tests)

  void validate() const;
};

/// VGA pinhole, f = 500 px, stereo cameras at (+-0.07, 0, 0) in the IMU frame
/// (IMU axes: x right, y forward, z up), camera slightly offset from the IMU.
ScenarioConfig default_scenario_config();

struct SimDetection {
  int frame = 0;  // keyframe index
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  bool outlier = false;
};

struct Scenario {
  ScenarioConfig config;
  AlignmentEstimate ground_truth;
  std::vector<Pose6D> stream_a;  // A's IMU poses in A's local frame (= common)
  std::vector<Pose6D> stream_b;  // B's IMU poses in B's local frame
  std::vector<SimDetection> detections_a;  // A observes B's lever L
  std::vector<SimDetection> detections_b;  // B observes A's lever K
  std::vector<PointCorrespondence> correspondences;  // interleaved per keyframe
  std::vector<bool> outlier_labels;                  // parallel to correspondences
  std::array<Eigen::Vector3d, 8> cube;               // vertices, common frame
  int dropped_detections = 0;
};

/// Deterministic two-rig scenario with mutual lever-arm tracklets. Lever arms
/// lie on the stereo symmetry plane so that every constraint mode is exact.
Scenario generate(const ScenarioConfig& config);

struct CubeError {
  double mean_px = 0.0;
  int pairs_used = 0;
  int pairs_excluded = 0;  // vertex behind a camera under either transform
};

/// Mean pixel displacement of the 8 cube vertices projected into B's frames
/// through the estimated vs. the ground-truth relative transform.
CubeError cube_reprojection_error(const AlignmentEstimate& estimate, const Scenario& scenario);

/// Lever-arm priors shifted from ground truth; multiplicative per axis by
/// default (value * (1 + shift)), additive (+shift per axis) on request.
std::pair<Eigen::Vector3d, Eigen::Vector3d> perturb_lever_priors(const Scenario& scenario,
                                                                 double shift_fraction,
                                                                 bool additive = false);

/// Solver variants for the noise sweep.
struct SweepVariant {
  std::string code;        // CSV label
  bool bidirectional = true;
  ConstraintMode::Kind constraint = ConstraintMode::Kind::None;
  bool rect_qep = false;
  bool refine_gbp = false;
};

SweepVariant parse_sweep_variant(const std::string& code);

struct SweepRow {
  std::string variant;
  double sigma = 0.0;
  int trial = 0;
  double error_px = 0.0;  // NaN when failed
  bool converged = false;
  int iterations = 0;
};

/// Generates, solves and scores every (sigma, variant, trial) cell. Scenario
/// seeds depend only on (sigma index, trial), so variants see paired data.
/// Individual solver failures become failed rows and never abort the sweep.
std::vector<SweepRow> sweep_noise(const ScenarioConfig& base, std::span<const double> sigmas,
                                  int n_trials, std::span<const SweepVariant> variants);

/// Cell statistics of a sweep (failed rows excluded from the quantiles).
struct SweepCell {
  std::string variant;
  double sigma = 0.0;
  int trials = 0;
  int failures = 0;
  double mean_px = 0.0;
  double median_px = 0.0;
};

std::vector<SweepCell> aggregate_sweep(std::span<const SweepRow> rows);

/// Runs one sweep variant on an existing scenario (shared by sweep_noise and
/// the CLI). Returns the estimate; `iterations` reports GBP iterations when
/// the variant refines.
AlignmentEstimate run_sweep_variant(const Scenario& scenario, const SweepVariant& variant,
                                    int* iterations = nullptr);

}  // namespace ega

#endif
