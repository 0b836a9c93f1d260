// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_SESSION_IO_HPP
#define EGA_SESSION_IO_HPP

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ega/factor_graph.hpp"
#include "ega/qep.hpp"
#include "ega/sim.hpp"

namespace ega {

/// One tracked-point detection record: observer stream, timestamp, pixel.
struct DetectionRecord {
  std::string observer;
  double time = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

/// In-memory form of a session file (line-delimited JSON records).
struct SessionData {
  struct Stream {
    std::vector<Pose6D> poses;
    CameraIntrinsics intrinsics;
    RigCalibration rig;
    bool has_intrinsics = false;
    bool has_rig = false;
  };
  std::map<std::string, Stream> streams;
  std::vector<DetectionRecord> detections;
};

/// Floats are serialized with 17 significant digits so the round trip is
/// bit exact.
void write_session(const std::string& path, const SessionData& session);
SessionData read_session(const std::string& path);

/// Ground-truth sidecar written next to simulated sessions.
struct TruthSidecar {
  AlignmentEstimate truth;
  std::array<Eigen::Vector3d, 8> cube{};
  Eigen::Vector3d prior_l = Eigen::Vector3d::Zero();  // suggested shifted priors
  Eigen::Vector3d prior_k = Eigen::Vector3d::Zero();
  std::vector<bool> outliers_a;
  std::vector<bool> outliers_b;
};

void write_sidecar(const std::string& path, const TruthSidecar& sidecar);
TruthSidecar read_sidecar(const std::string& path);

struct EstimateRecord {
  AlignmentEstimate estimate;
  int inliers = -1;  // -1 when RANSAC was not run
  bool critical = false;
};

void write_estimate(const std::string& path, const EstimateRecord& record);
std::string estimate_to_json(const EstimateRecord& record);
EstimateRecord read_estimate(const std::string& path);

/// Sweep rows as CSV: variant,sigma,trial,error_px,converged,iterations with
/// the literal "failed" in error_px for failed rows.
void write_sweep_csv(const std::string& path, std::span<const SweepRow> rows);
void write_sweep_summary_csv(const std::string& path, std::span<const SweepCell> cells);

/// Session <-> solver/scenario adapters.
SessionData session_from_scenario(const Scenario& scenario);

struct SessionView {
  std::vector<PointCorrespondence> correspondences;
  // per correspondence: observer/target frame index (time-matched)
  std::vector<int> frames;
  CameraStream stream_a;
  CameraStream stream_b;
  std::vector<GraphDetection> detections_a;
  std::vector<GraphDetection> detections_b;
};

/// Resolves every detection against the pose streams (streams "A" and "B")
/// within the time tolerance. Throws InputConsistencyError when a detection
/// has no matching pose on either stream.
SessionView resolve_session(const SessionData& session, double time_tolerance = 1e-3);

/// Scenario configs and sweep configs as single JSON documents.
ScenarioConfig read_scenario_config(const std::string& path);

struct SweepConfig {
  ScenarioConfig base;
  std::vector<double> sigmas;
  int trials = 100;
  std::vector<std::string> variants;
};

SweepConfig read_sweep_config(const std::string& path);

}  // namespace ega

#endif
