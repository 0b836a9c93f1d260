// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_RANSAC_HPP
#define EGA_RANSAC_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "ega/qep.hpp"

namespace ega {

struct RansacConfig {
  int max_iterations = 500;
  double inlier_threshold = 1e-3;  // per-point algebraic residual, ray-cross units
  double min_inlier_ratio = 0.5;
  double early_exit_ratio = 0.95;
  std::uint64_t seed = 0;
};

struct RansacResult {
  AlignmentEstimate estimate;
  std::vector<bool> inlier_mask;
  int iterations_run = 0;
};

/// RANSAC around the minimal solver: seeded stratified minimal samples (at
/// least one point per direction in bidirectional mode), hypotheses scored by
/// inlier count under the per-point algebraic residual threshold, final refit
/// of the overconstrained pencil on the inlier set. Deterministic for a fixed
/// seed. Throws RobustFailureError when no hypothesis reaches
/// min_inlier_ratio.
RansacResult ransac_align(std::span<const PointCorrespondence> correspondences,
                          const SolveOptions& opts, const RigCalibration& rig,
                          const RansacConfig& config);

}  // namespace ega

#endif
