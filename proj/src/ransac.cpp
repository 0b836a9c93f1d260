// SPDX-License-Identifier: Apache-2.0

#include "ega/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ega {

namespace {

struct ScoredHypothesis {
  AlignmentEstimate estimate;
  std::vector<bool> mask;
  int inliers = 0;
  double inlier_residual = 0.0;
  bool valid = false;
};

double point_residual(const std::array<Eigen::MatrixXd, 3>& rows, double s,
                      const Eigen::VectorXd& x) {
  return ((rows[0] + s * rows[1] + s * s * rows[2]) * x).norm();
}

}  // namespace

RansacResult ransac_align(std::span<const PointCorrespondence> correspondences,
                          const SolveOptions& opts, const RigCalibration& rig,
                          const RansacConfig& config) {
  const int n = static_cast<int>(correspondences.size());
  const int minimal = n == 0 ? 1 : minimal_point_count(correspondences, opts.mode_l, opts.mode_k);
  if (n < minimal + 1) throw UnderConstrainedError(minimal + 1, n);

  std::vector<int> dir_a, dir_b;
  for (int i = 0; i < n; ++i) {
    (correspondences[i].direction == Direction::AseesB ? dir_a : dir_b).push_back(i);
  }
  const bool bidirectional = !dir_a.empty() && !dir_b.empty();

  // sampling sequence depends only on the seed, never on evaluation results
  std::vector<std::vector<int>> samples(config.max_iterations);
  {
    std::mt19937_64 rng(config.seed);
    auto pick = [&rng](std::vector<int>& pool) {
      std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
      const std::size_t j = d(rng);
      const int v = pool[j];
      pool[j] = pool.back();
      pool.pop_back();
      return v;
    };
    for (auto& sample : samples) {
      std::vector<int> pool_a = dir_a, pool_b = dir_b;
      std::vector<int> pool;
      sample.clear();
      if (bidirectional) {
        sample.push_back(pick(pool_a));  // stratified draw, one per direction
        sample.push_back(pick(pool_b));
      }
      pool = pool_a;
      pool.insert(pool.end(), pool_b.begin(), pool_b.end());
      while (static_cast<int>(sample.size()) < minimal && !pool.empty()) {
        sample.push_back(pick(pool));
      }
      std::sort(sample.begin(), sample.end());
    }
  }

  // shared layout/rows for scoring; identical to every sample's layout since
  // the constraint modes and direction presence are fixed
  const QepPencil full = assemble_pencil(correspondences, opts.mode_l, opts.mode_k, rig, opts.g);
  std::vector<std::array<Eigen::MatrixXd, 3>> rows(n);
  for (int i = 0; i < n; ++i) {
    rows[i] = point_rows_in_layout(correspondences[i], full.layout, opts.g);
  }

  auto score = [&](const AlignmentEstimate& est) {
    ScoredHypothesis h;
    h.estimate = est;
    h.mask.assign(n, false);
    for (int i = 0; i < n; ++i) {
      const double r = point_residual(rows[i], est.s, est.raw_x);
      if (r < config.inlier_threshold) {
        h.mask[i] = true;
        ++h.inliers;
        h.inlier_residual += r * r;
      }
    }
    h.valid = true;
    return h;
  };

  auto better = [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
    if (a.inliers != b.inliers) return a.inliers > b.inliers;
    if (a.inlier_residual != b.inlier_residual) return a.inlier_residual < b.inlier_residual;
    return a.estimate.s < b.estimate.s;
  };

  RansacResult result;
  ScoredHypothesis best;
  for (const auto& sample : samples) {
    ++result.iterations_run;
    std::vector<PointCorrespondence> subset;
    subset.reserve(sample.size());
    for (int i : sample) subset.push_back(correspondences[i]);
    try {
      const QepPencil pencil = assemble_pencil(subset, opts.mode_l, opts.mode_k, rig, opts.g);
      const auto sols = solve_square_qep(pencil);
      for (const auto& est : filter_solutions(pencil, sols, opts.g)) {
        ScoredHypothesis h = score(est);
        if (!best.valid || better(h, best)) best = std::move(h);
      }
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    if (best.valid &&
        best.inliers >= static_cast<int>(std::ceil(config.early_exit_ratio * n))) {
      break;
    }
  }

  const int required = static_cast<int>(std::ceil(config.min_inlier_ratio * n));
  if (!best.valid || best.inliers < required) {
    throw RobustFailureError("ransac_align: no hypothesis reached the inlier ratio",
                             best.valid ? best.inliers : 0,
                             best.valid ? static_cast<double>(best.inliers) / n : 0.0);
  }

  // refit the overconstrained pencil on the inlier set; keep the better of
  // refit and hypothesis under the same inlier count / residual ordering
  std::vector<PointCorrespondence> inlier_set;
  int in_a = 0, in_b = 0;
  for (int i = 0; i < n; ++i) {
    if (!best.mask[i]) continue;
    inlier_set.push_back(correspondences[i]);
    (correspondences[i].direction == Direction::AseesB ? in_a : in_b) += 1;
  }
  const bool refit_ok = !bidirectional || (in_a >= 1 && in_b >= 1);
  if (refit_ok && static_cast<int>(inlier_set.size()) >= minimal + 1) {
    try {
      ScoredHypothesis refit = score(solve_alignment(inlier_set, opts, rig));
      if (better(refit, best)) best = std::move(refit);
    } catch (const Error&) {
      // keep the minimal hypothesis
    }
  }

  result.estimate = best.estimate;
  result.inlier_mask = best.mask;
  return result;
}

}  // namespace ega
