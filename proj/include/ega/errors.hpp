// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_ERRORS_HPP
#define EGA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ega {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated (non-unit vector, singular
/// calibration matrix, coincident cameras, ...).
struct InvalidInputError : Error {
  using Error::Error;
};

/// Not enough correspondences for the requested constraint configuration.
struct UnderConstrainedError : Error {
  UnderConstrainedError(int required_points, int provided_points)
      : Error("under-constrained problem: " + std::to_string(required_points) +
              " points required, " + std::to_string(provided_points) + " provided"),
        required(required_points),
        provided(provided_points) {}
  int required;
  int provided;
};

/// The solver produced no admissible solution.
struct NoSolutionError : Error {
  using Error::Error;
};

/// The relative pan angle is (numerically) zero; s = 1/tan(theta/2) diverges.
struct CriticalConfigurationError : Error {
  using Error::Error;
};

/// Both companion linearizations of the QEP are numerically singular.
struct SolverDegenerateError : Error {
  using Error::Error;
};

/// RANSAC could not reach the requested inlier ratio.
struct RobustFailureError : Error {
  RobustFailureError(const std::string& what, int best_inliers_found, double best_ratio)
      : Error(what), best_inliers(best_inliers_found), best_inlier_ratio(best_ratio) {}
  int best_inliers;
  double best_inlier_ratio;
};

/// A detection references a pose that does not exist, or streams disagree.
struct InputConsistencyError : Error {
  using Error::Error;
};

/// Internal identity violated; indicates a bug in row construction.
struct InternalConsistencyError : Error {
  using Error::Error;
};

/// The stacked information matrix is singular (missing pose priors).
struct GaugeDeficiencyError : Error {
  using Error::Error;
};

}  // namespace ega

#endif
