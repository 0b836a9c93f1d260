// SPDX-License-Identifier: Apache-2.0

#ifndef EGA_QEP_HPP
#define EGA_QEP_HPP

#include <Eigen/Core>
#include <array>
#include <span>
#include <utility>
#include <vector>

#include "ega/geom.hpp"

namespace ega {

/// Which rig observes which: AseesB means A's camera tracks the lever point L
/// on the B-wearer; BseesA means B's camera tracks K on the A-wearer.
enum class Direction { AseesB, BseesA };

/// One tracked-point observation with the poses valid at its timestamp.
struct PointCorrespondence {
  Direction direction = Direction::AseesB;
  Eigen::Vector3d ray = Eigen::Vector3d::UnitZ();  // unit, observer camera frame
  Pose6D observer_cam_pose;  // camera in the observer's local world
  Pose6D target_imu_pose;    // tracked rig's IMU in its own local world
};

/// Per-lever-arm conditioning constraint ([c1]-[c4], or none).
struct ConstraintMode {
  enum class Kind { None, SymmetryHard, SymmetrySoft, PriorHard, PriorSoft };
  Kind kind = Kind::None;
  Eigen::Vector3d prior = Eigen::Vector3d::Zero();  // IMU frame, Prior* kinds
  double weight = 1.0;                              // *Soft kinds, > 0

  static ConstraintMode none() { return {}; }
  static ConstraintMode symmetry_hard() { return {Kind::SymmetryHard, {}, 1.0}; }
  static ConstraintMode symmetry_soft(double w = 1.0) { return {Kind::SymmetrySoft, {}, w}; }
  static ConstraintMode prior_hard(const Eigen::Vector3d& p) { return {Kind::PriorHard, p, 1.0}; }
  static ConstraintMode prior_soft(const Eigen::Vector3d& p, double w = 1.0) {
    return {Kind::PriorSoft, p, w};
  }
};

/// Reconstruction of one lever arm from its pencil columns:
/// lever = basis * slice + offset. PriorHard has 0 columns, SymmetryHard 2.
struct LeverMap {
  bool present = false;  // direction occurs in the data
  Eigen::Matrix<double, 3, Eigen::Dynamic> basis = Eigen::Matrix3d::Identity();
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  int cols() const { return present ? static_cast<int>(basis.cols()) : 0; }
  Eigen::Vector3d reconstruct(const Eigen::VectorXd& slice) const {
    return basis * slice + offset;
  }
};

/// Column layout of the pencil unknown vector: [L-slice | K-slice | t | 1].
struct UnknownLayout {
  LeverMap lever_l;  // B-wearer's tracked point, B IMU frame
  LeverMap lever_k;  // A-wearer's tracked point, A IMU frame

  int l_begin() const { return 0; }
  int k_begin() const { return lever_l.cols(); }
  int t_begin() const { return lever_l.cols() + lever_k.cols(); }
  int cols() const { return t_begin() + 4; }  // + t(3) + homogeneous
};

/// The stacked design matrices of (D0 + D1 s + D2 s^2) x = 0.
struct QepPencil {
  Eigen::MatrixXd D0, D1, D2;  // m x n, homogeneous column last
  UnknownLayout layout;

  int rows() const { return static_cast<int>(D0.rows()); }
  int cols() const { return static_cast<int>(D0.cols()); }
  Eigen::MatrixXd at(double s) const { return D0 + s * D1 + s * s * D2; }
};

/// Relative transform between the local frames plus recovered lever arms.
struct AlignmentEstimate {
  double s = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // R_B^A
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // t_B^A
  Eigen::Vector3d lever_l = Eigen::Vector3d::Zero();
  Eigen::Vector3d lever_k = Eigen::Vector3d::Zero();
  bool has_lever_l = false;
  bool has_lever_k = false;
  double residual = 0.0;  // algebraic residual of the pencil at the solution
  Eigen::VectorXd raw_x;  // layout-ordered solution vector, diagnostics

  double theta() const { return 2.0 * std::atan2(1.0, s); }  // radians, (0, 2*pi)
};

/// Constant (A), linear (B) and quadratic (C) coefficient rows of one point,
/// grouped by powers of s. Unknowns [lever(3); t(3); 1], lever is L for
/// AseesB rows and K for BseesA rows.
struct PointRows {
  Eigen::Matrix<double, 3, 7> a, b, c;
};

/// Rows of the canonical direction (Eq. of camera A observing lever L).
/// Precondition: c.direction == AseesB.
PointRows build_onedir_rows(const PointCorrespondence& c, const Eigen::Vector3d& g);

/// Rows of the reverse direction (camera B observing lever K); the relative
/// rotation enters transposed, flipping the sign pattern on the t columns.
/// Precondition: c.direction == BseesA.
PointRows build_bidir_rows(const PointCorrespondence& c, const Eigen::Vector3d& g);

/// Minimal number of correspondences for the given constraint configuration.
int minimal_point_count(std::span<const PointCorrespondence> correspondences,
                        const ConstraintMode& mode_l, const ConstraintMode& mode_k);

/// Stacks per-point rows into the pencil, applying the lever-arm constraints.
/// Each point's three row blocks are normalized to unit Frobenius norm so that
/// per-point residuals are comparable. Soft constraint rows go into D0.
/// `rig_l` conditions L (the B-wearer's plane), `rig_k` conditions K.
QepPencil assemble_pencil(std::span<const PointCorrespondence> correspondences,
                          const ConstraintMode& mode_l, const ConstraintMode& mode_k,
                          const RigCalibration& rig_l, const RigCalibration& rig_k,
                          const Eigen::Vector3d& g);

/// Shared-rig overload (both wearers use the same glasses model).
QepPencil assemble_pencil(std::span<const PointCorrespondence> correspondences,
                          const ConstraintMode& mode_l, const ConstraintMode& mode_k,
                          const RigCalibration& rig, const Eigen::Vector3d& g);

/// One point's rows mapped into the pencil layout (same constraint handling
/// and normalization as assemble_pencil); used for holdout / inlier scoring.
std::array<Eigen::MatrixXd, 3> point_rows_in_layout(const PointCorrespondence& c,
                                                    const UnknownLayout& layout,
                                                    const Eigen::Vector3d& g);

/// Candidate eigenpair: scalar s and the dehomogenized layout vector (last
/// component 1).
using QepSolution = std::pair<double, Eigen::VectorXd>;

/// Solves the normal-equation square pencil (D0^T D0 + D0^T D1 s + D0^T D2 s^2)
/// by companion-form linearization. Complex eigenvalues and solutions at
/// infinity are discarded. Throws SolverDegenerateError when both the forward
/// and the reversed (s -> 1/sigma) companion forms are singular.
std::vector<QepSolution> solve_square_qep(const QepPencil& pencil);

struct RectQepResult {
  std::vector<QepSolution> solutions;
  bool fell_back_to_square = false;
};

/// Rectangular QEP refinement: per seed, minimizes the smallest singular value
/// of D(s) over s within +-0.5 of the seed (golden section); x is the right
/// singular vector at the optimum. Duplicate minima (|ds| < 1e-6) are merged.
RectQepResult solve_rect_qep(const QepPencil& pencil, std::span<const double> seeds);

/// Keeps real solutions with pan angle in [1, 359] deg and materializes
/// estimates with the algebraic pencil residual. May return an empty list.
std::vector<AlignmentEstimate> filter_solutions(const QepPencil& pencil,
                                                std::span<const QepSolution> candidates,
                                                const Eigen::Vector3d& g);

/// Picks the candidate with the smallest algebraic residual on the holdout
/// point; ties broken towards theta = 180 deg. Throws NoSolutionError on an
/// empty candidate list.
AlignmentEstimate select_solution(std::span<const AlignmentEstimate> candidates,
                                  const PointCorrespondence& holdout,
                                  const UnknownLayout& layout, const Eigen::Vector3d& g);

struct SolveOptions {
  ConstraintMode mode_l;
  ConstraintMode mode_k;
  bool use_rect_qep = false;
  Eigen::Vector3d g = Eigen::Vector3d::UnitZ();
};

/// Full single-shot pipeline: assemble on all but the last correspondence
/// (the holdout), solve, filter, select on the holdout.
AlignmentEstimate solve_alignment(std::span<const PointCorrespondence> correspondences,
                                  const SolveOptions& opts, const RigCalibration& rig);

struct CriticalDetectResult {
  AlignmentEstimate estimate;
  bool critical = false;
  std::array<bool, 3> run_succeeded{false, false, false};
};

/// Runs the solver three times (original and with B's local frame pre-rotated
/// about g by 120 and 240 deg, de-rotated afterwards) and votes: if no two
/// runs agree, or the consensus pan is in the excluded zone around 0 deg, the
/// configuration is flagged critical.
CriticalDetectResult detect_critical(std::span<const PointCorrespondence> correspondences,
                                     const SolveOptions& opts, const RigCalibration& rig);

struct DeterminantPolynomial {
  Eigen::Matrix<double, 5, 1> quartic;   // c0 + c1 s + ... + c4 s^4
  Eigen::Matrix<double, 7, 1> degree6;   // before division by (1 + s^2)
  double remainder_rel = 0.0;            // |remainder| / |degree6 coeffs|
};

/// Verification oracle for the minimal 3-point one-directional SymmetryHard
/// problem: eliminates t through the projector complement of the t-columns
/// (which is independent of s), fits the 3x3 determinant polynomial, and
/// divides out the (1 + s^2) factor. Throws InternalConsistencyError when the
/// projector depends on s, which indicates broken row construction.
DeterminantPolynomial determinant_polynomial(const QepPencil& pencil);

/// Complex roots of a real polynomial (ascending coefficients), via the
/// companion matrix of the normalized polynomial.
std::vector<std::complex<double>> polynomial_roots(const Eigen::VectorXd& coeffs);

}  // namespace ega

#endif
