// SPDX-License-Identifier: Apache-2.0

#include "ega/qep.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace ega {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

Eigen::Matrix3d gravity_reflector(const Eigen::Vector3d& g) {
  return 2.0 * (g * g.transpose()) - Eigen::Matrix3d::Identity();
}

LeverMap make_lever_map(const ConstraintMode& mode, const RigCalibration& rig) {
  LeverMap map;
  map.present = true;
  switch (mode.kind) {
    case ConstraintMode::Kind::None:
    case ConstraintMode::Kind::SymmetrySoft:
    case ConstraintMode::Kind::PriorSoft:
      map.basis = Eigen::Matrix3d::Identity();
      map.offset.setZero();
      break;
    case ConstraintMode::Kind::SymmetryHard: {
      const SymmetryPlane plane = symmetry_plane(rig);
      map.basis = plane.tangent_basis();
      map.offset = plane.midpoint;
      break;
    }
    case ConstraintMode::Kind::PriorHard:
      map.basis.resize(3, 0);
      map.offset = mode.prior;
      break;
  }
  return map;
}

int soft_row_count(const ConstraintMode& mode) {
  if (mode.kind == ConstraintMode::Kind::SymmetrySoft) return 1;
  if (mode.kind == ConstraintMode::Kind::PriorSoft) return 3;
  return 0;
}

// Maps one point's raw [lever(3) | t(3) | 1] rows into the pencil layout and
// normalizes the stacked blocks to unit Frobenius norm.
std::array<Eigen::MatrixXd, 3> map_rows(const PointRows& raw, Direction dir,
                                        const UnknownLayout& layout) {
  const int n = layout.cols();
  const LeverMap& map = dir == Direction::AseesB ? layout.lever_l : layout.lever_k;
  const int begin = dir == Direction::AseesB ? layout.l_begin() : layout.k_begin();

  std::array<Eigen::MatrixXd, 3> out;
  const Eigen::Matrix<double, 3, 7>* src[3] = {&raw.a, &raw.b, &raw.c};
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(3, n);
    const auto& m = *src[i];
    const Eigen::Matrix3d lever_coeff = m.leftCols<3>();
    if (map.cols() > 0) rows.middleCols(begin, map.cols()) = lever_coeff * map.basis;
    rows.middleCols(layout.t_begin(), 3) = m.middleCols<3>(3);
    rows.col(n - 1) = m.col(6) + lever_coeff * map.offset;
    out[i] = std::move(rows);
  }
  double scale = std::sqrt(out[0].squaredNorm() + out[1].squaredNorm() + out[2].squaredNorm());
  if (scale > 1e-300) {
    for (auto& m : out) m /= scale;
  }
  return out;
}

// Candidate eigenvector -> dehomogenized real layout vector, or empty.
bool dehomogenize(const Eigen::VectorXcd& x, Eigen::VectorXd& out) {
  const int n = static_cast<int>(x.size());
  const std::complex<double> last = x[n - 1];
  if (std::abs(last) < 1e-10 * x.norm()) return false;  // solution at infinity
  Eigen::VectorXcd scaled = x / last;
  out = scaled.real();
  out[n - 1] = 1.0;
  return out.allFinite();
}

double smallest_singular_value(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues().minCoeff();
}

}  // namespace

PointRows build_onedir_rows(const PointCorrespondence& c, const Eigen::Vector3d& g) {
  if (c.direction != Direction::AseesB) {
    throw InvalidInputError("build_onedir_rows: expected an AseesB correspondence");
  }
  const Eigen::Vector3d q = c.observer_cam_pose.rotation * c.ray;  // ray in A world
  const Eigen::Matrix3d M = skew(q);
  const Eigen::Matrix3d G2 = gravity_reflector(g);
  const Eigen::Matrix3d Gx = 2.0 * skew(g);
  const Eigen::Matrix3d& R_ib = c.target_imu_pose.rotation;
  const Eigen::Vector3d& t_ib = c.target_imu_pose.translation;
  // R_C^A t_A^C = -(camera position in A world)
  const Eigen::Vector3d cam_term = -c.observer_cam_pose.translation;

  PointRows rows;
  rows.a << M * G2 * R_ib, M, M * (G2 * t_ib + cam_term);
  rows.b << M * Gx * R_ib, Eigen::Matrix3d::Zero(), M * Gx * t_ib;
  rows.c << M * R_ib, M, M * (t_ib + cam_term);
  return rows;
}

PointRows build_bidir_rows(const PointCorrespondence& c, const Eigen::Vector3d& g) {
  if (c.direction != Direction::BseesA) {
    throw InvalidInputError("build_bidir_rows: expected a BseesA correspondence");
  }
  const Eigen::Vector3d q = c.observer_cam_pose.rotation * c.ray;  // ray in B world
  const Eigen::Matrix3d M = skew(q);
  const Eigen::Matrix3d G2 = gravity_reflector(g);
  const Eigen::Matrix3d Gx = 2.0 * skew(g);
  const Eigen::Matrix3d& R_ia = c.target_imu_pose.rotation;
  const Eigen::Vector3d& t_ia = c.target_imu_pose.translation;
  const Eigen::Vector3d cam_term = -c.observer_cam_pose.translation;

  // the relative rotation enters transposed: sign flips on the t columns
  PointRows rows;
  rows.a << M * G2 * R_ia, -M * G2, M * (G2 * t_ia + cam_term);
  rows.b << -M * Gx * R_ia, M * Gx, -M * Gx * t_ia;
  rows.c << M * R_ia, -M, M * (t_ia + cam_term);
  return rows;
}

int minimal_point_count(std::span<const PointCorrespondence> correspondences,
                        const ConstraintMode& mode_l, const ConstraintMode& mode_k) {
  bool has_a = false, has_b = false;
  for (const auto& c : correspondences) {
    (c.direction == Direction::AseesB ? has_a : has_b) = true;
  }
  int cols = 4;  // t + homogeneous
  int soft = 0;
  auto lever_cols = [](const ConstraintMode& m) {
    switch (m.kind) {
      case ConstraintMode::Kind::SymmetryHard: return 2;
      case ConstraintMode::Kind::PriorHard: return 0;
      default: return 3;
    }
  };
  if (has_a) {
    cols += lever_cols(mode_l);
    soft += soft_row_count(mode_l);
  }
  if (has_b) {
    cols += lever_cols(mode_k);
    soft += soft_row_count(mode_k);
  }
  return std::max(1, (cols - soft + 1) / 2);
}

QepPencil assemble_pencil(std::span<const PointCorrespondence> correspondences,
                          const ConstraintMode& mode_l, const ConstraintMode& mode_k,
                          const RigCalibration& rig_l, const RigCalibration& rig_k,
                          const Eigen::Vector3d& g) {
  const int n_points = static_cast<int>(correspondences.size());
  const int required = n_points == 0 ? 1 : minimal_point_count(correspondences, mode_l, mode_k);
  if (n_points < required) throw UnderConstrainedError(required, n_points);

  bool has_a = false, has_b = false;
  for (const auto& c : correspondences) {
    (c.direction == Direction::AseesB ? has_a : has_b) = true;
  }

  QepPencil pencil;
  if (has_a) pencil.layout.lever_l = make_lever_map(mode_l, rig_l);
  if (has_b) pencil.layout.lever_k = make_lever_map(mode_k, rig_k);
  const int n = pencil.layout.cols();

  int soft = 0;
  if (has_a) soft += soft_row_count(mode_l);
  if (has_b) soft += soft_row_count(mode_k);
  const int m = 3 * n_points + soft;
  pencil.D0 = Eigen::MatrixXd::Zero(m, n);
  pencil.D1 = Eigen::MatrixXd::Zero(m, n);
  pencil.D2 = Eigen::MatrixXd::Zero(m, n);

  int row = 0;
  for (const auto& c : correspondences) {
    const auto mapped = point_rows_in_layout(c, pencil.layout, g);
    pencil.D0.middleRows(row, 3) = mapped[0];
    pencil.D1.middleRows(row, 3) = mapped[1];
    pencil.D2.middleRows(row, 3) = mapped[2];
    row += 3;
  }

  // soft conditioning rows carry no s dependence and live in D0
  auto append_soft = [&](const ConstraintMode& mode, const RigCalibration& rig,
                         const LeverMap& map, int begin) {
    if (mode.kind == ConstraintMode::Kind::SymmetrySoft) {
      const SymmetryPlane plane = symmetry_plane(rig);
      pencil.D0.block(row, begin, 1, map.cols()) =
          mode.weight * (plane.n.transpose() * map.basis);
      pencil.D0(row, n - 1) = mode.weight * (plane.n.dot(map.offset) + plane.d);
      row += 1;
    } else if (mode.kind == ConstraintMode::Kind::PriorSoft) {
      pencil.D0.block(row, begin, 3, map.cols()) = -mode.weight * map.basis;
      pencil.D0.block(row, n - 1, 3, 1) = mode.weight * (mode.prior - map.offset);
      row += 3;
    }
  };
  if (has_a) append_soft(mode_l, rig_l, pencil.layout.lever_l, pencil.layout.l_begin());
  if (has_b) append_soft(mode_k, rig_k, pencil.layout.lever_k, pencil.layout.k_begin());

  return pencil;
}

QepPencil assemble_pencil(std::span<const PointCorrespondence> correspondences,
                          const ConstraintMode& mode_l, const ConstraintMode& mode_k,
                          const RigCalibration& rig, const Eigen::Vector3d& g) {
  return assemble_pencil(correspondences, mode_l, mode_k, rig, rig, g);
}

std::array<Eigen::MatrixXd, 3> point_rows_in_layout(const PointCorrespondence& c,
                                                    const UnknownLayout& layout,
                                                    const Eigen::Vector3d& g) {
  const PointRows raw = c.direction == Direction::AseesB ? build_onedir_rows(c, g)
                                                         : build_bidir_rows(c, g);
  return map_rows(raw, c.direction, layout);
}

std::vector<QepSolution> solve_square_qep(const QepPencil& pencil) {
  const int n = pencil.cols();

  // Square the rectangular pencil by premultiplying with D(s0)^T. D0^T (the
  // classic normal-equation choice) makes the squared pencil singular exactly
  // when s* = 0 is a root, i.e. at theta = 180 deg, two users facing each
  // other. Probing s0 by the conditioning of D(s0) avoids every root (where
  // D(s0) itself drops rank), so the squared pencil stays regular.
  const std::array<double, 5> probes = {0.3177, -1.73, 5.9, -0.087, 47.0};
  double best_cond = -1.0;
  Eigen::MatrixXd W;
  for (double s0 : probes) {
    const Eigen::MatrixXd D = pencil.at(s0);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(D).singularValues();
    const double cond = sv.maxCoeff() > 0.0 ? sv.minCoeff() / sv.maxCoeff() : 0.0;
    if (cond > best_cond) {
      best_cond = cond;
      W = D.transpose() / std::max(sv.maxCoeff(), 1e-300);
    }
  }
  if (best_cond <= 1e-14) {
    throw SolverDegenerateError("solve_square_qep: pencil is rank deficient at every probe");
  }
  const Eigen::MatrixXd M0 = W * pencil.D0;
  const Eigen::MatrixXd M1 = W * pencil.D1;
  const Eigen::MatrixXd M2 = W * pencil.D2;

  // first companion form as a generalized pencil, solved by QZ; singular
  // leading blocks are fine and near-critical configurations show up as
  // infinite eigenvalues.
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  F.topRightCorner(n, n).setIdentity();
  F.bottomLeftCorner(n, n) = -M0;
  F.bottomRightCorner(n, n) = -M1;
  G.bottomRightCorner(n, n) = M2;

  const double scale = std::max({M0.norm(), M1.norm(), M2.norm()});
  if (!(scale > 0.0) || !F.allFinite()) {
    throw SolverDegenerateError("solve_square_qep: degenerate pencil");
  }

  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> es;
  es.compute(F, G, true);
  if (es.info() != Eigen::Success) {
    throw SolverDegenerateError("solve_square_qep: QZ decomposition failed");
  }

  std::vector<QepSolution> out;
  for (int i = 0; i < 2 * n; ++i) {
    const std::complex<double> alpha = es.alphas()[i];
    const double beta = es.betas()[i];
    if (std::abs(beta) < 1e-14 * (1.0 + std::abs(alpha))) continue;  // s at infinity
    const std::complex<double> s = alpha / beta;
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) continue;
    if (std::abs(s.imag()) > 1e-6 * (1.0 + std::abs(s.real()))) continue;
    Eigen::VectorXd x;
    if (!dehomogenize(es.eigenvectors().col(i).head(n), x)) continue;
    out.emplace_back(s.real(), std::move(x));
  }
  return out;
}

RectQepResult solve_rect_qep(const QepPencil& pencil, std::span<const double> seeds) {
  if (seeds.empty()) {
    throw InvalidInputError("solve_rect_qep: seed list is empty");
  }
  const int n = pencil.cols();
  RectQepResult result;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (double seed : seeds) {
    double a = seed - 0.5, b = seed + 0.5;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = smallest_singular_value(pencil.at(x1));
    double f2 = smallest_singular_value(pencil.at(x2));
    for (int it = 0; it < 80 && (b - a) > 1e-13; ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = smallest_singular_value(pencil.at(x1));
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = smallest_singular_value(pencil.at(x2));
      }
    }
    const double s_opt = 0.5 * (a + b);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(pencil.at(s_opt), Eigen::ComputeFullV);
    Eigen::VectorXd x;
    if (!dehomogenize(svd.matrixV().col(n - 1).cast<std::complex<double>>(), x)) continue;
    result.solutions.emplace_back(s_opt, std::move(x));
  }

  // merge duplicate minima
  std::sort(result.solutions.begin(), result.solutions.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<QepSolution> merged;
  for (auto& sol : result.solutions) {
    if (!merged.empty() && std::abs(sol.first - merged.back().first) < 1e-6) {
      if (smallest_singular_value(pencil.at(sol.first)) <
          smallest_singular_value(pencil.at(merged.back().first))) {
        merged.back() = std::move(sol);
      }
      continue;
    }
    merged.push_back(std::move(sol));
  }
  result.solutions = std::move(merged);

  if (result.solutions.empty()) {
    result.fell_back_to_square = true;
    result.solutions = solve_square_qep(pencil);
  }
  return result;
}

std::vector<AlignmentEstimate> filter_solutions(const QepPencil& pencil,
                                                std::span<const QepSolution> candidates,
                                                const Eigen::Vector3d& g) {
  std::vector<AlignmentEstimate> kept;
  for (const auto& [s, x] : candidates) {
    const double theta = 2.0 * std::atan2(1.0, s);
    if (theta < 1.0 * kDegToRad || theta > 359.0 * kDegToRad) continue;

    AlignmentEstimate est;
    est.s = s;
    est.rotation = rotation_from_s(s, g);
    est.translation = x.segment(pencil.layout.t_begin(), 3);
    const auto& ll = pencil.layout.lever_l;
    const auto& lk = pencil.layout.lever_k;
    if (ll.present) {
      est.lever_l = ll.reconstruct(x.segment(pencil.layout.l_begin(), ll.cols()));
      est.has_lever_l = true;
    }
    if (lk.present) {
      est.lever_k = lk.reconstruct(x.segment(pencil.layout.k_begin(), lk.cols()));
      est.has_lever_k = true;
    }
    est.residual = (pencil.at(s) * x).norm();
    est.raw_x = x;
    kept.push_back(std::move(est));
  }
  if (kept.empty()) {
    throw NoSolutionError("filter_solutions: no real solution with pan angle in [1, 359] deg");
  }
  return kept;
}

AlignmentEstimate select_solution(std::span<const AlignmentEstimate> candidates,
                                  const PointCorrespondence& holdout,
                                  const UnknownLayout& layout, const Eigen::Vector3d& g) {
  if (candidates.empty()) {
    throw NoSolutionError("select_solution: empty candidate list");
  }
  const auto rows = point_rows_in_layout(holdout, layout, g);
  int best = -1;
  double best_err = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    const auto& c = candidates[i];
    const double err =
        ((rows[0] + c.s * rows[1] + c.s * c.s * rows[2]) * c.raw_x).norm();
    const bool tie = std::abs(err - best_err) < 1e-12;
    if (best < 0 || (!tie && err < best_err) ||
        (tie && std::abs(c.s) < std::abs(candidates[best].s))) {
      best = i;
      best_err = err;
    }
  }
  return candidates[best];
}

AlignmentEstimate solve_alignment(std::span<const PointCorrespondence> correspondences,
                                  const SolveOptions& opts, const RigCalibration& rig) {
  const int n = static_cast<int>(correspondences.size());
  const int minimal = n == 0 ? 1 : minimal_point_count(correspondences, opts.mode_l, opts.mode_k);
  if (n < minimal + 1) throw UnderConstrainedError(minimal + 1, n);

  int dir_a = 0, dir_b = 0;
  for (const auto& c : correspondences) {
    (c.direction == Direction::AseesB ? dir_a : dir_b) += 1;
  }
  const bool bidirectional = dir_a > 0 && dir_b > 0;

  // holdout: last correspondence whose removal keeps both directions populated
  int holdout = n - 1;
  if (bidirectional) {
    while (holdout >= 0) {
      const int cnt = correspondences[holdout].direction == Direction::AseesB ? dir_a : dir_b;
      if (cnt > 1) break;
      --holdout;
    }
    if (holdout < 0) throw UnderConstrainedError(minimal + 1, n);
  }

  std::vector<PointCorrespondence> pencil_set;
  pencil_set.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    if (i != holdout) pencil_set.push_back(correspondences[i]);
  }

  const QepPencil pencil = assemble_pencil(pencil_set, opts.mode_l, opts.mode_k, rig, opts.g);
  std::vector<QepSolution> sols = solve_square_qep(pencil);
  if (opts.use_rect_qep && !sols.empty()) {
    std::vector<double> seeds;
    seeds.reserve(sols.size());
    for (const auto& [s, x] : sols) seeds.push_back(s);
    sols = solve_rect_qep(pencil, seeds).solutions;
  }
  const auto kept = filter_solutions(pencil, sols, opts.g);
  return select_solution(kept, correspondences[holdout], pencil.layout, opts.g);
}

namespace {

// Pre-rotates everything expressed in B's local frame by R_g(phi).
std::vector<PointCorrespondence> rotate_b_frame(
    std::span<const PointCorrespondence> correspondences, const Eigen::Matrix3d& R_phi) {
  std::vector<PointCorrespondence> out(correspondences.begin(), correspondences.end());
  for (auto& c : out) {
    Pose6D& b_pose = c.direction == Direction::AseesB ? c.target_imu_pose : c.observer_cam_pose;
    b_pose.rotation = R_phi * b_pose.rotation;
    b_pose.translation = R_phi * b_pose.translation;
  }
  return out;
}

}  // namespace

CriticalDetectResult detect_critical(std::span<const PointCorrespondence> correspondences,
                                     const SolveOptions& opts, const RigCalibration& rig) {
  const std::array<double, 3> phis = {0.0, 120.0 * kDegToRad, 240.0 * kDegToRad};
  CriticalDetectResult result;
  std::vector<AlignmentEstimate> runs(3);

  for (int i = 0; i < 3; ++i) {
    try {
      std::vector<PointCorrespondence> input;
      if (phis[i] == 0.0) {
        input.assign(correspondences.begin(), correspondences.end());
      } else {
        const double s_phi = std::cos(phis[i] / 2.0) / std::sin(phis[i] / 2.0);
        input = rotate_b_frame(correspondences, rotation_from_s(s_phi, opts.g));
      }
      AlignmentEstimate est = solve_alignment(input, opts, rig);
      if (phis[i] != 0.0) {
        // de-rotate: theta = theta' + phi (mod 2 pi), t and lever arms unchanged
        double theta = est.theta() + phis[i];
        if (theta >= 2.0 * M_PI) theta -= 2.0 * M_PI;
        theta = std::clamp(theta, 1e-12, 2.0 * M_PI - 1e-12);
        est.s = std::cos(theta / 2.0) / std::sin(theta / 2.0);
        est.rotation = rotation_from_s(est.s, opts.g);
      }
      runs[i] = std::move(est);
      result.run_succeeded[i] = true;
    } catch (const Error&) {
      result.run_succeeded[i] = false;
    }
  }

  double scene_scale = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (result.run_succeeded[i]) scene_scale = std::max(scene_scale, runs[i].translation.norm());
  }

  auto agrees = [&](int i, int j) {
    return std::abs(wrap_angle(runs[i].theta() - runs[j].theta())) < 0.5 * kDegToRad &&
           (runs[i].translation - runs[j].translation).norm() < 0.01 * scene_scale;
  };

  int best_i = -1, best_j = -1;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (!result.run_succeeded[i] || !result.run_succeeded[j] || !agrees(i, j)) continue;
      if (best_i < 0 ||
          runs[i].residual + runs[j].residual < runs[best_i].residual + runs[best_j].residual) {
        best_i = i;
        best_j = j;
      }
    }
  }

  if (best_i >= 0) {
    const auto& a = runs[best_i];
    const auto& b = runs[best_j];
    result.estimate = a.residual <= b.residual ? a : b;
    // a consensus sitting in the excluded zone around 0 deg is itself the
    // critical configuration, reachable only through the de-rotated runs
    const double theta = result.estimate.theta();
    result.critical = theta < 1.0 * kDegToRad || theta > 359.0 * kDegToRad;
    return result;
  }

  int best = -1;
  for (int i = 0; i < 3; ++i) {
    if (result.run_succeeded[i] && (best < 0 || runs[i].residual < runs[best].residual)) best = i;
  }
  if (best < 0) {
    throw NoSolutionError("detect_critical: all three solver runs failed");
  }
  result.estimate = runs[best];
  result.critical = true;
  return result;
}

std::vector<std::complex<double>> polynomial_roots(const Eigen::VectorXd& coeffs) {
  int deg = static_cast<int>(coeffs.size()) - 1;
  const double scale = coeffs.cwiseAbs().maxCoeff();
  while (deg > 0 && std::abs(coeffs[deg]) < 1e-14 * scale) --deg;
  std::vector<std::complex<double>> roots;
  if (deg < 1) return roots;

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  companion.bottomLeftCorner(deg - 1, deg - 1).setIdentity();
  companion.col(deg - 1) = -coeffs.head(deg) / coeffs[deg];
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
  for (int i = 0; i < deg; ++i) roots.push_back(es.eigenvalues()[i]);
  return roots;
}

DeterminantPolynomial determinant_polynomial(const QepPencil& pencil) {
  const auto& layout = pencil.layout;
  if (!layout.lever_l.present || layout.lever_k.present || layout.lever_l.cols() != 2 ||
      pencil.rows() != 9) {
    throw InvalidInputError(
        "determinant_polynomial: requires exactly 3 one-directional points with the "
        "SymmetryHard constraint");
  }
  const int tb = layout.t_begin();

  auto projector = [&](double s) -> Eigen::MatrixXd {
    const Eigen::MatrixXd T = pencil.at(s).middleCols(tb, 3);
    const Eigen::Matrix3d TtT = T.transpose() * T;
    return Eigen::MatrixXd::Identity(9, 9) - T * TtT.inverse() * T.transpose();
  };
  const Eigen::MatrixXd P = projector(0.0);
  if ((P - projector(1.0)).cwiseAbs().maxCoeff() > 1e-9) {
    throw InternalConsistencyError(
        "determinant_polynomial: translation projector depends on s (broken rows)");
  }

  auto G_of = [&](double s) -> Eigen::MatrixXd {
    const Eigen::MatrixXd D = pencil.at(s);
    Eigen::MatrixXd lever_h(9, 3);
    lever_h << D.leftCols(2), D.col(pencil.cols() - 1);
    return P * lever_h;
  };

  // fix one row per point triplet, maximizing |det| at a probe s
  const Eigen::MatrixXd G_probe = G_of(0.37);
  std::array<int, 3> sel = {0, 3, 6};
  double best_det = -1.0;
  for (int r0 = 0; r0 < 3; ++r0) {
    for (int r1 = 0; r1 < 3; ++r1) {
      for (int r2 = 0; r2 < 3; ++r2) {
        Eigen::Matrix3d m;
        m << G_probe.row(r0), G_probe.row(3 + r1), G_probe.row(6 + r2);
        const double d = std::abs(m.determinant());
        if (d > best_det) {
          best_det = d;
          sel = {r0, 3 + r1, 6 + r2};
        }
      }
    }
  }

  auto f = [&](double s) {
    const Eigen::MatrixXd G = G_of(s);
    Eigen::Matrix3d m;
    m << G.row(sel[0]), G.row(sel[1]), G.row(sel[2]);
    return m.determinant();
  };

  // degree <= 6 by construction; interpolate through 7 nodes
  Eigen::Matrix<double, 7, 1> nodes, vals;
  nodes << -3, -2, -1, 0, 1, 2, 3;
  Eigen::Matrix<double, 7, 7> vander;
  for (int i = 0; i < 7; ++i) {
    vals[i] = f(nodes[i]);
    double p = 1.0;
    for (int j = 0; j < 7; ++j) {
      vander(i, j) = p;
      p *= nodes[i];
    }
  }
  DeterminantPolynomial result;
  result.degree6 = vander.partialPivLu().solve(vals);

  const double coeff_norm = result.degree6.norm();
  double check = 0.0, p = 1.0;
  for (int j = 0; j < 7; ++j) {
    check += result.degree6[j] * p;
    p *= 0.5;
  }
  if (std::abs(check - f(0.5)) > 1e-6 * std::max(1.0, coeff_norm)) {
    throw InternalConsistencyError("determinant_polynomial: degree-6 fit failed validation");
  }

  // synthetic division by (1 + s^2)
  Eigen::Matrix<double, 7, 1> c = result.degree6;
  result.quartic.setZero();
  for (int i = 6; i >= 2; --i) {
    result.quartic[i - 2] = c[i];
    c[i] = 0.0;
    c[i - 2] -= result.quartic[i - 2];
  }
  result.remainder_rel = std::hypot(c[0], c[1]) / std::max(coeff_norm, 1e-300);
  if (result.remainder_rel > 1e-8) {
    throw InternalConsistencyError(
        "determinant_polynomial: determinant is not divisible by (1 + s^2)");
  }
  return result;
}

}  // namespace ega
