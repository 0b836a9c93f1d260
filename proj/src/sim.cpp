// SPDX-License-Identifier: Apache-2.0

#include "ega/sim.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "ega/factor_graph.hpp"

namespace ega {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(base ^ splitmix64(a * 0x100000001b3ULL + b));
}

// world-from-camera rotation looking from eye towards target, image y down
Eigen::Matrix3d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
  if (x.norm() < 1e-6) x = z.cross(Eigen::Vector3d::UnitY());
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return R;
}

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double normal(double sigma) {
    return std::normal_distribution<double>(0.0, sigma)(engine);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine);
  }
  Eigen::Vector3d normal3(double sigma) {
    const double a = normal(sigma), b = normal(sigma), c = normal(sigma);
    return {a, b, c};
  }
  Eigen::Matrix3d small_rotation(double max_deg) {
    Eigen::Vector3d axis = normal3(1.0);
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
    axis.normalize();
    const double angle = uniform(0.0, max_deg * kDegToRad);
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  }
};

Eigen::Vector3d trajectory_offset(Trajectory traj, double lambda, const Eigen::Vector3d& lat,
                                  const Eigen::Vector3d& fwd, double sign) {
  const double u = 2.0 * lambda - 1.0;  // [-1, 1]
  switch (traj) {
    case Trajectory::LateralSweep:
      // left-right by ~1.5 m, slight depth and height variation
      return sign * 0.75 * u * lat + 0.10 * std::sin(M_PI * lambda) * fwd +
             Eigen::Vector3d(0, 0, 0.05 * std::sin(2.0 * M_PI * lambda));
    case Trajectory::Orbit: {
      // ~2 m range walk on a shallow arc
      const double a = 0.5 * u;
      return sign * (2.0 * std::sin(a) * lat + 0.5 * (1.0 - std::cos(2.0 * a)) * fwd) +
             Eigen::Vector3d(0, 0, 0.04 * std::sin(M_PI * lambda));
    }
    case Trajectory::SmallHeadMotion:
      return sign * 0.25 * u * lat + 0.05 * std::sin(M_PI * lambda) * fwd +
             Eigen::Vector3d(0, 0, 0.03 * std::sin(2.0 * M_PI * lambda));
  }
  return Eigen::Vector3d::Zero();
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_keyframes < 2) throw InvalidInputError("scenario: n_keyframes must be >= 2");
  if (pixel_sigma < 0.0) throw InvalidInputError("scenario: pixel_sigma must be >= 0");
  if (outlier_fraction < 0.0 || outlier_fraction >= 1.0) {
    throw InvalidInputError("scenario: outlier_fraction must be in [0, 1)");
  }
  const double theta = wrap_angle(true_theta_deg * kDegToRad);
  if (!allow_critical_theta && std::abs(theta) < 1e-12) {
    throw InvalidInputError("scenario: true_theta = 0 is the critical configuration");
  }
  if (std::abs(intrinsics.K.determinant()) < 1e-12) {
    throw InvalidInputError("scenario: intrinsics not invertible");
  }
  if ((rig.right_cam_in_imu - rig.left_cam_in_imu).norm() <= 1e-6) {
    throw InvalidInputError("scenario: stereo cameras coincide");
  }
}

ScenarioConfig default_scenario_config() {
  ScenarioConfig cfg;
  cfg.intrinsics.K << 500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0;
  cfg.intrinsics.width = 640;
  cfg.intrinsics.height = 480;
  // IMU axes: x right, y forward, z up; camera: x right, y down, z forward
  cfg.rig.cam_from_imu_rotation << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  cfg.rig.cam_from_imu_translation = Eigen::Vector3d(0.0, 0.01, -0.03);
  cfg.rig.left_cam_in_imu = Eigen::Vector3d(-0.07, 0.0, 0.0);
  cfg.rig.right_cam_in_imu = Eigen::Vector3d(0.07, 0.0, 0.0);
  return cfg;
}

Scenario generate(const ScenarioConfig& config) {
  config.validate();
  Scenario scn;
  scn.config = config;
  Rng rng(config.seed);
  const Eigen::Vector3d g = gravity_axis();

  const double theta = config.true_theta_deg * kDegToRad;
  const Eigen::Matrix3d R = rot_z(theta);
  const Eigen::Vector3d t = config.true_translation;

  scn.ground_truth.rotation = R;
  scn.ground_truth.translation = t;
  scn.ground_truth.lever_l = config.lever_l;
  scn.ground_truth.lever_k = config.lever_k;
  scn.ground_truth.has_lever_l = scn.ground_truth.has_lever_k = true;
  {
    const double half = std::clamp(theta, 1e-15, 2.0 * M_PI - 1e-15) / 2.0;
    scn.ground_truth.s = std::cos(half) / std::sin(half);
  }

  // B's physical cluster sits at t (its VIO origin), A's at the common origin
  Eigen::Vector3d fwd = t;
  fwd.z() = 0.0;
  if (fwd.norm() < 0.5) fwd = Eigen::Vector3d::UnitX();
  fwd.normalize();
  const Eigen::Vector3d lat = Eigen::Vector3d::UnitZ().cross(fwd);

  const int K = config.n_keyframes;
  std::vector<Eigen::Vector3d> pos_a(K), pos_b(K);
  for (int k = 0; k < K; ++k) {
    const double lambda = static_cast<double>(k) / (K - 1);
    pos_a[k] = trajectory_offset(config.trajectory, lambda, lat, fwd, 1.0) + rng.normal3(0.02);
    pos_b[k] =
        t + trajectory_offset(config.trajectory, lambda, lat, fwd, -0.85) + rng.normal3(0.02);
  }

  std::vector<Pose6D> imu_a_common(K), imu_b_common(K);
  for (int k = 0; k < K; ++k) {
    const double time = 0.5 * k;
    const Eigen::Matrix3d cam_a = look_at(pos_a[k], pos_b[k]) * rng.small_rotation(2.0);
    const Eigen::Matrix3d cam_b = look_at(pos_b[k], pos_a[k]) * rng.small_rotation(2.0);
    imu_a_common[k] = {cam_a * config.rig.cam_from_imu_rotation, pos_a[k], time};
    imu_b_common[k] = {cam_b * config.rig.cam_from_imu_rotation, pos_b[k], time};
  }

  scn.stream_a = imu_a_common;
  scn.stream_b.resize(K);
  for (int k = 0; k < K; ++k) {
    scn.stream_b[k] = {R.transpose() * imu_b_common[k].rotation,
                       R.transpose() * (imu_b_common[k].translation - t), imu_b_common[k].time};
  }

  // exact mutual detections, then noise, then bounds check
  struct Pending {
    Direction dir;
    int frame;
    Eigen::Vector2d pixel;
  };
  std::vector<Pending> pending;
  for (int k = 0; k < K; ++k) {
    const Eigen::Vector3d lever_b_w = imu_b_common[k].to_world(config.lever_l);
    const Eigen::Vector3d lever_a_w = imu_a_common[k].to_world(config.lever_k);
    const Pose6D cam_a = config.rig.camera_pose(imu_a_common[k]);
    const Pose6D cam_b = config.rig.camera_pose(imu_b_common[k]);

    auto emit = [&](Direction dir, const std::optional<Eigen::Vector2d>& exact) {
      if (!exact) {
        ++scn.dropped_detections;
        return;
      }
      Eigen::Vector2d px = *exact;
      px.x() += rng.normal(config.pixel_sigma);
      px.y() += rng.normal(config.pixel_sigma);
      if (!config.intrinsics.contains(px)) {
        ++scn.dropped_detections;
        return;
      }
      pending.push_back({dir, k, px});
    };
    emit(Direction::AseesB, project_point(config.intrinsics, cam_a, lever_b_w));
    emit(Direction::BseesA, project_point(config.intrinsics, cam_b, lever_a_w));
  }

  // replace an exact fraction of the surviving detections with uniform pixels
  const int n = static_cast<int>(pending.size());
  std::vector<bool> outlier(n, false);
  const int n_outliers = static_cast<int>(std::llround(config.outlier_fraction * n));
  if (n_outliers > 0) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine);
    for (int i = 0; i < n_outliers; ++i) {
      outlier[idx[i]] = true;
      pending[idx[i]].pixel = {rng.uniform(0.0, config.intrinsics.width),
                               rng.uniform(0.0, config.intrinsics.height)};
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto& p = pending[i];
    PointCorrespondence c;
    c.direction = p.dir;
    c.ray = backproject(p.pixel, config.intrinsics);
    if (p.dir == Direction::AseesB) {
      c.observer_cam_pose = config.rig.camera_pose(scn.stream_a[p.frame]);
      c.target_imu_pose = scn.stream_b[p.frame];
      scn.detections_a.push_back({p.frame, p.pixel, outlier[i]});
    } else {
      c.observer_cam_pose = config.rig.camera_pose(scn.stream_b[p.frame]);
      c.target_imu_pose = scn.stream_a[p.frame];
      scn.detections_b.push_back({p.frame, p.pixel, outlier[i]});
    }
    scn.correspondences.push_back(std::move(c));
    scn.outlier_labels.push_back(outlier[i]);
  }

  const Eigen::Vector3d center = 0.5 * t;
  int v = 0;
  for (double dx : {-0.25, 0.25}) {
    for (double dy : {-0.25, 0.25}) {
      for (double dz : {-0.25, 0.25}) {
        scn.cube[v++] = center + Eigen::Vector3d(dx, dy, dz);
      }
    }
  }
  return scn;
}

CubeError cube_reprojection_error(const AlignmentEstimate& estimate, const Scenario& scenario) {
  const auto& truth = scenario.ground_truth;
  CubeError result;
  double sum = 0.0;
  for (const Pose6D& imu_b : scenario.stream_b) {
    const Pose6D cam_b = scenario.config.rig.camera_pose(imu_b);
    for (const Eigen::Vector3d& v : scenario.cube) {
      const Eigen::Vector3d xb_true = truth.rotation.transpose() * (v - truth.translation);
      const Eigen::Vector3d xb_est =
          estimate.rotation.transpose() * (v - estimate.translation);
      const auto u_true = project_point(scenario.config.intrinsics, cam_b, xb_true);
      const auto u_est = project_point(scenario.config.intrinsics, cam_b, xb_est);
      if (!u_true || !u_est) {
        ++result.pairs_excluded;
        continue;
      }
      sum += (*u_true - *u_est).norm();
      ++result.pairs_used;
    }
  }
  result.mean_px = result.pairs_used > 0 ? sum / result.pairs_used : 0.0;
  return result;
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> perturb_lever_priors(const Scenario& scenario,
                                                                 double shift_fraction,
                                                                 bool additive) {
  if (shift_fraction < 0.0) throw InvalidInputError("perturb_lever_priors: negative shift");
  const Eigen::Vector3d& l = scenario.ground_truth.lever_l;
  const Eigen::Vector3d& k = scenario.ground_truth.lever_k;
  if (additive) {
    const Eigen::Vector3d d(shift_fraction, shift_fraction, shift_fraction);
    return {l + d, k + d};
  }
  return {l * (1.0 + shift_fraction), k * (1.0 + shift_fraction)};
}

SweepVariant parse_sweep_variant(const std::string& code) {
  SweepVariant v;
  v.code = code;
  std::string base = code;
  auto strip = [&](const std::string& suffix, bool& flag) {
    if (base.size() >= suffix.size() &&
        base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
      flag = true;
      base.resize(base.size() - suffix.size());
    }
  };
  strip("+gbp", v.refine_gbp);
  strip("+rect", v.rect_qep);

  if (base == "onedir") {
    v.bidirectional = false;
    v.constraint = ConstraintMode::Kind::PriorHard;
  } else if (base == "bidir-none") {
    v.constraint = ConstraintMode::Kind::None;
  } else if (base == "bidir-soft") {
    v.constraint = ConstraintMode::Kind::PriorSoft;
  } else if (base == "bidir-hard") {
    v.constraint = ConstraintMode::Kind::PriorHard;
  } else if (base == "bidir-sym-soft") {
    v.constraint = ConstraintMode::Kind::SymmetrySoft;
  } else if (base == "bidir-sym-hard") {
    v.constraint = ConstraintMode::Kind::SymmetryHard;
  } else {
    throw InvalidInputError("unknown sweep variant: " + code);
  }
  return v;
}

AlignmentEstimate run_sweep_variant(const Scenario& scenario, const SweepVariant& variant,
                                    int* iterations) {
  const auto [prior_l, prior_k] =
      perturb_lever_priors(scenario, scenario.config.lever_prior_shift);

  auto mode_for = [](ConstraintMode::Kind kind, const Eigen::Vector3d& prior) {
    switch (kind) {
      case ConstraintMode::Kind::None: return ConstraintMode::none();
      case ConstraintMode::Kind::SymmetryHard: return ConstraintMode::symmetry_hard();
      case ConstraintMode::Kind::SymmetrySoft: return ConstraintMode::symmetry_soft();
      case ConstraintMode::Kind::PriorHard: return ConstraintMode::prior_hard(prior);
      case ConstraintMode::Kind::PriorSoft: return ConstraintMode::prior_soft(prior);
    }
    return ConstraintMode::none();
  };

  std::vector<PointCorrespondence> corrs;
  if (variant.bidirectional) {
    corrs = scenario.correspondences;
  } else {
    for (const auto& c : scenario.correspondences) {
      if (c.direction == Direction::AseesB) corrs.push_back(c);
    }
  }

  SolveOptions opts;
  opts.mode_l = mode_for(variant.constraint, prior_l);
  opts.mode_k = mode_for(variant.constraint, prior_k);
  opts.use_rect_qep = variant.rect_qep;
  AlignmentEstimate est = solve_alignment(corrs, opts, scenario.config.rig);
  if (iterations) *iterations = 0;

  if (variant.refine_gbp) {
    CameraStream sa{scenario.stream_a, scenario.config.intrinsics, scenario.config.rig};
    CameraStream sb{scenario.stream_b, scenario.config.intrinsics, scenario.config.rig};
    std::vector<GraphDetection> da, db;
    for (const auto& d : scenario.detections_a) da.push_back({d.frame, d.pixel});
    for (const auto& d : scenario.detections_b) db.push_back({d.frame, d.pixel});
    const Eigen::Vector3d lever_l = est.has_lever_l ? est.lever_l : prior_l;
    const Eigen::Vector3d lever_k = est.has_lever_k ? est.lever_k : prior_k;
    GbpConfig cfg;
    FactorGraph graph = build_graph(sa, sb, da, db, est, lever_k, lever_l, cfg.noise);
    const GbpReport report = gbp_iterate(graph, cfg);
    if (iterations) *iterations = report.iterations;
    est = extract_relative_pose(graph);
  }
  return est;
}

std::vector<SweepRow> sweep_noise(const ScenarioConfig& base, std::span<const double> sigmas,
                                  int n_trials, std::span<const SweepVariant> variants) {
  for (double s : sigmas) {
    if (s < 0.0) throw InvalidInputError("sweep_noise: negative sigma");
  }
  std::vector<SweepRow> rows;
  rows.reserve(sigmas.size() * variants.size() * n_trials);
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    for (int trial = 0; trial < n_trials; ++trial) {
      ScenarioConfig cfg = base;
      cfg.pixel_sigma = sigmas[si];
      cfg.seed = mix_seed(base.seed, si, static_cast<std::uint64_t>(trial));
      const Scenario scenario = generate(cfg);
      for (const auto& variant : variants) {
        SweepRow row;
        row.variant = variant.code;
        row.sigma = sigmas[si];
        row.trial = trial;
        try {
          int iters = 0;
          const AlignmentEstimate est = run_sweep_variant(scenario, variant, &iters);
          row.error_px = cube_reprojection_error(est, scenario).mean_px;
          row.converged = true;
          row.iterations = iters;
        } catch (const Error&) {
          row.error_px = std::numeric_limits<double>::quiet_NaN();
          row.converged = false;
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<SweepCell> aggregate_sweep(std::span<const SweepRow> rows) {
  struct Key {
    std::string variant;
    double sigma;
    bool operator<(const Key& o) const {
      return variant < o.variant || (variant == o.variant && sigma < o.sigma);
    }
  };
  std::map<Key, std::vector<double>> ok;
  std::map<Key, std::pair<int, int>> counts;  // trials, failures
  for (const auto& r : rows) {
    const Key key{r.variant, r.sigma};
    auto& c = counts[key];
    ++c.first;
    if (r.converged && std::isfinite(r.error_px)) {
      ok[key].push_back(r.error_px);
    } else {
      ++c.second;
    }
  }
  std::vector<SweepCell> cells;
  for (auto& [key, c] : counts) {
    SweepCell cell;
    cell.variant = key.variant;
    cell.sigma = key.sigma;
    cell.trials = c.first;
    cell.failures = c.second;
    auto& vals = ok[key];
    if (!vals.empty()) {
      cell.mean_px = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size();
      cell.median_px = m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace ega
