// SPDX-License-Identifier: Apache-2.0

#include "ega/factor_graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace ega {

namespace {

Eigen::Matrix3d rot_z_t(double theta) { return rot_z(theta).transpose(); }

Eigen::Matrix3d d_rot_z_t(double theta) {
  // d/dtheta of Rz(theta)^T
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d m;
  m << -s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0;
  return m;
}

Eigen::Matrix4d precision_diag(double sigma_t, double sigma_theta) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = Eigen::Matrix3d::Identity() / (sigma_t * sigma_t);
  m(3, 3) = 1.0 / (sigma_theta * sigma_theta);
  return m;
}

// Schur complement marginalization of (eta, lambda) onto rows [begin, begin+4).
// The marginalized block is often rank deficient (a detection factor without
// incoming information constrains only 2 of 4 directions); a blind epsilon
// regularization would leak spurious information into the message and corrupt
// the means used for relinearization, so the inverse is rank-truncated.
bool marginalize_onto(const Eigen::VectorXd& eta, const Eigen::MatrixXd& lambda, int begin,
                      GaussianInfo& out) {
  const int dim = static_cast<int>(eta.size());
  if (dim == 4) {
    out.eta = eta;
    out.lambda = 0.5 * (lambda + lambda.transpose());
    return true;
  }
  // reorder so the recipient block leads; factors have at most two variables
  const Eigen::Vector4d eta_a = eta.segment<4>(begin);
  const int ob = begin == 0 ? 4 : 0;
  const Eigen::Vector4d eta_b = eta.segment<4>(ob);
  const Eigen::Matrix4d laa = lambda.block<4, 4>(begin, begin);
  const Eigen::Matrix4d lab = lambda.block<4, 4>(begin, ob);
  const Eigen::Matrix4d lbb =
      0.5 * (lambda.block<4, 4>(ob, ob) + lambda.block<4, 4>(ob, ob).transpose());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(lbb);
  if (es.info() != Eigen::Success) return false;
  // absolute cutoff: precisions below it are indistinguishable from the
  // rank-deficiency roundoff of constraint-like factors, while genuine
  // information (>= pixel scale) stays orders of magnitude above
  constexpr double cutoff = 1e-10;
  Eigen::Vector4d inv = Eigen::Vector4d::Zero();
  for (int i = 0; i < 4; ++i) {
    if (std::abs(es.eigenvalues()[i]) > cutoff) inv[i] = 1.0 / es.eigenvalues()[i];
  }
  const Eigen::Matrix4d lbb_pinv =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  out.eta = eta_a - lab * lbb_pinv * eta_b;
  out.lambda = laa - lab * lbb_pinv * lab.transpose();
  out.lambda = 0.5 * (out.lambda + out.lambda.transpose());
  return out.eta.allFinite() && out.lambda.allFinite();
}

}  // namespace

bool GaussianInfo::informative(double tol) const {
  const Eigen::Matrix4d sym = 0.5 * (lambda + lambda.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(sym);
  const double max_ev = es.eigenvalues().maxCoeff();
  return max_ev > 0.0 && es.eigenvalues().minCoeff() > tol * std::max(1.0, max_ev);
}

Eigen::Vector4d GaussianInfo::mean() const {
  return lambda.ldlt().solve(eta);
}

int FactorGraph::first_variable(int camera) const {
  for (const auto& v : variables) {
    if (v.camera == camera) return v.id;
  }
  return -1;
}

FactorEval eval_pose_prior(const StateVec& x) {
  FactorEval e;
  e.h = x;
  e.J = Eigen::Matrix4d::Identity();
  return e;
}

FactorEval eval_odometry(const StateVec& x1, const StateVec& x2) {
  const Eigen::Vector3d dp = x2.head<3>() - x1.head<3>();
  const Eigen::Matrix3d R = rot_z_t(x1[3]);  // common -> local of the first state

  FactorEval e;
  e.h.resize(4);
  e.h.head<3>() = R * dp;
  e.h[3] = x2[3] - x1[3];

  e.J = Eigen::MatrixXd::Zero(4, 8);
  e.J.block<3, 3>(0, 0) = -R;
  e.J.block<3, 1>(0, 3) = d_rot_z_t(x1[3]) * dp;
  e.J.block<3, 3>(0, 4) = R;
  e.J(3, 3) = -1.0;
  e.J(3, 7) = 1.0;
  return e;
}

FactorEval eval_detection(const StateVec& x_obs, const StateVec& x_tgt,
                          const DetectionContext& ctx) {
  const auto predict = [&ctx](const StateVec& xo, const StateVec& xt,
                              Eigen::Vector3d* cam_point) -> std::optional<Eigen::Vector2d> {
    const Eigen::Vector3d lever_common = rot_z(xt[3]) * (ctx.target_imu_rot * ctx.lever);
    const Eigen::Vector3d delta = xt.head<3>() - xo.head<3>() + lever_common;
    const Eigen::Vector3d xc = ctx.cam_from_local_rot * (rot_z_t(xo[3]) * delta) + ctx.imu_in_cam;
    if (cam_point) *cam_point = xc;
    if (xc.z() <= 1e-9) return std::nullopt;
    const Eigen::Vector3d hom = ctx.K * xc;
    return Eigen::Vector2d(hom.x() / hom.z(), hom.y() / hom.z());
  };

  FactorEval e;
  Eigen::Vector3d xc;
  const auto h0 = predict(x_obs, x_tgt, &xc);
  if (!h0) {
    e.valid = false;
    return e;
  }
  e.h = *h0;

  // analytic translation blocks through the projection chain
  const Eigen::Vector3d hom = ctx.K * xc;
  Eigen::Matrix<double, 2, 3> dpi;
  dpi << 1.0 / hom.z(), 0.0, -hom.x() / (hom.z() * hom.z()),
         0.0, 1.0 / hom.z(), -hom.y() / (hom.z() * hom.z());
  const Eigen::Matrix<double, 2, 3> du_dxc = dpi * ctx.K;
  const Eigen::Matrix<double, 2, 3> du_dpt = du_dxc * ctx.cam_from_local_rot * rot_z_t(x_obs[3]);

  e.J = Eigen::MatrixXd::Zero(2, 8);
  e.J.block<2, 3>(0, 0) = -du_dpt;
  e.J.block<2, 3>(0, 4) = du_dpt;

  // pan columns by central differences
  const double step = 1e-7;
  auto fd_col = [&](bool observer) -> std::optional<Eigen::Vector2d> {
    StateVec xo_p = x_obs, xo_m = x_obs, xt_p = x_tgt, xt_m = x_tgt;
    (observer ? xo_p[3] : xt_p[3]) += step;
    (observer ? xo_m[3] : xt_m[3]) -= step;
    const auto hp = predict(xo_p, xt_p, nullptr);
    const auto hm = predict(xo_m, xt_m, nullptr);
    if (!hp || !hm) return std::nullopt;
    return (*hp - *hm) / (2.0 * step);
  };
  const auto c_obs = fd_col(true);
  const auto c_tgt = fd_col(false);
  if (!c_obs || !c_tgt) {
    e.valid = false;
    return e;
  }
  e.J.block<2, 1>(0, 3) = *c_obs;
  e.J.block<2, 1>(0, 7) = *c_tgt;
  return e;
}

void linearize(Factor& factor, std::span<const VariableNode> variables,
               const GraphNoiseConfig& cfg) {
  const int dim = 4 * factor.n_vars();
  Eigen::VectorXd y(dim);
  y.head<4>() = variables[factor.v1].mean;
  if (factor.n_vars() == 2) y.tail<4>() = variables[factor.v2].mean;
  factor.lin_point = y;

  FactorEval eval;
  switch (factor.kind) {
    case FactorKind::PosePrior:
      eval = eval_pose_prior(y.head<4>());
      break;
    case FactorKind::Odometry:
      eval = eval_odometry(y.head<4>(), y.tail<4>());
      break;
    case FactorKind::Detection:
      eval = eval_detection(y.head<4>(), y.tail<4>(), factor.det);
      break;
  }
  if (!eval.valid) {
    factor.active = false;
    factor.eta_f = Eigen::VectorXd::Zero(dim);
    factor.lambda_f = Eigen::MatrixXd::Zero(dim, dim);
    return;
  }
  factor.active = true;

  Eigen::VectorXd r = factor.z - eval.h;
  if (factor.kind == FactorKind::PosePrior || factor.kind == FactorKind::Odometry) {
    r[3] = wrap_angle(r[3]);
  }

  Eigen::MatrixXd precision = factor.meas_precision;
  if (cfg.huber) {
    const double md = std::sqrt(r.dot(precision * r));
    if (md > cfg.huber_delta) {
      precision *= cfg.huber_delta * (2.0 * md - cfg.huber_delta) / (md * md);
    }
  }

  factor.eta_f = eval.J.transpose() * precision * (eval.J * y + r);
  factor.lambda_f = eval.J.transpose() * precision * eval.J;
}

FactorGraph build_graph(const CameraStream& stream_a, const CameraStream& stream_b,
                        std::span<const GraphDetection> detections_a,
                        std::span<const GraphDetection> detections_b,
                        const AlignmentEstimate& init, const Eigen::Vector3d& lever_k,
                        const Eigen::Vector3d& lever_l, const GraphNoiseConfig& cfg) {
  FactorGraph graph;
  graph.init = init;
  graph.lever_l = lever_l;
  graph.lever_k = lever_k;

  const int na = static_cast<int>(stream_a.imu_poses.size());
  const int nb = static_cast<int>(stream_b.imu_poses.size());
  std::set<int> frames;
  for (const auto& d : detections_a) frames.insert(d.frame);
  for (const auto& d : detections_b) frames.insert(d.frame);
  for (int f : frames) {
    if (f < 0 || f >= na || f >= nb) {
      throw InputConsistencyError("build_graph: detection references a missing pose");
    }
  }
  if (frames.empty()) {
    for (int f = 0; f < std::min(na, nb); ++f) frames.insert(f);
  }
  if (frames.empty()) {
    throw InputConsistencyError("build_graph: both streams are empty");
  }

  const double theta0 = pan_angle(init.rotation, gravity_axis());
  std::vector<int> frame_list(frames.begin(), frames.end());
  std::vector<int> slot_of_frame(frames.empty() ? 0 : frame_list.back() + 1, -1);
  for (std::size_t i = 0; i < frame_list.size(); ++i) slot_of_frame[frame_list[i]] = i;

  // camera A variables first, then camera B; means seeded by VIO and init
  for (int cam = 0; cam < 2; ++cam) {
    const auto& stream = cam == 0 ? stream_a : stream_b;
    for (int f : frame_list) {
      VariableNode v;
      v.id = static_cast<int>(graph.variables.size());
      v.camera = cam;
      v.frame = f;
      v.vio_pose = stream.imu_poses[f];
      if (cam == 0) {
        v.mean << v.vio_pose.translation, 0.0;
      } else {
        v.mean << init.translation + init.rotation * v.vio_pose.translation, theta0;
      }
      graph.variables.push_back(std::move(v));
    }
  }
  const int n_per_cam = static_cast<int>(frame_list.size());
  auto var_id = [&](int cam, int frame) { return cam * n_per_cam + slot_of_frame[frame]; };

  // pose priors: strong gauge anchor on A's first pose, loose init-seeded on B's
  {
    Factor prior;
    prior.kind = FactorKind::PosePrior;
    prior.v1 = var_id(0, frame_list.front());
    prior.z = graph.variables[prior.v1].mean;
    prior.meas_precision = precision_diag(cfg.prior_a_sigma_t, cfg.prior_a_sigma_theta);
    graph.factors.push_back(std::move(prior));

    Factor prior_b;
    prior_b.kind = FactorKind::PosePrior;
    prior_b.v1 = var_id(1, frame_list.front());
    const Pose6D& vio = graph.variables[prior_b.v1].vio_pose;
    prior_b.z.resize(4);
    prior_b.z.head<3>() = init.translation + init.rotation * vio.translation;
    prior_b.z[3] = theta0;
    prior_b.meas_precision = precision_diag(cfg.prior_b_sigma_t, cfg.prior_b_sigma_theta);
    graph.factors.push_back(std::move(prior_b));
  }

  // odometry between consecutive keyframes (intermediate frames compose exactly)
  for (int cam = 0; cam < 2; ++cam) {
    const auto& stream = cam == 0 ? stream_a : stream_b;
    for (int i = 0; i + 1 < n_per_cam; ++i) {
      const int f1 = frame_list[i], f2 = frame_list[i + 1];
      Factor odo;
      odo.kind = FactorKind::Odometry;
      odo.v1 = var_id(cam, f1);
      odo.v2 = var_id(cam, f2);
      const Eigen::Vector3d dt =
          stream.imu_poses[f2].translation - stream.imu_poses[f1].translation;
      odo.z.resize(4);
      odo.z.head<3>() = dt;
      odo.z[3] = 0.0;
      const double dist = dt.norm();
      const double sigma_t = std::max(cfg.odo_sigma_t_per_m * dist, cfg.odo_sigma_t_floor);
      const double sigma_th =
          std::max(cfg.odo_sigma_theta_per_m * dist, cfg.odo_sigma_theta_floor);
      odo.meas_precision = precision_diag(sigma_t, sigma_th);
      graph.factors.push_back(std::move(odo));
    }
  }

  // detection factors: observer -> target
  auto add_detection = [&](const GraphDetection& d, int obs_cam) {
    const auto& obs_stream = obs_cam == 0 ? stream_a : stream_b;
    const auto& tgt_stream = obs_cam == 0 ? stream_b : stream_a;
    Factor det;
    det.kind = FactorKind::Detection;
    det.v1 = var_id(obs_cam, d.frame);
    det.v2 = var_id(1 - obs_cam, d.frame);
    det.z = d.pixel;
    det.meas_precision =
        Eigen::Matrix2d::Identity() / (cfg.detection_sigma_px * cfg.detection_sigma_px);
    const Pose6D& obs_imu = obs_stream.imu_poses[d.frame];
    det.det.cam_from_local_rot =
        (obs_imu.rotation * obs_stream.rig.cam_from_imu_rotation.transpose()).transpose();
    det.det.imu_in_cam = obs_stream.rig.cam_from_imu_translation;
    det.det.K = obs_stream.intrinsics.K;
    det.det.lever = obs_cam == 0 ? lever_l : lever_k;
    det.det.target_imu_rot = tgt_stream.imu_poses[d.frame].rotation;
    graph.factors.push_back(std::move(det));
  };
  for (const auto& d : detections_a) add_detection(d, 0);
  for (const auto& d : detections_b) add_detection(d, 1);

  graph.adjacency.resize(graph.variables.size());
  for (int fi = 0; fi < static_cast<int>(graph.factors.size()); ++fi) {
    const Factor& f = graph.factors[fi];
    graph.adjacency[f.v1].push_back(fi);
    if (f.v2 >= 0) graph.adjacency[f.v2].push_back(fi);
  }
  return graph;
}

GbpReport gbp_iterate(FactorGraph& graph, const GbpConfig& cfg) {
  GbpReport report;
  auto relinearize_all = [&] {
    for (auto& f : graph.factors) {
      linearize(f, graph.variables, cfg.noise);
      if (!f.active) ++report.deactivated_factor_evals;
    }
  };

  bool cache_cold = false;
  for (const auto& f : graph.factors) cache_cold |= f.eta_f.size() == 0;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const bool periodic = !cfg.freeze_linearization && cfg.relinearize_every > 0 &&
                          it % cfg.relinearize_every == 0;
    if ((it == 0 && (cache_cold || !cfg.freeze_linearization)) || (it > 0 && periodic)) {
      relinearize_all();
    }

    // variable -> factor: belief minus the recipient's own previous message
    for (auto& f : graph.factors) {
      for (int slot = 0; slot < f.n_vars(); ++slot) {
        f.inbox[slot] = graph.variables[f.var(slot)].belief - f.outbox[slot];
      }
    }

    // factor -> variable: marginalize joint information onto the recipient
    for (auto& f : graph.factors) {
      const int dim = 4 * f.n_vars();
      for (int slot = 0; slot < f.n_vars(); ++slot) {
        Eigen::VectorXd eta = f.eta_f;
        Eigen::MatrixXd lambda = f.lambda_f;
        for (int other = 0; other < f.n_vars(); ++other) {
          if (other == slot) continue;
          eta.segment<4>(4 * other) += f.inbox[other].eta;
          lambda.block<4, 4>(4 * other, 4 * other) += f.inbox[other].lambda;
        }
        GaussianInfo msg;
        if (!marginalize_onto(eta, lambda, 4 * slot, msg)) {
          ++report.skipped_messages;
          continue;  // keep the previous message this iteration
        }
        f.outbox[slot].eta = cfg.damping * f.outbox[slot].eta + (1.0 - cfg.damping) * msg.eta;
        f.outbox[slot].lambda =
            cfg.damping * f.outbox[slot].lambda + (1.0 - cfg.damping) * msg.lambda;
      }
      (void)dim;
    }

    // beliefs and means
    double max_dt = 0.0, max_dth = 0.0;
    bool all_informative = true;
    for (auto& v : graph.variables) {
      GaussianInfo belief;
      for (int fi : graph.adjacency[v.id]) {
        const Factor& f = graph.factors[fi];
        belief += f.outbox[f.v1 == v.id ? 0 : 1];
      }
      belief.lambda = 0.5 * (belief.lambda + belief.lambda.transpose());
      v.belief = belief;
      if (belief.informative()) {
        // theta stays unwrapped during inference: wrapping here would flip the
        // +-pi branch (theta = 180 deg is the common facing configuration) and
        // make messages linearized under different branches inconsistent
        StateVec mean = belief.mean();
        max_dt = std::max(max_dt, (mean.head<3>() - v.mean.head<3>()).norm());
        max_dth = std::max(max_dth, std::abs(wrap_angle(mean[3] - v.mean[3])));
        v.mean = mean;
      } else {
        all_informative = false;
      }
    }

    report.iterations = it + 1;
    report.final_max_delta = std::max(max_dt, max_dth);
    if (cfg.trace) {
      *cfg.trace << "{\"iter\":" << it << ",\"max_delta_t\":" << max_dt
                 << ",\"max_delta_theta\":" << max_dth << ",\"beliefs\":[";
      for (std::size_t i = 0; i < graph.variables.size(); ++i) {
        const auto& v = graph.variables[i];
        *cfg.trace << (i ? "," : "") << "{\"id\":" << v.id << ",\"mean\":[" << v.mean[0] << ","
                   << v.mean[1] << "," << v.mean[2] << "," << v.mean[3]
                   << "],\"lambda_trace\":" << v.belief.lambda.trace() << "}";
      }
      *cfg.trace << "]}\n";
    }

    if (all_informative && it > 0 && max_dt < cfg.tol_translation && max_dth < cfg.tol_theta) {
      report.converged = true;
      break;
    }
  }
  return report;
}

DenseMapResult dense_map_solve(const FactorGraph& graph, const GraphNoiseConfig& cfg,
                               int max_outer, double tol, bool freeze_linearization) {
  FactorGraph work = graph;
  const int nv = static_cast<int>(work.variables.size());
  const int dim = 4 * nv;

  DenseMapResult result;
  Eigen::MatrixXd H;
  for (int it = 0; it < max_outer; ++it) {
    if (it == 0 || !freeze_linearization) {
      for (auto& f : work.factors) linearize(f, work.variables, cfg);
    }
    H = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (const auto& f : work.factors) {
      const std::array<int, 2> vars = {f.v1, f.v2};
      for (int i = 0; i < f.n_vars(); ++i) {
        b.segment<4>(4 * vars[i]) += f.eta_f.segment<4>(4 * i);
        for (int j = 0; j < f.n_vars(); ++j) {
          H.block<4, 4>(4 * vars[i], 4 * vars[j]) += f.lambda_f.block<4, 4>(4 * i, 4 * j);
        }
      }
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (lu.rank() < dim) {
      throw GaugeDeficiencyError("dense_map_solve: singular information matrix (missing priors)");
    }
    const Eigen::VectorXd x = lu.solve(b);
    double delta = 0.0;
    for (int v = 0; v < nv; ++v) {
      StateVec mean = x.segment<4>(4 * v);
      delta = std::max(delta, (mean.head<3>() - work.variables[v].mean.head<3>()).norm());
      delta = std::max(delta, std::abs(wrap_angle(mean[3] - work.variables[v].mean[3])));
      work.variables[v].mean = mean;
    }
    result.iterations = it + 1;
    if (delta < tol) break;
  }

  const Eigen::MatrixXd cov = H.inverse();
  result.means.resize(nv);
  result.covariances.resize(nv);
  for (int v = 0; v < nv; ++v) {
    result.means[v] = work.variables[v].mean;
    result.covariances[v] = cov.block<4, 4>(4 * v, 4 * v);
  }
  return result;
}

AlignmentEstimate extract_relative_pose(const FactorGraph& graph, int b_slot) {
  int seen = 0;
  const VariableNode* node = nullptr;
  for (const auto& v : graph.variables) {
    if (v.camera == 1 && seen++ == b_slot) {
      node = &v;
      break;
    }
  }
  if (!node) throw InvalidInputError("extract_relative_pose: no camera-B variable");

  AlignmentEstimate est = graph.init;
  double theta = node->mean[3];
  if (theta <= 0.0) theta += 2.0 * M_PI;
  theta = std::clamp(theta, 1e-12, 2.0 * M_PI - 1e-12);
  est.s = std::cos(theta / 2.0) / std::sin(theta / 2.0);
  est.rotation = rot_z(node->mean[3]);
  est.translation = node->mean.head<3>() - est.rotation * node->vio_pose.translation;
  est.lever_l = graph.lever_l;
  est.lever_k = graph.lever_k;
  est.has_lever_l = est.has_lever_k = true;
  est.residual = 0.0;
  return est;
}

double total_weighted_residual(const FactorGraph& graph, std::span<const StateVec> states) {
  double total = 0.0;
  for (const auto& f : graph.factors) {
    FactorEval eval;
    switch (f.kind) {
      case FactorKind::PosePrior:
        eval = eval_pose_prior(states[f.v1]);
        break;
      case FactorKind::Odometry:
        eval = eval_odometry(states[f.v1], states[f.v2]);
        break;
      case FactorKind::Detection:
        eval = eval_detection(states[f.v1], states[f.v2], f.det);
        break;
    }
    if (!eval.valid) continue;
    Eigen::VectorXd r = f.z - eval.h;
    if (f.kind != FactorKind::Detection) r[3] = wrap_angle(r[3]);
    total += r.dot(f.meas_precision * r);
  }
  return total;
}

}  // namespace ega
