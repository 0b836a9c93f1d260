// SPDX-License-Identifier: Apache-2.0
//
// Command line harness: simulate synthetic two-rig sessions, run the
// closed-form alignment solver, refine with Gaussian belief propagation, and
// sweep noise levels.
//
// Exit codes: 0 success, 1 generic error, 2 under-constrained, 3 no solution,
// 4 critical configuration, 5 refinement did not converge.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "ega/factor_graph.hpp"
#include "ega/ransac.hpp"
#include "ega/session_io.hpp"
#include "ega/sim.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitUnderConstrained = 2;
constexpr int kExitNoSolution = 3;
constexpr int kExitCritical = 4;
constexpr int kExitNonConvergence = 5;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("EGA_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 1;
}

Eigen::Vector3d parse_vec3(const std::vector<double>& v, const char* flag) {
  if (v.size() != 3) throw ega::InvalidInputError(std::string(flag) + " needs 3 values");
  return {v[0], v[1], v[2]};
}

int run_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& truth_path, std::optional<std::uint64_t> seed) {
  ega::ScenarioConfig cfg =
      config_path.empty() ? ega::default_scenario_config() : ega::read_scenario_config(config_path);
  if (seed) cfg.seed = *seed;
  const ega::Scenario scenario = ega::generate(cfg);
  ega::write_session(out_path, ega::session_from_scenario(scenario));

  if (!truth_path.empty()) {
    ega::TruthSidecar sidecar;
    sidecar.truth = scenario.ground_truth;
    sidecar.cube = scenario.cube;
    const auto priors = ega::perturb_lever_priors(scenario, cfg.lever_prior_shift);
    sidecar.prior_l = priors.first;
    sidecar.prior_k = priors.second;
    for (const auto& d : scenario.detections_a) sidecar.outliers_a.push_back(d.outlier);
    for (const auto& d : scenario.detections_b) sidecar.outliers_b.push_back(d.outlier);
    ega::write_sidecar(truth_path, sidecar);
  }
  std::cout << "session: " << out_path << " (" << scenario.correspondences.size()
            << " detections, " << scenario.dropped_detections << " dropped)\n";
  return 0;
}

ega::ConstraintMode make_mode(const std::string& name, const std::optional<Eigen::Vector3d>& prior,
                              double soft_weight) {
  if (name == "none") return ega::ConstraintMode::none();
  if (name == "sym-hard") return ega::ConstraintMode::symmetry_hard();
  if (name == "sym-soft") return ega::ConstraintMode::symmetry_soft(soft_weight);
  if (name == "prior-hard" || name == "prior-soft") {
    if (!prior) {
      throw ega::InvalidInputError("constraint '" + name + "' needs --prior-l / --prior-k");
    }
    return name == "prior-hard" ? ega::ConstraintMode::prior_hard(*prior)
                                : ega::ConstraintMode::prior_soft(*prior, soft_weight);
  }
  throw ega::InvalidInputError("unknown constraint '" + name + "'");
}

int run_solve(const std::string& session_path, const std::string& mode,
              const std::string& constraint, const std::vector<double>& prior_l_v,
              const std::vector<double>& prior_k_v, double soft_weight, bool use_ransac,
              bool use_rect, std::uint64_t seed, double ransac_threshold,
              bool skip_critical_check, double time_tol, const std::string& out_path) {
  const ega::SessionData session = ega::read_session(session_path);
  const ega::SessionView view = ega::resolve_session(session, time_tol);

  std::vector<ega::PointCorrespondence> corrs;
  if (mode == "onedir") {
    for (const auto& c : view.correspondences) {
      if (c.direction == ega::Direction::AseesB) corrs.push_back(c);
    }
  } else if (mode == "bidir") {
    corrs = view.correspondences;
  } else {
    throw ega::InvalidInputError("--mode must be onedir or bidir");
  }

  std::optional<Eigen::Vector3d> prior_l, prior_k;
  if (!prior_l_v.empty()) prior_l = parse_vec3(prior_l_v, "--prior-l");
  if (!prior_k_v.empty()) prior_k = parse_vec3(prior_k_v, "--prior-k");

  ega::SolveOptions opts;
  opts.mode_l = make_mode(constraint, prior_l, soft_weight);
  opts.mode_k = make_mode(constraint, prior_k, soft_weight);
  opts.use_rect_qep = use_rect;

  const ega::RigCalibration& rig = view.stream_b.rig;  // L lives on the B wearer
  ega::EstimateRecord record;

  std::vector<ega::PointCorrespondence> working = corrs;
  if (use_ransac) {
    ega::RansacConfig rcfg;
    rcfg.seed = seed;
    rcfg.inlier_threshold = ransac_threshold;
    const ega::RansacResult rres = ega::ransac_align(working, opts, rig, rcfg);
    record.estimate = rres.estimate;
    record.inliers = static_cast<int>(
        std::count(rres.inlier_mask.begin(), rres.inlier_mask.end(), true));
    std::vector<ega::PointCorrespondence> inliers;
    for (std::size_t i = 0; i < working.size(); ++i) {
      if (rres.inlier_mask[i]) inliers.push_back(working[i]);
    }
    working = std::move(inliers);
  }

  if (skip_critical_check) {
    if (!use_ransac) record.estimate = ega::solve_alignment(working, opts, rig);
  } else {
    const ega::CriticalDetectResult det = ega::detect_critical(working, opts, rig);
    record.estimate = det.estimate;
    record.critical = det.critical;
  }

  std::cout << ega::estimate_to_json(record) << "\n";
  if (!out_path.empty()) ega::write_estimate(out_path, record);
  return record.critical ? kExitCritical : 0;
}

int run_refine(const std::string& session_path, const std::string& init_path,
               const std::string& truth_path, double damping, int relin_every, int max_iters,
               double huber_delta, bool use_reference, double time_tol,
               const std::string& out_path, const std::string& log_path) {
  const ega::SessionData session = ega::read_session(session_path);
  const ega::SessionView view = ega::resolve_session(session, time_tol);
  const ega::EstimateRecord init = ega::read_estimate(init_path);

  const Eigen::Vector3d lever_l = init.estimate.lever_l;
  const Eigen::Vector3d lever_k = init.estimate.lever_k;

  ega::GbpConfig cfg;
  cfg.damping = damping;
  cfg.relinearize_every = relin_every;
  cfg.max_iterations = max_iters;
  if (huber_delta > 0.0) {
    cfg.noise.huber = true;
    cfg.noise.huber_delta = huber_delta;
  }

  ega::FactorGraph graph =
      ega::build_graph(view.stream_a, view.stream_b, view.detections_a, view.detections_b,
                       init.estimate, lever_k, lever_l, cfg.noise);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    cfg.trace = &log;
  }

  bool converged = true;
  ega::EstimateRecord refined;
  int iterations = 0;
  if (max_iters == 0) {
    refined.estimate = init.estimate;
  } else if (use_reference) {
    const ega::DenseMapResult dense = ega::dense_map_solve(graph, cfg.noise);
    for (auto& v : graph.variables) v.mean = dense.means[v.id];
    refined.estimate = ega::extract_relative_pose(graph);
    iterations = dense.iterations;
  } else {
    const ega::GbpReport report = ega::gbp_iterate(graph, cfg);
    converged = report.converged;
    iterations = report.iterations;
    refined.estimate = ega::extract_relative_pose(graph);
  }
  refined.inliers = init.inliers;

  std::cout << ega::estimate_to_json(refined) << "\n";
  std::cout << "{\"type\":\"convergence\",\"converged\":" << (converged ? "true" : "false")
            << ",\"iterations\":" << iterations << "}\n";

  if (!truth_path.empty()) {
    // before/after cube reprojection errors against the ground-truth sidecar
    const ega::TruthSidecar sidecar = ega::read_sidecar(truth_path);
    ega::Scenario scn;
    scn.config.intrinsics = view.stream_b.intrinsics;
    scn.config.rig = view.stream_b.rig;
    scn.ground_truth = sidecar.truth;
    scn.stream_b = view.stream_b.imu_poses;
    scn.cube = sidecar.cube;
    const auto before = ega::cube_reprojection_error(init.estimate, scn);
    const auto after = ega::cube_reprojection_error(refined.estimate, scn);
    std::cout << "{\"type\":\"cube_error\",\"initial_px\":" << before.mean_px
              << ",\"refined_px\":" << after.mean_px << "}\n";
  }

  if (!out_path.empty()) ega::write_estimate(out_path, refined);
  return converged ? 0 : kExitNonConvergence;
}

int run_sweep(const std::string& config_path, const std::string& out_path,
              const std::string& summary_path, std::optional<std::uint64_t> seed) {
  ega::SweepConfig cfg;
  if (!config_path.empty()) {
    cfg = ega::read_sweep_config(config_path);
  } else {
    cfg.base = ega::default_scenario_config();
    for (int i = 0; i <= 10; ++i) cfg.sigmas.push_back(0.1 * i);
    cfg.trials = 100;
    cfg.variants = {"onedir", "bidir-none", "bidir-soft", "bidir-hard"};
  }
  if (seed) cfg.base.seed = *seed;

  std::vector<ega::SweepVariant> variants;
  for (const auto& code : cfg.variants) variants.push_back(ega::parse_sweep_variant(code));
  const auto rows = ega::sweep_noise(cfg.base, cfg.sigmas, cfg.trials, variants);
  ega::write_sweep_csv(out_path, rows);
  if (!summary_path.empty()) {
    ega::write_sweep_summary_csv(summary_path, ega::aggregate_sweep(rows));
  }
  std::cout << "sweep: " << rows.size() << " rows -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ego-motion alignment from mutual tracklets"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out, sim_truth;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic session");
  sim->add_option("--config", sim_config, "scenario config (JSON)");
  sim->add_option("--out", sim_out, "output session file")->required();
  sim->add_option("--truth", sim_truth, "ground-truth sidecar path");
  sim->add_option("--seed", sim_seed, "override the scenario seed");

  // solve
  std::string so_session, so_mode = "bidir", so_constraint = "none", so_out;
  std::vector<double> so_prior_l, so_prior_k;
  double so_weight = 1.0, so_threshold = 1e-3, so_time_tol = 1e-3;
  bool so_ransac = false, so_rect = false, so_no_critical = false;
  std::uint64_t so_seed = default_seed();
  auto* solve = app.add_subcommand("solve", "closed-form alignment from a session");
  solve->add_option("--session", so_session)->required();
  solve->add_option("--mode", so_mode, "onedir | bidir");
  solve->add_option("--constraint", so_constraint,
                    "none | sym-hard | sym-soft | prior-hard | prior-soft");
  solve->add_option("--prior-l", so_prior_l, "lever prior for L (3 floats)")->expected(3);
  solve->add_option("--prior-k", so_prior_k, "lever prior for K (3 floats)")->expected(3);
  solve->add_option("--soft-weight", so_weight);
  solve->add_flag("--ransac", so_ransac, "reject outliers first");
  solve->add_flag("--rect-qep", so_rect, "rectangular QEP refinement");
  solve->add_flag("--no-critical-check", so_no_critical, "skip the triple-solve vote");
  solve->add_option("--seed", so_seed, "RANSAC seed (default: EGA_SEED or 1)");
  solve->add_option("--ransac-threshold", so_threshold);
  solve->add_option("--time-tol", so_time_tol, "detection-to-pose matching tolerance [s]");
  solve->add_option("--out", so_out, "write the estimate record here");

  // refine
  std::string rf_session, rf_init, rf_truth, rf_out, rf_log;
  double rf_damping = 0.4, rf_huber = 0.0, rf_time_tol = 1e-3;
  int rf_relin = 5, rf_max_iters = 200;
  bool rf_reference = false;
  auto* refine = app.add_subcommand("refine", "GBP refinement of an initial estimate");
  refine->add_option("--session", rf_session)->required();
  refine->add_option("--init", rf_init, "initial estimate (from solve)")->required();
  refine->add_option("--truth", rf_truth, "sidecar for before/after cube errors");
  refine->add_option("--damping", rf_damping);
  refine->add_option("--relin-every", rf_relin);
  refine->add_option("--max-iters", rf_max_iters);
  refine->add_option("--huber", rf_huber, "Huber delta (Mahalanobis units, 0 = off)");
  refine->add_flag("--reference", rf_reference, "use the dense MAP reference solver");
  refine->add_option("--time-tol", rf_time_tol);
  refine->add_option("--out", rf_out);
  refine->add_option("--log", rf_log, "per-iteration convergence log (JSONL)");

  // sweep
  std::string sw_config, sw_out, sw_summary;
  std::optional<std::uint64_t> sw_seed;
  auto* sweep = app.add_subcommand("sweep", "noise sweep across solver variants");
  sweep->add_option("--config", sw_config, "sweep config (JSON)");
  sweep->add_option("--out", sw_out, "CSV output")->required();
  sweep->add_option("--summary", sw_summary, "aggregated per-cell CSV");
  sweep->add_option("--seed", sw_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_config, sim_out, sim_truth, sim_seed);
    if (solve->parsed()) {
      return run_solve(so_session, so_mode, so_constraint, so_prior_l, so_prior_k, so_weight,
                       so_ransac, so_rect, so_seed, so_threshold, so_no_critical, so_time_tol,
                       so_out);
    }
    if (refine->parsed()) {
      return run_refine(rf_session, rf_init, rf_truth, rf_damping, rf_relin, rf_max_iters,
                        rf_huber, rf_reference, rf_time_tol, rf_out, rf_log);
    }
    if (sweep->parsed()) return run_sweep(sw_config, sw_out, sw_summary, sw_seed);
  } catch (const ega::UnderConstrainedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnderConstrained;
  } catch (const ega::NoSolutionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoSolution;
  } catch (const ega::CriticalConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCritical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
