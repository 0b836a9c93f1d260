#include <Eigen/Dense>
#include <iostream>
#include "ega/sim.hpp"
#include "ega/factor_graph.hpp"
using namespace ega;

double wrapped_diff(const StateVec& a, const StateVec& b) {
  double d = (a.head<3>() - b.head<3>()).norm();
  return std::max(d, std::abs(wrap_angle(a[3] - b[3])));
}

int main(int argc, char** argv) {
  ScenarioConfig cfg = default_scenario_config();
  cfg.seed = 42;
  Scenario scn = generate(cfg);
  CameraStream sa{scn.stream_a, cfg.intrinsics, cfg.rig};
  CameraStream sb{scn.stream_b, cfg.intrinsics, cfg.rig};
  std::vector<GraphDetection> da, db;
  for (auto& d : scn.detections_a) da.push_back({d.frame, d.pixel});
  for (auto& d : scn.detections_b) db.push_back({d.frame, d.pixel});
  GraphNoiseConfig ncfg;
  FactorGraph graph = build_graph(sa, sb, da, db, scn.ground_truth,
                                  scn.ground_truth.lever_k, scn.ground_truth.lever_l, ncfg);
  std::vector<StateVec> truth;
  for (auto& v : graph.variables) truth.push_back(v.mean);

  double damping = argc > 1 ? atof(argv[1]) : 0.4;
  int relin = argc > 2 ? atoi(argv[2]) : 5;
  GbpConfig gcfg;
  gcfg.damping = damping;
  gcfg.relinearize_every = relin;
  gcfg.max_iterations = 1;  // manual stepping
  FactorGraph g = graph;
  for (int it = 0; it < 40; ++it) {
    gcfg.freeze_linearization = !(relin > 0 && it % relin == 0);
    gbp_iterate(g, gcfg);
    double dmax = 0;
    int worst = -1;
    for (size_t i = 0; i < g.variables.size(); ++i) {
      double d = wrapped_diff(g.variables[i].mean, truth[i]);
      if (d > dmax) { dmax = d; worst = (int)i; }
    }
    if (it % 2 == 0 || it > 30)
      std::cout << "it=" << it << " max|state-truth|=" << dmax << " (var " << worst << ")\n";
  }
  return 0;
}
