#include <Eigen/Dense>
#include <iostream>
#include "ega/sim.hpp"
#include "ega/factor_graph.hpp"
using namespace ega;

int main(int argc, char** argv) {
  ScenarioConfig cfg = default_scenario_config();
  cfg.seed = 42;
  Scenario scn = generate(cfg);
  CameraStream sa{scn.stream_a, cfg.intrinsics, cfg.rig};
  CameraStream sb{scn.stream_b, cfg.intrinsics, cfg.rig};
  std::vector<GraphDetection> da;
  for (auto& d : scn.detections_a) da.push_back({d.frame, d.pixel});
  std::vector<GraphDetection> db;
  GraphNoiseConfig ncfg;
  FactorGraph t2 = build_graph(sa, sb, da, db, scn.ground_truth,
                               scn.ground_truth.lever_k, scn.ground_truth.lever_l, ncfg);
  {  // keep chains + priors + first detection only -> a tree
    std::vector<Factor> kept;
    bool have_det = false;
    for (auto& f : t2.factors) {
      if (f.kind == FactorKind::Detection) {
        if (have_det) continue;
        have_det = true;
      }
      kept.push_back(f);
    }
    t2.factors = kept;
    for (auto& a : t2.adjacency) a.clear();
    for (int fi = 0; fi < (int)t2.factors.size(); ++fi) {
      t2.adjacency[t2.factors[fi].v1].push_back(fi);
      if (t2.factors[fi].v2 >= 0) t2.adjacency[t2.factors[fi].v2].push_back(fi);
    }
  }
  std::vector<StateVec> truth;
  for (auto& v : t2.variables) truth.push_back(v.mean);

  GbpConfig gcfg;
  gcfg.damping = argc > 1 ? atof(argv[1]) : 0.0;
  gcfg.relinearize_every = argc > 2 ? atoi(argv[2]) : 5;
  gcfg.max_iterations = 1;
  for (int it = 0; it < 30; ++it) {
    gcfg.freeze_linearization = !(gcfg.relinearize_every > 0 && it % gcfg.relinearize_every == 0);
    gbp_iterate(t2, gcfg);
    double dmax = 0;
    int worst = -1;
    for (size_t i = 0; i < t2.variables.size(); ++i) {
      double d = (t2.variables[i].mean.head<3>() - truth[i].head<3>()).norm();
      d = std::max(d, std::abs(wrap_angle(t2.variables[i].mean[3] - truth[i][3])));
      if (d > dmax) { dmax = d; worst = (int)i; }
    }
    std::cout << "it=" << it << " max|state-truth|=" << dmax << " (var " << worst << ") means[6]=("
              << t2.variables[6].mean.transpose() << ") informative="
              << t2.variables[6].belief.informative() << "\n";
  }
  return 0;
}
