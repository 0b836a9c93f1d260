#include <Eigen/Dense>
#include <iostream>
#include "ega/sim.hpp"
#include "ega/qep.hpp"
using namespace ega;
int main() {
  ScenarioConfig cfg = default_scenario_config();
  cfg.seed = 42;
  Scenario scn = generate(cfg);
  QepPencil p = assemble_pencil(scn.correspondences, ConstraintMode::none(),
                                ConstraintMode::none(), cfg.rig, gravity_axis());
  std::cout << "pencil " << p.rows() << "x" << p.cols() << "\n";
  Eigen::VectorXd xt(p.cols());
  xt << scn.ground_truth.lever_l, scn.ground_truth.lever_k, scn.ground_truth.translation, 1.0;
  std::cout << "residual at truth s=" << scn.ground_truth.s << " : "
            << (p.at(scn.ground_truth.s) * xt).norm() << "\n";
  const int n = p.cols();
  Eigen::MatrixXd M0 = p.D0.transpose()*p.D0, M1 = p.D0.transpose()*p.D1, M2 = p.D0.transpose()*p.D2;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(2*n,2*n), G = Eigen::MatrixXd::Identity(2*n,2*n);
  F.topRightCorner(n,n).setIdentity(); F.bottomLeftCorner(n,n) = -M0; F.bottomRightCorner(n,n) = -M1;
  G.bottomRightCorner(n,n) = M2;
  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> es; es.compute(F,G,true);
  for (int i = 0; i < 2*n; ++i) {
    auto a = es.alphas()[i]; double b = es.betas()[i];
    std::complex<double> s = a / b;
    Eigen::VectorXcd v = es.eigenvectors().col(i).head(n);
    std::complex<double> last = v[n-1];
    std::cout << i << ": alpha=" << a << " beta=" << b << " s=" << s
              << " |last|/|x|=" << std::abs(last)/v.norm();
    if (std::abs(s.imag()) < 1e-6*(1+std::abs(s.real())) && std::isfinite(s.real())) {
      Eigen::VectorXcd xh = v / last;
      std::cout << " residual=" << (p.at(s.real()) * xh.real()).norm();
    }
    std::cout << "\n";
  }
  auto sols = solve_square_qep(p);
  std::cout << "solve_square_qep returned " << sols.size() << " solutions:\n";
  for (auto& [s, x] : sols) std::cout << "  s=" << s << " res=" << (p.at(s)*x).norm() << "\n";
}
