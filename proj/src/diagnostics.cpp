#include "opf3/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <random>

#include "opf3/errors.hpp"

namespace opf3 {

double contraction_factor(double delta, double sigma, double nu, double epsilon, double l_v,
                          double m_v, double big_delta, double e1, double norm_a) {
  const double a = 1.0 - sigma * big_delta;
  const double b = 1.0 - nu * sigma * epsilon;
  double rho2 = std::max(a * a, b * b);
  rho2 += sigma * norm_a * std::sqrt(nu) *
          (b * (m_v * delta + e1) + sigma * std::abs(big_delta - nu * epsilon) * (l_v + e1));
  rho2 += nu * sigma * sigma * norm_a * norm_a * (l_v + e1) * (l_v + e1);
  return std::sqrt(std::max(0.0, rho2));
}

double limit_ball_radius(double sigma, double m_mu, double e1, double epsilon, double nu,
                         double rho, double norm_a) {
  if (rho >= 1.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0) * sigma * m_mu * (norm_a * e1 + epsilon * std::sqrt(nu)) / (1.0 - rho);
}

namespace {

constexpr double kNormA = 1.4142135623730951;  // sqrt(2)

// Tight solver settings for probing: finite differences divide by small
// steps, so the flow must be converged well below them.
PowerFlowOptions tight_pf() {
  PowerFlowOptions o;
  o.tol = 1e-13;
  o.max_sweeps = 400;
  return o;
}

// Jacobian of the stacked squared voltages w.r.t. the controllable (p, q)
// coordinates, by central differences. Columns: p block then q block.
Eigen::MatrixXd control_jacobian(const RadialNetwork& net, const ActuatorIndex& act,
                                 const ControlVector& u, double step) {
  const int m = act.count();
  Eigen::MatrixXd jac(net.node_count(), 2 * m);
  for (int c = 0; c < m; ++c) {
    for (int kind = 0; kind < 2; ++kind) {
      ControlVector up = u, dn = u;
      (kind == 0 ? up.p : up.q)(c) += step;
      (kind == 0 ? dn.p : dn.q)(c) -= step;
      PowerFlowState sp = solve_nonlinear_pf(net, injections_with_controls(net, act, up), tight_pf());
      PowerFlowState sn = solve_nonlinear_pf(net, injections_with_controls(net, act, dn), tight_pf());
      jac.col(kind * m + c) = (sp.v_diag_vector() - sn.v_diag_vector()) / (2.0 * step);
    }
  }
  return jac;
}

Eigen::VectorXd stacked_v(const RadialNetwork& net, const ActuatorIndex& act,
                          const ControlVector& u) {
  return solve_nonlinear_pf(net, injections_with_controls(net, act, u), tight_pf())
      .v_diag_vector();
}

// Scalar md^T v(u), one tight solve per evaluation.
double dual_weighted_v(const RadialNetwork& net, const ActuatorIndex& act, const ControlVector& u,
                       const Eigen::VectorXd& md) {
  return md.dot(stacked_v(net, act, u));
}

ControlVector shifted(const ControlVector& u, const Eigen::VectorXd& tau) {
  const int m = static_cast<int>(u.p.size());
  ControlVector out = u;
  out.p += tau.head(m);
  out.q += tau.tail(m);
  return out;
}

// Hessian of md^T v at a point by second-order central differences.
Eigen::MatrixXd weighted_hessian(const RadialNetwork& net, const ActuatorIndex& act,
                                 const ControlVector& u, const Eigen::VectorXd& md, double h) {
  const int d = 2 * act.count();
  Eigen::MatrixXd hess(d, d);
  const double psi0 = dual_weighted_v(net, act, u, md);
  std::vector<double> plus(d), minus(d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e(i) = h;
    plus[i] = dual_weighted_v(net, act, shifted(u, e), md);
    minus[i] = dual_weighted_v(net, act, shifted(u, -e), md);
    hess(i, i) = (plus[i] - 2.0 * psi0 + minus[i]) / (h * h);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
      e(i) = h;
      e(j) = h;
      const double pp = dual_weighted_v(net, act, shifted(u, e), md);
      e(j) = -h;
      const double pm = dual_weighted_v(net, act, shifted(u, e), md);
      e(i) = -h;
      e(j) = h;
      const double mp = dual_weighted_v(net, act, shifted(u, e), md);
      e(j) = -h;
      const double mm = dual_weighted_v(net, act, shifted(u, e), md);
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4.0 * h * h);
    }
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace

ConvergenceDiagnostics convergence_diagnostics(const RadialNetwork& net,
                                               const SolverState& z_star,
                                               const SolverConfig& cfg, const ProbeSpec& probe) {
  if (probe.samples < 2) throw InsufficientSamples("need at least 2 probe samples");
  ActuatorIndex act = ActuatorIndex::build(net);
  const int d = 2 * act.count();
  if (d == 0) throw InsufficientSamples("network has no controllable coordinates");

  std::mt19937 rng(probe.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto ball_sample = [&]() {
    Eigen::VectorXd tau(d);
    for (int i = 0; i < d; ++i) tau(i) = gauss(rng);
    tau *= probe.delta * std::pow(unif(rng), 1.0 / d) / tau.norm();
    return tau;
  };

  ConvergenceDiagnostics diag;
  diag.delta_probe = probe.delta;
  diag.samples = probe.samples;
  diag.nu = cfg.sigma_mu / cfg.sigma_u;
  diag.M_mu = std::sqrt(z_star.mu.lower.squaredNorm() + z_star.mu.upper.squaredNorm());

  const Eigen::VectorXd v_star = stacked_v(net, act, z_star.u);

  for (int s = 0; s < probe.samples; ++s) {
    const Eigen::VectorXd tau = ball_sample();
    const ControlVector us = shifted(z_star.u, tau);
    const Eigen::MatrixXd jac = control_jacobian(net, act, us, probe.fd_step);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    diag.L_v = std::max(diag.L_v, svd.singularValues()(0));

    const Eigen::VectorXd vs = stacked_v(net, act, us);
    const double taylor = (vs - v_star - jac * tau).norm() / (tau.squaredNorm());
    diag.M_v = std::max(diag.M_v, taylor);

    // Gradient discrepancy against the oracle, restricted to controllable
    // columns.
    PowerFlowState state = solve_nonlinear_pf(net, injections_with_controls(net, act, us),
                                              tight_pf());
    GradientTable imp = improved_gradients(net, state);
    const int m = act.count();
    double worst = 0.0;
    for (int c = 0; c < m; ++c) {
      const int col = act.node_of[c];
      worst = std::max(worst, (imp.dv_dp.col(col) - jac.col(c)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (imp.dv_dq.col(col) - jac.col(m + c)).cwiseAbs().maxCoeff());
    }
    diag.e1_estimate = std::max(diag.e1_estimate, worst);
  }

  // Averaged-Hessian lower curvature: objective Hessian (2 per coordinate)
  // plus the dual-weighted voltage curvature along sampled segments.
  const Eigen::VectorXd md = z_star.mu.upper - z_star.mu.lower;
  diag.Delta = std::numeric_limits<double>::infinity();
  for (int s = 0; s < std::max(1, probe.hessian_samples); ++s) {
    const Eigen::VectorXd tau = ball_sample();
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
    const double thetas[3] = {1.0 / 6.0, 0.5, 5.0 / 6.0};
    for (double theta : thetas)
      avg += weighted_hessian(net, act, shifted(z_star.u, theta * tau), md, probe.hessian_step);
    avg /= 3.0;
    avg += 2.0 * Eigen::MatrixXd::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(avg, Eigen::EigenvaluesOnly);
    diag.Delta = std::min(diag.Delta, es.eigenvalues()(0));
  }

  diag.rho = contraction_factor(probe.delta, cfg.sigma_u, diag.nu, cfg.epsilon, diag.L_v, diag.M_v,
                                diag.Delta, diag.e1_estimate, kNormA);
  diag.rho_lt_one = diag.rho < 1.0;
  diag.ball_radius =
      limit_ball_radius(cfg.sigma_u, diag.M_mu, diag.e1_estimate, cfg.epsilon, diag.nu, diag.rho,
                        kNormA);
  return diag;
}

}  // namespace opf3
