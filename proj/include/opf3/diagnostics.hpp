#pragma once

#include "opf3/solver.hpp"

namespace opf3 {

struct ProbeSpec {
  double delta = 0.01;    // sampling radius around the converged controls
  int samples = 6;        // Jacobian / nonlinearity samples
  int hessian_samples = 2;
  unsigned seed = 20240601;
  double fd_step = 1e-6;
  double hessian_step = 1e-3;
};

struct ConvergenceDiagnostics {
  double e1_estimate = 0.0;  // max-abs gradient discrepancy seen in the ball
  double L_v = 0.0;          // largest sampled Jacobian spectral norm
  double M_v = 0.0;          // largest sampled second-order Taylor ratio
  double M_mu = 0.0;         // norm of the converged duals
  double Delta = 0.0;        // smallest eigenvalue of the sampled averaged Hessian
  double nu = 0.0;           // sigma_mu / sigma_u
  double rho = 0.0;          // per-iteration contraction factor estimate
  double ball_radius = 0.0;  // limiting neighborhood radius in the nu-norm
  double delta_probe = 0.0;
  int samples = 0;
  bool rho_lt_one = false;
};

// Contraction-factor formula: all constants supplied explicitly so tests can
// grid-evaluate it. norm_a is the operator norm of the stacked +-identity
// constraint map (sqrt(2) for a two-sided voltage band).
double contraction_factor(double delta, double sigma, double nu, double epsilon, double l_v,
                          double m_v, double big_delta, double e1, double norm_a);

double limit_ball_radius(double sigma, double m_mu, double e1, double epsilon, double nu,
                         double rho, double norm_a);

// Sampling-based estimates of the convergence constants around a converged
// solver state, then the contraction factor and limiting radius. Estimates
// are sampled suprema/infima, so they are optimistic lower bounds.
ConvergenceDiagnostics convergence_diagnostics(const RadialNetwork& net,
                                               const SolverState& z_star,
                                               const SolverConfig& cfg, const ProbeSpec& probe);

}  // namespace opf3
