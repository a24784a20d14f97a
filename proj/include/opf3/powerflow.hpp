#pragma once

#include <vector>

#include "opf3/network.hpp"

namespace opf3 {

enum class ModelTag { Nonlinear, Linear, Bva };

// Complex injections on every bus's energized phases (root entries unused).
struct Injections {
  std::vector<Eigen::VectorXcd> s;

  static Injections nominal(const RadialNetwork& net);
  static Injections zero(const RadialNetwork& net);
  Complex at(const RadialNetwork& net, int bus, Phase p) const;
  void set(const RadialNetwork& net, int bus, Phase p, Complex value);
};

struct PowerFlowOptions {
  double tol = 1e-8;    // p.u.; bounds both the voltage change and the (1b) mismatch
  int max_sweeps = 100;
};

// Converged electrical state of one of the three models. All blocks use the
// line's phase set, which by construction equals the downstream bus's
// energized set.
struct PowerFlowState {
  ModelTag tag = ModelTag::Nonlinear;
  std::vector<Eigen::VectorXcd> V;      // complex bus voltages (nonlinear only)
  std::vector<Eigen::VectorXcd> I;      // complex line currents (nonlinear only)
  std::vector<PhaseIndexedMatrix> v;    // per bus, v_j = V_j V_j^H
  std::vector<PhaseIndexedMatrix> S;    // per line, sending end
  std::vector<PhaseIndexedMatrix> ell;  // per line (all-zero for the linear model)
  std::vector<Eigen::VectorXcd> Lambda; // per line, diag(S)
  Injections u;
  int sweeps = 0;
  double residual = 0.0;
  const RadialNetwork* network = nullptr;

  double v_diag(int bus, Phase p) const;
  // Stacked squared voltage magnitudes over the network's node ordering.
  Eigen::VectorXd v_diag_vector() const;
};

// Nonlinear branch flow model, solved by backward current / forward voltage
// sweeps from a flat start. The returned state satisfies the voltage-drop
// equation exactly by construction and the per-bus power balance to `tol`.
PowerFlowState solve_nonlinear_pf(const RadialNetwork& net, const Injections& u,
                                  const PowerFlowOptions& opts = {});

// Lossless linearized model: single backward flow accumulation, S = gamma
// Diag(Lambda), forward voltage sweep. Always solvable.
PowerFlowState solve_linear_pf(const RadialNetwork& net, const Injections& u);

// Balanced-voltage-approximation model: keeps the loss terms in the flow
// balance and closes ell through the rank-1 relation, with the reference
// phase bound to the row phase of the entry being updated.
PowerFlowState solve_bva_pf(const RadialNetwork& net, const Injections& u,
                            const PowerFlowOptions& opts = {});

struct ResidualReport {
  std::vector<double> line_voltage_eq;   // per-line max-abs residual of the voltage-drop equation
  std::vector<double> bus_power_balance; // per-bus max-abs residual of the power balance
  std::vector<double> rank1_defect;      // per-line second-largest |eigenvalue| of [[v,S],[S^H,ell]]
  double max_voltage_eq = 0.0;
  double max_power_balance = 0.0;
  double max_rank1_defect = 0.0;
};

ResidualReport pf_residuals(const RadialNetwork& net, const PowerFlowState& state);

// Slack-bus injection implied by a state: sum of child sending-end flows.
Eigen::VectorXcd slack_injection(const RadialNetwork& net, const PowerFlowState& state);

// Backward/forward decomposition of the gap between the lossless linear model
// and the balanced-voltage model at the same injections: M blocks from the
// downstream loss sweep, then accumulated per-bus voltage error matrices.
struct VoltageErrorReport {
  std::vector<PhaseIndexedMatrix> M;      // per line
  std::vector<PhaseIndexedMatrix> error;  // per bus, predicted (linear - bva)
  std::vector<Eigen::VectorXd> diag_error;
};

VoltageErrorReport voltage_error_decomposition(const RadialNetwork& net, const PowerFlowState& bva_state);

// Real quadratic form sum_{psi,eta} l^{psi eta} z^{phi psi} conj(z^{phi eta})
// of a line's loss block against row `phi` of its impedance. Nonnegative for
// PSD ell up to roundoff.
double line_loss_quadform(const Line& line, const PhaseIndexedMatrix& ell, Phase phi);

// Loss weight w = 1 - quadform / v_upstream^{phi phi}.
double line_loss_weight(const RadialNetwork& net, const PowerFlowState& state, int line_index,
                        Phase phi);

}  // namespace opf3
