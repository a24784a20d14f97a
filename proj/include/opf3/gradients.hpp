#pragma once

#include "opf3/powerflow.hpp"

namespace opf3 {

enum class GradientTag { Linear, Improved, FiniteDifference };
enum class InjectionKind { ActiveP, ReactiveQ };

// Dense partial derivatives of diagonal squared voltages w.r.t. injections:
// rows are observed nodes, columns actuated nodes, both over the network's
// node ordering (slack excluded).
struct GradientTable {
  GradientTag tag = GradientTag::Linear;
  Eigen::MatrixXd dv_dp;
  Eigen::MatrixXd dv_dq;
  const RadialNetwork* network = nullptr;
  const PowerFlowState* operating_state = nullptr;  // improved tables only
};

// Root-path accumulators of the lossless sensitivities. cum_r[b](phi, vphi)
// sums 2 Re(conj(z)^{phi vphi} alpha^{phi - vphi}) over the lines of the
// root->b path (entries absent from a line's phase set contribute zero);
// cum_x accumulates the -2 Im(...) analog. The sensitivity between two buses
// is the accumulator read at their lowest common ancestor, so hierarchical
// and dense evaluations read identical numbers.
struct LinearSensitivity {
  std::vector<Eigen::Matrix3d> cum_r;
  std::vector<Eigen::Matrix3d> cum_x;
};

LinearSensitivity build_linear_sensitivity(const RadialNetwork& net);

// Single-line contributions 2 Re(conj(z)^{phi vphi} alpha^{phi-vphi}) and
// -2 Im(...); zero when the pair is absent from the line's phases.
double line_r_contribution(const Line& line, Phase phi, Phase vphi);
double line_x_contribution(const Line& line, Phase phi, Phase vphi);

double linear_r_entry(const RadialNetwork& net, const LinearSensitivity& sens, int j_bus,
                      Phase phi, int h_bus, Phase vphi);
double linear_x_entry(const RadialNetwork& net, const LinearSensitivity& sens, int j_bus,
                      Phase phi, int h_bus, Phase vphi);

// State-independent table from the lossless model.
GradientTable linear_gradients(const RadialNetwork& net);

// d l_hat^{psi eta} / d u_h^{vphi} for one line at the given operating state,
// with the rank-1 reference phase phi_ref chosen by the caller.
Complex ell_derivative_hat(const RadialNetwork& net, const PowerFlowState& state, int line_index,
                           Phase psi, Phase eta, Phase phi_ref, int h_bus, Phase h_phase,
                           InjectionKind kind);

enum class ImprovedForm {
  Assembled,    // chain-rule assembly through the l-hat derivatives
  Factored,     // loss-weight times upstream sensitivity plus on-path bracket
  Compensated,  // full lossless entry minus the loss compensation terms
};

// Loss-aware gradient table evaluated at a converged nonlinear state. The
// assembled route is the default; the algebraically equal real forms exist
// for cross-checking.
GradientTable improved_gradients(const RadialNetwork& net, const PowerFlowState& state);

double improved_gradient_entry(const RadialNetwork& net, const PowerFlowState& state,
                               const LinearSensitivity& sens, int j_bus, Phase phi, int h_bus,
                               Phase vphi, InjectionKind kind,
                               ImprovedForm form = ImprovedForm::Assembled);

// Central difference of v_j^{phi phi} through the nonlinear solver.
double finite_difference_gradient(const RadialNetwork& net, const Injections& u, int j_bus,
                                  Phase phi, int h_bus, Phase h_phase, InjectionKind kind,
                                  double step = 1e-6);

// Full central-difference table (two tightly-converged solves per column).
GradientTable finite_difference_table(const RadialNetwork& net, const Injections& u,
                                      double step = 1e-6);

struct GradientErrorReport {
  double max_abs = 0.0;
  double frobenius = 0.0;
};

GradientErrorReport gradient_error(const GradientTable& table, const GradientTable& oracle);

}  // namespace opf3
