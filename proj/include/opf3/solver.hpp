#pragma once

#include <optional>

#include "opf3/gradients.hpp"
#include "opf3/trace.hpp"

namespace opf3 {

enum class ExecutionMode { Centralized, Hierarchical };

// Which voltage drives the dual update. Measured is the algorithm as
// designed (feedback from the solved nonlinear flow); LinearModel substitutes
// the lossless model's prediction and exists to demonstrate how accumulated
// linearization error parks a controller below the true safety limit.
enum class DualVoltageSource { Measured, LinearModel };

struct SolverConfig {
  double sigma_u = 1.5e-2;
  double sigma_mu = 5.7e-3;
  double epsilon = 1e-3;
  double lambda_stop = 1e-6;
  int max_iters = 2000;
  GradientTag gradient_mode = GradientTag::Improved;
  ExecutionMode execution_mode = ExecutionMode::Centralized;
  double v_lower = 0.95 * 0.95;  // squared-magnitude bounds, p.u.^2
  double v_upper = 1.05 * 1.05;
  bool skip_zero_duals = true;
  DualVoltageSource dual_source = DualVoltageSource::Measured;
  PowerFlowOptions pf;

  void validate() const;
};

// Controllable (bus, phase) coordinates with their boxes and nominal values.
struct ActuatorIndex {
  std::vector<NodeRef> coords;
  std::vector<int> node_of;  // node index of each coordinate
  Eigen::VectorXd p_min, p_max, q_min, q_max, p_nom, q_nom;

  static ActuatorIndex build(const RadialNetwork& net);
  int count() const { return static_cast<int>(coords.size()); }
};

struct ControlVector {
  Eigen::VectorXd p, q;
};

struct DualPair {
  Eigen::VectorXd lower, upper;  // over node coordinates, always >= 0
};

// Coupling sums alpha_h (active) and beta_h (reactive) per actuated
// coordinate: (dv/du)^T (mu_upper - mu_lower).
struct Coupling {
  Eigen::VectorXd alpha, beta;
};

// Per-iteration protocol accounting for the hierarchical execution.
struct IterationMessages {
  int bus_to_rc_uploads = 0;      // member-bus state uploads (unclustered buses upload to the CC)
  int rc_to_cc_aggregates_p = 0;  // weighted dual-sum scalars, per phase of the network set
  int rc_to_cc_aggregates_q = 0;
  int cc_to_rc_terms_p = 0;       // combined cross-subtree dispatches, one per RC
  int cc_to_rc_terms_q = 0;
  int cc_to_bus_terms_p = 0;      // direct dispatches to unclustered buses
  int cc_to_bus_terms_q = 0;
  int rc_to_bus_results_p = 0;    // per-bus coupling deliveries inside subtrees
  int rc_to_bus_results_q = 0;
  long payload_scalars = 0;       // total real scalars moved this iteration
};

struct MessageLedger {
  std::vector<IterationMessages> per_iteration;
  bool empty() const { return per_iteration.empty(); }
};

struct SolverState {
  ControlVector u;
  DualPair mu;
  int iter = 0;
  PowerFlowState pf;
  IterationTrace trace;
  MessageLedger ledger;
  // Extremes observed across all iterations; the projection/dual invariants.
  double min_dual_seen = 0.0;
  double max_box_violation_seen = 0.0;
};

Eigen::VectorXd project_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi);

double objective_value(const ActuatorIndex& act, const ControlVector& u);
ControlVector objective_gradient(const ActuatorIndex& act, const ControlVector& u);

ControlVector primal_step(const ActuatorIndex& act, const ControlVector& u,
                          const Coupling& coupling, double sigma_u);

DualPair dual_step(const DualPair& mu, const Eigen::VectorXd& v_diag, const SolverConfig& cfg);

// Dense coupling evaluation from a gradient table.
Coupling coupling_centralized(const RadialNetwork& net, const GradientTable& table,
                              const DualPair& mu, const ActuatorIndex& act, bool skip_zero_duals);

// --- hierarchical protocol -------------------------------------------------

// Precomputed clustering lookups; requires a clustering that validates.
struct HierarchyContext {
  Clustering clustering;
  std::vector<int> owner;                      // bus -> subtree index or -1
  std::vector<std::vector<int>> subtree_nodes; // node indices per subtree, ascending
  std::vector<int> unclustered_nodes;          // node indices, ascending
  PhaseSet network_phases;

  static HierarchyContext build(const RadialNetwork& net, const Clustering& clustering);
};

// Weighted dual sums uploaded by one regional controller, one value per
// phase of the network phase set (zero where the subtree lacks the phase).
Eigen::Vector3d rc_aggregate_upload(const RadialNetwork& net, const HierarchyContext& ctx, int k,
                                    const PowerFlowState& state, const DualPair& mu,
                                    bool skip_zero_duals);

// Within-subtree part of the coupling for target (h, vphi) in subtree k.
std::pair<double, double> rc_subtree_term(const RadialNetwork& net, const HierarchyContext& ctx,
                                          const LinearSensitivity& sens, int k, int h_bus,
                                          Phase vphi, const PowerFlowState& state,
                                          const DualPair& mu, bool skip_zero_duals);

// Cross-subtree + unclustered part combined by the central coordinator for
// every destination in subtree k, per actuated phase (columns p, q).
struct CcCombined {
  Eigen::Vector3d alpha = Eigen::Vector3d::Zero();
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
};

CcCombined cc_combine_for_subtree(const RadialNetwork& net, const HierarchyContext& ctx,
                                  const LinearSensitivity& sens, int k,
                                  const std::vector<Eigen::Vector3d>& uploads,
                                  const PowerFlowState& state, const DualPair& mu,
                                  bool skip_zero_duals);

// Full coupling for an unclustered destination bus, per actuated phase.
CcCombined cc_combine_for_unclustered(const RadialNetwork& net, const HierarchyContext& ctx,
                                      const LinearSensitivity& sens, int h_bus,
                                      const std::vector<Eigen::Vector3d>& uploads,
                                      const PowerFlowState& state, const DualPair& mu,
                                      bool skip_zero_duals);

Coupling coupling_hierarchical(const RadialNetwork& net, const HierarchyContext& ctx,
                               const LinearSensitivity& sens, const PowerFlowState& state,
                               const DualPair& mu, const ActuatorIndex& act, bool skip_zero_duals,
                               IterationMessages* messages);

// Same protocol run with the lossless entries (unit upload weights) when the
// run is configured for the linear table.
Coupling coupling_hierarchical_tagged(const RadialNetwork& net, const HierarchyContext& ctx,
                                      const LinearSensitivity& sens, const PowerFlowState& state,
                                      const DualPair& mu, const ActuatorIndex& act,
                                      bool skip_zero_duals, GradientTag tag,
                                      IterationMessages* messages);

// --- iteration loop ---------------------------------------------------------

Injections injections_with_controls(const RadialNetwork& net, const ActuatorIndex& act,
                                    const ControlVector& u);

SolverState make_initial_state(const RadialNetwork& net, const ActuatorIndex& act,
                               const std::optional<ControlVector>& u0, const SolverConfig& cfg);

enum class SolveStatus { Converged, MaxItersReached, Diverged };

// One full protocol round: primal update, physical power flow, dual update.
// Throws PowerFlowDiverged with the state preserved by the caller.
void run_iteration(const RadialNetwork& net, const HierarchyContext* ctx, SolverState& state,
                   const ActuatorIndex& act, const SolverConfig& cfg);

struct SolveResult {
  SolverState state;
  SolveStatus status = SolveStatus::Converged;
};

SolveResult solve(const RadialNetwork& net, const std::optional<Clustering>& clustering,
                  const std::optional<ControlVector>& u0, const SolverConfig& cfg);

struct KktResidual {
  double stationarity = 0.0;        // projected-gradient residual, inf-norm
  double primal_feasibility = 0.0;  // worst voltage-bound violation
  double complementarity = 0.0;     // |mu^T (Av - d)|
  double dual_feasibility = 0.0;    // min dual entry (>= 0 means feasible)
};

KktResidual kkt_residual(const RadialNetwork& net, const SolverState& state,
                         GradientTag gradient_mode, const SolverConfig& cfg);

// Nodes outside the configured band by more than this magnitude slack count
// as violations in traces and summaries (absorbs the dual-regularization
// bias at a converged point).
inline constexpr double kViolationSlackPu = 1e-3;

int count_violations(const Eigen::VectorXd& v_diag, double v_lower, double v_upper);

}  // namespace opf3
