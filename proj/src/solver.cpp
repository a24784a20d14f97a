#include "opf3/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "opf3/errors.hpp"

namespace opf3 {

void SolverConfig::validate() const {
  if (sigma_u <= 0 || sigma_mu <= 0) throw ValidationError("step sizes must be positive");
  if (epsilon <= 0) throw ValidationError("dual regularization must be positive");
  if (!(v_lower < v_upper)) throw ValidationError("voltage band is empty");
  if (lambda_stop <= 0 || max_iters <= 0) throw ValidationError("invalid stopping parameters");
}

ActuatorIndex ActuatorIndex::build(const RadialNetwork& net) {
  ActuatorIndex act;
  for (int n = 0; n < net.node_count(); ++n) {
    const NodeRef& ref = net.nodes()[n];
    if (!net.bus(ref.bus).controllable) continue;
    act.coords.push_back(ref);
    act.node_of.push_back(n);
  }
  const int m = act.count();
  act.p_min.resize(m);
  act.p_max.resize(m);
  act.q_min.resize(m);
  act.q_max.resize(m);
  act.p_nom.resize(m);
  act.q_nom.resize(m);
  for (int c = 0; c < m; ++c) {
    const Bus& b = net.bus(act.coords[c].bus);
    const int k = b.phases.index_of(act.coords[c].phase);
    act.p_min(c) = b.p_min(k);
    act.p_max(c) = b.p_max(k);
    act.q_min(c) = b.q_min(k);
    act.q_max(c) = b.q_max(k);
    act.p_nom(c) = b.injection(k).real();
    act.q_nom(c) = b.injection(k).imag();
  }
  return act;
}

Eigen::VectorXd project_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

double objective_value(const ActuatorIndex& act, const ControlVector& u) {
  return (u.p - act.p_nom).squaredNorm() + (u.q - act.q_nom).squaredNorm();
}

ControlVector objective_gradient(const ActuatorIndex& act, const ControlVector& u) {
  return ControlVector{2.0 * (u.p - act.p_nom), 2.0 * (u.q - act.q_nom)};
}

ControlVector primal_step(const ActuatorIndex& act, const ControlVector& u,
                          const Coupling& coupling, double sigma_u) {
  if (coupling.alpha.size() != act.count() || coupling.beta.size() != act.count())
    throw InternalProtocolError("coupling vector does not cover all controllable coordinates");
  ControlVector g = objective_gradient(act, u);
  ControlVector out;
  out.p = project_box(u.p - sigma_u * (g.p + coupling.alpha), act.p_min, act.p_max);
  out.q = project_box(u.q - sigma_u * (g.q + coupling.beta), act.q_min, act.q_max);
  return out;
}

DualPair dual_step(const DualPair& mu, const Eigen::VectorXd& v_diag, const SolverConfig& cfg) {
  const int n = static_cast<int>(v_diag.size());
  DualPair out;
  out.lower.resize(n);
  out.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    out.lower(i) = std::max(
        0.0, mu.lower(i) + cfg.sigma_mu * (cfg.v_lower - v_diag(i) - cfg.epsilon * mu.lower(i)));
    out.upper(i) = std::max(
        0.0, mu.upper(i) + cfg.sigma_mu * (v_diag(i) - cfg.v_upper - cfg.epsilon * mu.upper(i)));
  }
  return out;
}

Coupling coupling_centralized(const RadialNetwork& net, const GradientTable& table,
                              const DualPair& mu, const ActuatorIndex& act,
                              bool skip_zero_duals) {
  if (table.network != &net) throw StateMismatch("gradient table built for a different network");
  const int n = net.node_count();
  Coupling cpl;
  cpl.alpha = Eigen::VectorXd::Zero(act.count());
  cpl.beta = Eigen::VectorXd::Zero(act.count());
  for (int c = 0; c < act.count(); ++c) {
    const int col = act.node_of[c];
    double a = 0.0, b = 0.0;
    for (int row = 0; row < n; ++row) {
      const double md = mu.upper(row) - mu.lower(row);
      if (skip_zero_duals && md == 0.0) continue;
      a += table.dv_dp(row, col) * md;
      b += table.dv_dq(row, col) * md;
    }
    cpl.alpha(c) = a;
    cpl.beta(c) = b;
  }
  return cpl;
}

HierarchyContext HierarchyContext::build(const RadialNetwork& net, const Clustering& clustering) {
  ClusterValidation val = validate_clustering(net, clustering);
  if (!val.ok()) {
    std::string what = "clustering violates the hierarchy assumptions:";
    for (const auto& v : val.violations) what += "\n  - " + v.detail;
    throw ValidationError(what);
  }
  HierarchyContext ctx;
  ctx.clustering = clustering;
  ctx.owner.assign(net.bus_count(), -1);
  for (int k = 0; k < int(clustering.subtrees.size()); ++k)
    for (int m : clustering.subtrees[k].members) ctx.owner[m] = k;
  ctx.subtree_nodes.resize(clustering.subtrees.size());
  for (int n = 0; n < net.node_count(); ++n) {
    const int bus = net.nodes()[n].bus;
    if (ctx.owner[bus] >= 0)
      ctx.subtree_nodes[ctx.owner[bus]].push_back(n);
    else
      ctx.unclustered_nodes.push_back(n);
  }
  ctx.network_phases = net.effective_phases(net.root());
  return ctx;
}

namespace {

// Improved-gradient entry via the factored real form; linear entry when the
// lossless table drives the run.
double entry_for_mode(const RadialNetwork& net, const PowerFlowState& state,
                      const LinearSensitivity& sens, GradientTag tag, int j_bus, Phase phi,
                      int h_bus, Phase vphi, InjectionKind kind) {
  if (tag == GradientTag::Linear)
    return kind == InjectionKind::ActiveP ? linear_r_entry(net, sens, j_bus, phi, h_bus, vphi)
                                          : linear_x_entry(net, sens, j_bus, phi, h_bus, vphi);
  return improved_gradient_entry(net, state, sens, j_bus, phi, h_bus, vphi, kind,
                                 ImprovedForm::Factored);
}

Eigen::Vector3d upload_impl(const RadialNetwork& net, const std::vector<int>& node_list,
                            const PowerFlowState& state, const DualPair& mu, bool skip_zero_duals,
                            GradientTag tag) {
  Eigen::Vector3d agg = Eigen::Vector3d::Zero();
  for (int n : node_list) {
    const double md = mu.upper(n) - mu.lower(n);
    if (skip_zero_duals && md == 0.0) continue;
    const NodeRef& ref = net.nodes()[n];
    const double w = tag == GradientTag::Linear
                         ? 1.0
                         : line_loss_weight(net, state, net.parent_line(ref.bus), ref.phase);
    agg(phase_number(ref.phase)) += w * md;
  }
  return agg;
}

}  // namespace

Eigen::Vector3d rc_aggregate_upload(const RadialNetwork& net, const HierarchyContext& ctx, int k,
                                    const PowerFlowState& state, const DualPair& mu,
                                    bool skip_zero_duals) {
  return upload_impl(net, ctx.subtree_nodes.at(k), state, mu, skip_zero_duals,
                     GradientTag::Improved);
}

namespace {

std::pair<double, double> subtree_term_impl(const RadialNetwork& net, const HierarchyContext& ctx,
                                            const LinearSensitivity& sens, int k, int h_bus,
                                            Phase vphi, const PowerFlowState& state,
                                            const DualPair& mu, bool skip_zero_duals,
                                            GradientTag tag) {
  double a = 0.0, b = 0.0;
  for (int n : ctx.subtree_nodes.at(k)) {
    const double md = mu.upper(n) - mu.lower(n);
    if (skip_zero_duals && md == 0.0) continue;
    const NodeRef& ref = net.nodes()[n];
    a += entry_for_mode(net, state, sens, tag, ref.bus, ref.phase, h_bus, vphi,
                        InjectionKind::ActiveP) *
         md;
    b += entry_for_mode(net, state, sens, tag, ref.bus, ref.phase, h_bus, vphi,
                        InjectionKind::ReactiveQ) *
         md;
  }
  return {a, b};
}

CcCombined cc_subtree_impl(const RadialNetwork& net, const HierarchyContext& ctx,
                           const LinearSensitivity& sens, int k,
                           const std::vector<Eigen::Vector3d>& uploads,
                           const PowerFlowState& state, const DualPair& mu, bool skip_zero_duals,
                           GradientTag tag) {
  if (uploads.size() != ctx.clustering.subtrees.size())
    throw MissingUpload("expected one upload per regional controller");
  const int rep = ctx.clustering.subtrees.at(k).root;
  CcCombined out;
  for (Phase phi : ctx.network_phases.phases()) {
    for (int vp = 0; vp < 3; ++vp) {
      const Phase vphi = static_cast<Phase>(vp);
      double a = 0.0, b = 0.0;
      // Cross-subtree sums collapse to the representative-pair sensitivities.
      for (int kp = 0; kp < int(uploads.size()); ++kp) {
        if (kp == k) continue;
        const int rep_kp = ctx.clustering.subtrees[kp].root;
        a += linear_r_entry(net, sens, rep_kp, phi, rep, vphi) * uploads[kp](phase_number(phi));
        b += linear_x_entry(net, sens, rep_kp, phi, rep, vphi) * uploads[kp](phase_number(phi));
      }
      // Unclustered buses, evaluated on the reduced tree with the destination
      // represented by the subtree root.
      for (int n : ctx.unclustered_nodes) {
        const NodeRef& ref = net.nodes()[n];
        if (ref.phase != phi) continue;
        const double md = mu.upper(n) - mu.lower(n);
        if (skip_zero_duals && md == 0.0) continue;
        a += entry_for_mode(net, state, sens, tag, ref.bus, phi, rep, vphi,
                            InjectionKind::ActiveP) *
             md;
        b += entry_for_mode(net, state, sens, tag, ref.bus, phi, rep, vphi,
                            InjectionKind::ReactiveQ) *
             md;
      }
      out.alpha(vp) += a;
      out.beta(vp) += b;
    }
  }
  return out;
}

CcCombined cc_unclustered_impl(const RadialNetwork& net, const HierarchyContext& ctx,
                               const LinearSensitivity& sens, int h_bus,
                               const std::vector<Eigen::Vector3d>& uploads,
                               const PowerFlowState& state, const DualPair& mu,
                               bool skip_zero_duals, GradientTag tag) {
  if (uploads.size() != ctx.clustering.subtrees.size())
    throw MissingUpload("expected one upload per regional controller");
  CcCombined out;
  for (Phase phi : ctx.network_phases.phases()) {
    for (int vp = 0; vp < 3; ++vp) {
      const Phase vphi = static_cast<Phase>(vp);
      double a = 0.0, b = 0.0;
      for (int n : ctx.unclustered_nodes) {
        const NodeRef& ref = net.nodes()[n];
        if (ref.phase != phi) continue;
        const double md = mu.upper(n) - mu.lower(n);
        if (skip_zero_duals && md == 0.0) continue;
        a += entry_for_mode(net, state, sens, tag, ref.bus, phi, h_bus, vphi,
                            InjectionKind::ActiveP) *
             md;
        b += entry_for_mode(net, state, sens, tag, ref.bus, phi, h_bus, vphi,
                            InjectionKind::ReactiveQ) *
             md;
      }
      for (int kp = 0; kp < int(uploads.size()); ++kp) {
        const int rep_kp = ctx.clustering.subtrees[kp].root;
        a += linear_r_entry(net, sens, rep_kp, phi, h_bus, vphi) * uploads[kp](phase_number(phi));
        b += linear_x_entry(net, sens, rep_kp, phi, h_bus, vphi) * uploads[kp](phase_number(phi));
      }
      out.alpha(vp) += a;
      out.beta(vp) += b;
    }
  }
  return out;
}

}  // namespace

std::pair<double, double> rc_subtree_term(const RadialNetwork& net, const HierarchyContext& ctx,
                                          const LinearSensitivity& sens, int k, int h_bus,
                                          Phase vphi, const PowerFlowState& state,
                                          const DualPair& mu, bool skip_zero_duals) {
  if (ctx.owner.at(h_bus) != k)
    throw TargetNotInSubtree("bus '" + net.bus(h_bus).name + "' is not in subtree " +
                             std::to_string(k));
  return subtree_term_impl(net, ctx, sens, k, h_bus, vphi, state, mu, skip_zero_duals,
                           GradientTag::Improved);
}

CcCombined cc_combine_for_subtree(const RadialNetwork& net, const HierarchyContext& ctx,
                                  const LinearSensitivity& sens, int k,
                                  const std::vector<Eigen::Vector3d>& uploads,
                                  const PowerFlowState& state, const DualPair& mu,
                                  bool skip_zero_duals) {
  return cc_subtree_impl(net, ctx, sens, k, uploads, state, mu, skip_zero_duals,
                         GradientTag::Improved);
}

CcCombined cc_combine_for_unclustered(const RadialNetwork& net, const HierarchyContext& ctx,
                                      const LinearSensitivity& sens, int h_bus,
                                      const std::vector<Eigen::Vector3d>& uploads,
                                      const PowerFlowState& state, const DualPair& mu,
                                      bool skip_zero_duals) {
  return cc_unclustered_impl(net, ctx, sens, h_bus, uploads, state, mu, skip_zero_duals,
                             GradientTag::Improved);
}

Coupling coupling_hierarchical(const RadialNetwork& net, const HierarchyContext& ctx,
                               const LinearSensitivity& sens, const PowerFlowState& state,
                               const DualPair& mu, const ActuatorIndex& act, bool skip_zero_duals,
                               IterationMessages* messages) {
  return coupling_hierarchical_tagged(net, ctx, sens, state, mu, act, skip_zero_duals,
                                      GradientTag::Improved, messages);
}

Coupling coupling_hierarchical_tagged(const RadialNetwork& net, const HierarchyContext& ctx,
                                      const LinearSensitivity& sens, const PowerFlowState& state,
                                      const DualPair& mu, const ActuatorIndex& act,
                                      bool skip_zero_duals, GradientTag tag,
                                      IterationMessages* messages) {
  const int K = static_cast<int>(ctx.clustering.subtrees.size());
  const int nphases = ctx.network_phases.size();
  IterationMessages msg;

  // Step 4: every managed bus uploads its local line state; every RC uploads
  // one weighted dual sum per network phase and tracked quantity.
  std::vector<Eigen::Vector3d> uploads(K);
  for (int k = 0; k < K; ++k) {
    uploads[k] = upload_impl(net, ctx.subtree_nodes[k], state, mu, skip_zero_duals, tag);
    msg.bus_to_rc_uploads += int(ctx.clustering.subtrees[k].members.size());
    msg.rc_to_cc_aggregates_p += nphases;
    msg.rc_to_cc_aggregates_q += nphases;
    msg.payload_scalars += 2 * nphases;
  }
  msg.bus_to_rc_uploads += int(ctx.clustering.unclustered.size());

  // Step 5: one combined cross-subtree term per RC (a per-phase vector for
  // each quantity), plus direct results for unclustered destinations.
  std::vector<CcCombined> combined(K);
  for (int k = 0; k < K; ++k) {
    combined[k] = cc_subtree_impl(net, ctx, sens, k, uploads, state, mu, skip_zero_duals, tag);
    msg.cc_to_rc_terms_p += 1;
    msg.cc_to_rc_terms_q += 1;
    msg.payload_scalars += 2 * 3;
  }

  // Step 6: RCs add their local term and deliver per-bus results.
  Coupling cpl;
  cpl.alpha = Eigen::VectorXd::Zero(act.count());
  cpl.beta = Eigen::VectorXd::Zero(act.count());
  int last_bus = -1;
  for (int c = 0; c < act.count(); ++c) {
    const NodeRef ref = act.coords[c];
    const int k = ctx.owner[ref.bus];
    if (k >= 0) {
      auto [a, b] = subtree_term_impl(net, ctx, sens, k, ref.bus, ref.phase, state, mu,
                                      skip_zero_duals, tag);
      cpl.alpha(c) = a + combined[k].alpha(phase_number(ref.phase));
      cpl.beta(c) = b + combined[k].beta(phase_number(ref.phase));
      if (ref.bus != last_bus) {
        msg.rc_to_bus_results_p += 1;
        msg.rc_to_bus_results_q += 1;
      }
    } else {
      CcCombined direct =
          cc_unclustered_impl(net, ctx, sens, ref.bus, uploads, state, mu, skip_zero_duals, tag);
      cpl.alpha(c) = direct.alpha(phase_number(ref.phase));
      cpl.beta(c) = direct.beta(phase_number(ref.phase));
      if (ref.bus != last_bus) {
        msg.cc_to_bus_terms_p += 1;
        msg.cc_to_bus_terms_q += 1;
      }
    }
    msg.payload_scalars += 2;
    last_bus = ref.bus;
  }
  if (messages) *messages = msg;
  return cpl;
}

Injections injections_with_controls(const RadialNetwork& net, const ActuatorIndex& act,
                                    const ControlVector& u) {
  Injections inj = Injections::nominal(net);
  for (int c = 0; c < act.count(); ++c)
    inj.set(net, act.coords[c].bus, act.coords[c].phase, Complex(u.p(c), u.q(c)));
  return inj;
}

SolverState make_initial_state(const RadialNetwork& net, const ActuatorIndex& act,
                               const std::optional<ControlVector>& u0, const SolverConfig& cfg) {
  SolverState st;
  if (u0) {
    st.u.p = project_box(u0->p, act.p_min, act.p_max);
    st.u.q = project_box(u0->q, act.q_min, act.q_max);
  } else {
    st.u.p = project_box(act.p_nom, act.p_min, act.p_max);
    st.u.q = project_box(act.q_nom, act.q_min, act.q_max);
  }
  st.mu.lower = Eigen::VectorXd::Zero(net.node_count());
  st.mu.upper = Eigen::VectorXd::Zero(net.node_count());
  st.pf = solve_nonlinear_pf(net, injections_with_controls(net, act, st.u), cfg.pf);
  st.iter = 0;
  return st;
}

int count_violations(const Eigen::VectorXd& v_diag, double v_lower, double v_upper) {
  const double lo = std::sqrt(v_lower) - kViolationSlackPu;
  const double hi = std::sqrt(v_upper) + kViolationSlackPu;
  int count = 0;
  for (int i = 0; i < v_diag.size(); ++i) {
    const double m = std::sqrt(std::max(0.0, v_diag(i)));
    if (m < lo || m > hi) ++count;
  }
  return count;
}

void run_iteration(const RadialNetwork& net, const HierarchyContext* ctx, SolverState& state,
                   const ActuatorIndex& act, const SolverConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();

  // Steps 4-6 for the state after the previous dual update: gather the
  // coupling terms every bus needs for its primal move.
  Coupling cpl;
  if (cfg.execution_mode == ExecutionMode::Hierarchical) {
    if (!ctx) throw InternalProtocolError("hierarchical execution requires a clustering");
    LinearSensitivity sens = build_linear_sensitivity(net);
    IterationMessages msgs;
    cpl = coupling_hierarchical_tagged(net, *ctx, sens, state.pf, state.mu, act,
                                       cfg.skip_zero_duals, cfg.gradient_mode, &msgs);
    state.ledger.per_iteration.push_back(msgs);
  } else {
    GradientTable table = cfg.gradient_mode == GradientTag::Linear
                              ? linear_gradients(net)
                              : improved_gradients(net, state.pf);
    cpl = coupling_centralized(net, table, state.mu, act, cfg.skip_zero_duals);
  }

  // Step 2: projected primal move.
  ControlVector u_next = primal_step(act, state.u, cpl, cfg.sigma_u);

  // Step 3: actuate the physical network, then update duals from its
  // voltages (or from the lossless prediction when configured so).
  PowerFlowState pf_next = solve_nonlinear_pf(net, injections_with_controls(net, act, u_next),
                                              cfg.pf);
  Eigen::VectorXd v_for_duals;
  if (cfg.dual_source == DualVoltageSource::Measured) {
    v_for_duals = pf_next.v_diag_vector();
  } else {
    v_for_duals = solve_linear_pf(net, pf_next.u).v_diag_vector();
  }
  DualPair mu_next = dual_step(state.mu, v_for_duals, cfg);

  const double du =
      std::sqrt((u_next.p - state.u.p).squaredNorm() + (u_next.q - state.u.q).squaredNorm());

  state.u = std::move(u_next);
  state.mu = std::move(mu_next);
  state.pf = std::move(pf_next);
  state.iter += 1;

  // Invariants: duals nonnegative, controls inside the box.
  const double min_dual = std::min(state.mu.lower.minCoeff(), state.mu.upper.minCoeff());
  state.min_dual_seen = std::min(state.min_dual_seen, min_dual);
  double box_violation = 0.0;
  for (int c = 0; c < act.count(); ++c) {
    box_violation = std::max(box_violation, act.p_min(c) - state.u.p(c));
    box_violation = std::max(box_violation, state.u.p(c) - act.p_max(c));
    box_violation = std::max(box_violation, act.q_min(c) - state.u.q(c));
    box_violation = std::max(box_violation, state.u.q(c) - act.q_max(c));
  }
  state.max_box_violation_seen = std::max(state.max_box_violation_seen, box_violation);
  if (min_dual < 0.0 || box_violation > 0.0)
    throw InternalProtocolError("projection invariant violated");

  const auto t1 = std::chrono::steady_clock::now();
  Eigen::VectorXd vd = state.pf.v_diag_vector();
  TraceRecord rec;
  rec.iter = state.iter;
  rec.objective = objective_value(act, state.u);
  rec.min_v = std::sqrt(vd.minCoeff());
  rec.max_v = std::sqrt(vd.maxCoeff());
  rec.du_norm = du;
  rec.mu_norm = std::sqrt(state.mu.lower.squaredNorm() + state.mu.upper.squaredNorm());
  rec.violations = count_violations(vd, cfg.v_lower, cfg.v_upper);
  rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  state.trace.records.push_back(rec);
}

SolveResult solve(const RadialNetwork& net, const std::optional<Clustering>& clustering,
                  const std::optional<ControlVector>& u0, const SolverConfig& cfg) {
  cfg.validate();
  ActuatorIndex act = ActuatorIndex::build(net);
  std::optional<HierarchyContext> ctx;
  if (cfg.execution_mode == ExecutionMode::Hierarchical) {
    if (!clustering) throw ValidationError("hierarchical execution requires a clustering");
    ctx = HierarchyContext::build(net, *clustering);
  }

  SolveResult result;
  result.state = make_initial_state(net, act, u0, cfg);
  result.status = SolveStatus::MaxItersReached;
  for (int t = 0; t < cfg.max_iters; ++t) {
    try {
      run_iteration(net, ctx ? &*ctx : nullptr, result.state, act, cfg);
    } catch (const PowerFlowDiverged&) {
      result.status = SolveStatus::Diverged;
      break;
    }
    // The first round only lets the duals react to the initial measurement
    // (u cannot move away from a cost-stationary start before that), so the
    // stopping rule engages from the second round on.
    if (t >= 1 && result.state.trace.records.back().du_norm < cfg.lambda_stop) {
      result.status = SolveStatus::Converged;
      break;
    }
  }

  result.state.trace.profile.clear();
  for (const NodeRef& ref : net.nodes()) {
    ProfileRow row;
    row.bus = net.bus(ref.bus).name;
    row.phase = phase_letter(ref.phase);
    row.vmag_pu = std::sqrt(result.state.pf.v_diag(ref.bus, ref.phase));
    result.state.trace.profile.push_back(row);
  }
  return result;
}

KktResidual kkt_residual(const RadialNetwork& net, const SolverState& state,
                         GradientTag gradient_mode, const SolverConfig& cfg) {
  ActuatorIndex act = ActuatorIndex::build(net);
  GradientTable table = gradient_mode == GradientTag::Linear ? linear_gradients(net)
                                                             : improved_gradients(net, state.pf);
  Coupling cpl = coupling_centralized(net, table, state.mu, act, false);
  ControlVector g = objective_gradient(act, state.u);

  KktResidual res;
  Eigen::VectorXd pp = project_box(state.u.p - (g.p + cpl.alpha), act.p_min, act.p_max);
  Eigen::VectorXd pq = project_box(state.u.q - (g.q + cpl.beta), act.q_min, act.q_max);
  res.stationarity = std::max((state.u.p - pp).cwiseAbs().maxCoeff(),
                              (state.u.q - pq).cwiseAbs().maxCoeff());

  Eigen::VectorXd vd = state.pf.v_diag_vector();
  Eigen::VectorXd slack_lo = vd.array() - cfg.v_lower;  // A v - d, lower rows
  Eigen::VectorXd slack_hi = cfg.v_upper - vd.array();  // A v - d, upper rows
  res.primal_feasibility =
      std::max(0.0, std::max(-slack_lo.minCoeff(), -slack_hi.minCoeff()));
  res.complementarity =
      std::abs(state.mu.lower.dot(slack_lo) + state.mu.upper.dot(slack_hi));
  res.dual_feasibility = std::min(state.mu.lower.minCoeff(), state.mu.upper.minCoeff());
  return res;
}

}  // namespace opf3
