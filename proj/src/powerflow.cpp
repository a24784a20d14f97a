#include "opf3/powerflow.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "opf3/errors.hpp"

namespace opf3 {

Injections Injections::nominal(const RadialNetwork& net) {
  Injections u;
  u.s.resize(net.bus_count());
  for (int b = 0; b < net.bus_count(); ++b) {
    const PhaseSet eff = net.effective_phases(b);
    u.s[b] = Eigen::VectorXcd::Zero(eff.size());
    if (b == net.root()) continue;
    int k = 0;
    for (Phase p : eff.phases()) u.s[b](k++) = net.bus(b).injection_at(p);
  }
  return u;
}

Injections Injections::zero(const RadialNetwork& net) {
  Injections u;
  u.s.resize(net.bus_count());
  for (int b = 0; b < net.bus_count(); ++b)
    u.s[b] = Eigen::VectorXcd::Zero(net.effective_phases(b).size());
  return u;
}

Complex Injections::at(const RadialNetwork& net, int bus, Phase p) const {
  return s.at(bus)(net.effective_phases(bus).index_of(p));
}

void Injections::set(const RadialNetwork& net, int bus, Phase p, Complex value) {
  s.at(bus)(net.effective_phases(bus).index_of(p)) = value;
}

double PowerFlowState::v_diag(int bus, Phase p) const {
  const PhaseSet ps = v.at(bus).phases();
  int k = ps.index_of(p);
  return v.at(bus).mat()(k, k).real();
}

Eigen::VectorXd PowerFlowState::v_diag_vector() const {
  const RadialNetwork& net = *network;
  Eigen::VectorXd out(net.node_count());
  for (int n = 0; n < net.node_count(); ++n)
    out(n) = v_diag(net.nodes()[n].bus, net.nodes()[n].phase);
  return out;
}

namespace {

// Restrict a bus-level complex vector (on `from` phases) to `to` phases.
Eigen::VectorXcd restrict_vec(const Eigen::VectorXcd& x, PhaseSet from, PhaseSet to) {
  Eigen::VectorXcd out(to.size());
  int k = 0;
  for (Phase p : to.phases()) out(k++) = x(from.index_of(p));
  return out;
}

// Accumulate child-line vector `x` (on `sub`) into `acc` (on `super`).
void add_embedded(Eigen::VectorXcd& acc, PhaseSet super, const Eigen::VectorXcd& x, PhaseSet sub) {
  int k = 0;
  for (Phase p : sub.phases()) acc(super.index_of(p)) += x(k++);
}

void init_state_shapes(const RadialNetwork& net, PowerFlowState& st) {
  st.v.resize(net.bus_count());
  st.S.resize(net.line_count());
  st.ell.resize(net.line_count());
  st.Lambda.resize(net.line_count());
  for (int b = 0; b < net.bus_count(); ++b) st.v[b] = PhaseIndexedMatrix(net.effective_phases(b));
  for (int li = 0; li < net.line_count(); ++li) {
    st.S[li] = PhaseIndexedMatrix(net.line(li).phases);
    st.ell[li] = PhaseIndexedMatrix(net.line(li).phases);
    st.Lambda[li] = Eigen::VectorXcd::Zero(net.line(li).phases.size());
  }
}

// Max-abs power-balance mismatch of (V, I) against the injections.
double power_balance_mismatch(const RadialNetwork& net, const std::vector<Eigen::VectorXcd>& V,
                              const std::vector<Eigen::VectorXcd>& I, const Injections& u) {
  double worst = 0.0;
  for (int b = 0; b < net.bus_count(); ++b) {
    if (b == net.root()) continue;
    const PhaseSet eff = net.effective_phases(b);
    Eigen::VectorXcd net_current = I[net.parent_line(b)];
    for (int cl : net.children_lines(b)) {
      int k = 0;
      for (Phase p : net.line(cl).phases.phases()) net_current(eff.index_of(p)) -= I[cl](k++);
    }
    // diag(S_ij - z l) - sum diag(S_jk) = V_j o conj(I_ij - sum I_jk)
    Eigen::VectorXcd res = V[b].cwiseProduct(net_current.conjugate()) + u.s[b];
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

PowerFlowState solve_nonlinear_pf(const RadialNetwork& net, const Injections& u,
                                  const PowerFlowOptions& opts) {
  const int nb = net.bus_count();
  std::vector<Eigen::VectorXcd> V(nb), I(net.line_count());
  const Eigen::VectorXcd v0 = net.slack_voltage();
  const PhaseSet root_ps = net.effective_phases(net.root());
  for (int b = 0; b < nb; ++b) V[b] = restrict_vec(v0, root_ps, net.effective_phases(b));

  const auto& topo = net.topo_order();
  double residual = 0.0;
  int sweep = 0;
  bool converged = false;
  for (; sweep < opts.max_sweeps; ++sweep) {
    // Backward: aggregate currents from constant-power injections at the
    // present voltages.
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      int b = *it;
      if (b == net.root()) continue;
      const PhaseSet eff = net.effective_phases(b);
      Eigen::VectorXcd cur = Eigen::VectorXcd::Zero(eff.size());
      for (int cl : net.children_lines(b)) add_embedded(cur, eff, I[cl], net.line(cl).phases);
      // Injection current: s = V o conj(i)  =>  i = conj(s / V).
      cur -= (u.s[b].array() / V[b].array()).conjugate().matrix();
      I[net.parent_line(b)] = cur;
    }
    // Forward: voltage drops.
    double dv = 0.0;
    for (int b : topo) {
      if (b == net.root()) continue;
      const Line& pl = net.line(net.parent_line(b));
      Eigen::VectorXcd vi = restrict_vec(V[pl.from], net.effective_phases(pl.from), pl.phases);
      Eigen::VectorXcd vnew = vi - pl.z.mat() * I[net.parent_line(b)];
      dv = std::max(dv, (vnew - V[b]).cwiseAbs().maxCoeff());
      V[b] = vnew;
    }
    residual = power_balance_mismatch(net, V, I, u);
    if (dv < opts.tol && residual < opts.tol) {
      converged = true;
      ++sweep;
      break;
    }
  }
  if (!converged)
    throw PowerFlowDiverged("nonlinear power flow did not reach tol=" + std::to_string(opts.tol) +
                            " within " + std::to_string(opts.max_sweeps) +
                            " sweeps (residual=" + std::to_string(residual) + ")");

  PowerFlowState st;
  st.tag = ModelTag::Nonlinear;
  st.network = &net;
  st.u = u;
  st.V = std::move(V);
  st.I = std::move(I);
  st.sweeps = sweep;
  st.residual = residual;
  init_state_shapes(net, st);
  for (int b = 0; b < nb; ++b) st.v[b].mat() = st.V[b] * st.V[b].adjoint();
  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.line(li);
    Eigen::VectorXcd vi = restrict_vec(st.V[l.from], net.effective_phases(l.from), l.phases);
    st.S[li].mat() = vi * st.I[li].adjoint();
    st.ell[li].mat() = st.I[li] * st.I[li].adjoint();
    st.Lambda[li] = st.S[li].mat().diagonal();
  }
  return st;
}

PowerFlowState solve_linear_pf(const RadialNetwork& net, const Injections& u) {
  PowerFlowState st;
  st.tag = ModelTag::Linear;
  st.network = &net;
  st.u = u;
  st.sweeps = 1;
  init_state_shapes(net, st);

  const auto& topo = net.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int b = *it;
    if (b == net.root()) continue;
    const PhaseSet eff = net.effective_phases(b);
    Eigen::VectorXcd lam = -u.s[b];
    for (int cl : net.children_lines(b)) add_embedded(lam, eff, st.Lambda[cl], net.line(cl).phases);
    int li = net.parent_line(b);
    st.Lambda[li] = lam;
    st.S[li].mat() = gamma_submatrix(eff).mat() * lam.asDiagonal();
  }
  const Eigen::VectorXcd v0 = net.slack_voltage();
  st.v[net.root()].mat() = v0 * v0.adjoint();
  for (int b : topo) {
    if (b == net.root()) continue;
    const Line& pl = net.line(net.parent_line(b));
    const Eigen::MatrixXcd& S = st.S[net.parent_line(b)].mat();
    const Eigen::MatrixXcd& z = pl.z.mat();
    st.v[b].mat() = st.v[pl.from].restricted(pl.phases).mat() - (S * z.adjoint() + z * S.adjoint());
  }
  return st;
}

PowerFlowState solve_bva_pf(const RadialNetwork& net, const Injections& u,
                            const PowerFlowOptions& opts) {
  PowerFlowState st;
  st.tag = ModelTag::Bva;
  st.network = &net;
  st.u = u;
  init_state_shapes(net, st);

  const auto& topo = net.topo_order();
  const Eigen::VectorXcd v0 = net.slack_voltage();
  const Eigen::MatrixXcd v_root = v0 * v0.adjoint();
  st.v[net.root()].mat() = v_root;
  for (int b : topo)
    if (b != net.root())
      st.v[b].mat() =
          PhaseIndexedMatrix(net.effective_phases(net.root()), v_root)
              .restricted(net.effective_phases(b))
              .mat();

  std::vector<PhaseIndexedMatrix> ell = st.ell;  // starts lossless
  int sweep = 0;
  bool converged = false;
  for (; sweep < opts.max_sweeps; ++sweep) {
    // Backward flow accumulation with the loss correction from current ell.
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      int b = *it;
      if (b == net.root()) continue;
      const PhaseSet eff = net.effective_phases(b);
      int li = net.parent_line(b);
      Eigen::VectorXcd lam = -u.s[b] + (net.line(li).z.mat() * ell[li].mat()).diagonal();
      for (int cl : net.children_lines(b)) add_embedded(lam, eff, st.Lambda[cl], net.line(cl).phases);
      st.Lambda[li] = lam;
      st.S[li].mat() = gamma_submatrix(eff).mat() * lam.asDiagonal();
    }
    // Forward voltage sweep including the quadratic loss term.
    double dv = 0.0;
    for (int b : topo) {
      if (b == net.root()) continue;
      int li = net.parent_line(b);
      const Line& pl = net.line(li);
      const Eigen::MatrixXcd& S = st.S[li].mat();
      const Eigen::MatrixXcd& z = pl.z.mat();
      Eigen::MatrixXcd vnew = st.v[pl.from].restricted(pl.phases).mat() -
                              (S * z.adjoint() + z * S.adjoint()) +
                              z * ell[li].mat() * z.adjoint();
      dv = std::max(dv, (vnew.diagonal() - st.v[b].mat().diagonal()).cwiseAbs().maxCoeff());
      st.v[b].mat() = vnew;
    }
    if (dv < opts.tol && sweep > 0) {
      converged = true;
      ++sweep;
      break;
    }
    // Rank-1 closure l^{psi eta} = S^{psi eta} conj(S^{psi psi}) / v_i^{psi psi},
    // reference phase bound to the row phase, then Hermitized.
    for (int li = 0; li < net.line_count(); ++li) {
      const Line& l = net.line(li);
      const auto ps = l.phases.phases();
      const Eigen::MatrixXcd& S = st.S[li].mat();
      Eigen::MatrixXcd raw(ps.size(), ps.size());
      for (int r = 0; r < int(ps.size()); ++r) {
        double vi = st.v[l.from](ps[r], ps[r]).real();
        if (vi < 1e-6) throw PowerFlowDiverged("bva: collapsed upstream voltage");
        for (int c = 0; c < int(ps.size()); ++c) raw(r, c) = S(r, c) * std::conj(S(r, r)) / vi;
      }
      ell[li].mat() = 0.5 * (raw + raw.adjoint());
    }
  }
  if (!converged)
    throw PowerFlowDiverged("bva power flow did not converge within " +
                            std::to_string(opts.max_sweeps) + " sweeps");
  st.ell = std::move(ell);
  st.sweeps = sweep;
  // Flow and voltage blocks in the returned state come from the last pass, so
  // the voltage-drop equation and the loss-corrected balance hold exactly for
  // the stored ell of the pass before; redo one pass to make all three
  // mutually consistent.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int b = *it;
    if (b == net.root()) continue;
    const PhaseSet eff = net.effective_phases(b);
    int li = net.parent_line(b);
    Eigen::VectorXcd lam = -u.s[b] + (net.line(li).z.mat() * st.ell[li].mat()).diagonal();
    for (int cl : net.children_lines(b)) add_embedded(lam, eff, st.Lambda[cl], net.line(cl).phases);
    st.Lambda[li] = lam;
    st.S[li].mat() = gamma_submatrix(eff).mat() * lam.asDiagonal();
  }
  double res = 0.0;
  for (int b : topo) {
    if (b == net.root()) continue;
    int li = net.parent_line(b);
    const Line& pl = net.line(li);
    const Eigen::MatrixXcd& S = st.S[li].mat();
    const Eigen::MatrixXcd& z = pl.z.mat();
    Eigen::MatrixXcd vnew = st.v[pl.from].restricted(pl.phases).mat() -
                            (S * z.adjoint() + z * S.adjoint()) + z * st.ell[li].mat() * z.adjoint();
    res = std::max(res, (vnew.diagonal() - st.v[b].mat().diagonal()).cwiseAbs().maxCoeff());
    st.v[b].mat() = vnew;
  }
  st.residual = res;
  return st;
}

ResidualReport pf_residuals(const RadialNetwork& net, const PowerFlowState& state) {
  if (state.network != &net) throw StateMismatch("state produced by a different network");
  ResidualReport rep;
  rep.line_voltage_eq.resize(net.line_count(), 0.0);
  rep.bus_power_balance.resize(net.bus_count(), 0.0);
  rep.rank1_defect.resize(net.line_count(), 0.0);

  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.line(li);
    const Eigen::MatrixXcd& S = state.S[li].mat();
    const Eigen::MatrixXcd& z = l.z.mat();
    Eigen::MatrixXcd rhs = state.v[l.from].restricted(l.phases).mat() -
                           (S * z.adjoint() + z * S.adjoint()) +
                           z * state.ell[li].mat() * z.adjoint();
    rep.line_voltage_eq[li] = (state.v[l.to].mat() - rhs).cwiseAbs().maxCoeff();

    const int n = l.phases.size();
    Eigen::MatrixXcd block(2 * n, 2 * n);
    block.topLeftCorner(n, n) = state.v[l.from].restricted(l.phases).mat();
    block.topRightCorner(n, n) = S;
    block.bottomLeftCorner(n, n) = S.adjoint();
    block.bottomRightCorner(n, n) = state.ell[li].mat();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (block + block.adjoint()),
                                                       Eigen::EigenvaluesOnly);
    Eigen::VectorXd evals = es.eigenvalues().cwiseAbs();
    std::sort(evals.data(), evals.data() + evals.size());
    rep.rank1_defect[li] = evals(evals.size() - 2);
  }

  for (int b = 0; b < net.bus_count(); ++b) {
    if (b == net.root()) continue;
    const PhaseSet eff = net.effective_phases(b);
    int li = net.parent_line(b);
    Eigen::VectorXcd res =
        (state.S[li].mat() - net.line(li).z.mat() * state.ell[li].mat()).diagonal() +
        state.u.s[b];
    for (int cl : net.children_lines(b)) {
      Eigen::VectorXcd child = state.S[cl].mat().diagonal();
      int k = 0;
      for (Phase p : net.line(cl).phases.phases()) res(eff.index_of(p)) -= child(k++);
    }
    rep.bus_power_balance[b] = res.cwiseAbs().maxCoeff();
  }

  for (double r : rep.line_voltage_eq) rep.max_voltage_eq = std::max(rep.max_voltage_eq, r);
  for (double r : rep.bus_power_balance) rep.max_power_balance = std::max(rep.max_power_balance, r);
  for (double r : rep.rank1_defect) rep.max_rank1_defect = std::max(rep.max_rank1_defect, r);
  return rep;
}

Eigen::VectorXcd slack_injection(const RadialNetwork& net, const PowerFlowState& state) {
  const PhaseSet eff = net.effective_phases(net.root());
  Eigen::VectorXcd s0 = Eigen::VectorXcd::Zero(eff.size());
  for (int cl : net.children_lines(net.root())) {
    Eigen::VectorXcd child = state.S[cl].mat().diagonal();
    int k = 0;
    for (Phase p : net.line(cl).phases.phases()) s0(eff.index_of(p)) += child(k++);
  }
  return s0;
}

VoltageErrorReport voltage_error_decomposition(const RadialNetwork& net, const PowerFlowState& bva_state) {
  if (bva_state.network != &net) throw StateMismatch("state produced by a different network");
  if (bva_state.tag != ModelTag::Bva)
    throw StateMismatch("voltage_error_decomposition requires a balanced-voltage-approximation state");

  VoltageErrorReport rep;
  rep.M.resize(net.line_count());
  rep.error.resize(net.bus_count());
  rep.diag_error.resize(net.bus_count());

  const auto& topo = net.topo_order();
  // Backward sweep of the flow difference dLam = Lambda - Lambda_hat (a
  // per-phase loss accumulation), then M_ij = gamma^{Phi_ij} Diag(dLam_ij).
  // Carrying the vector keeps the identity exact when a child line has fewer
  // phases than its parent: a child's loss still rotates into the parent's
  // cross-phase entries through the parent's own gamma block.
  std::vector<Eigen::VectorXcd> dlam(net.line_count());
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int b = *it;
    if (b == net.root()) continue;
    int li = net.parent_line(b);
    const Line& l = net.line(li);
    Eigen::VectorXcd acc = (l.z.mat() * bva_state.ell[li].mat()).diagonal();
    for (int cl : net.children_lines(b)) {
      int k = 0;
      for (Phase p : net.line(cl).phases.phases()) acc(l.phases.index_of(p)) += dlam[cl](k++);
    }
    dlam[li] = acc;
    rep.M[li] = PhaseIndexedMatrix(l.phases, gamma_submatrix(l.phases).mat() * acc.asDiagonal());
  }
  // Forward sweep: accumulated error, zero at the slack bus.
  rep.error[net.root()] = PhaseIndexedMatrix(net.effective_phases(net.root()));
  rep.diag_error[net.root()] =
      Eigen::VectorXd::Zero(net.effective_phases(net.root()).size());
  for (int b : topo) {
    if (b == net.root()) continue;
    int li = net.parent_line(b);
    const Line& l = net.line(li);
    const Eigen::MatrixXcd& z = l.z.mat();
    const Eigen::MatrixXcd& M = rep.M[li].mat();
    PhaseIndexedMatrix err(l.phases);
    err.mat() = rep.error[l.from].restricted(l.phases).mat() + M * z.adjoint() + z * M.adjoint() -
                z * bva_state.ell[li].mat() * z.adjoint();
    rep.diag_error[b] = err.mat().diagonal().real();
    rep.error[b] = std::move(err);
  }
  return rep;
}

double line_loss_quadform(const Line& line, const PhaseIndexedMatrix& ell, Phase phi) {
  const auto ps = line.phases.phases();
  int r = line.phases.index_of(phi);
  Complex acc(0.0, 0.0);
  for (int a = 0; a < int(ps.size()); ++a)
    for (int b = 0; b < int(ps.size()); ++b)
      acc += ell.mat()(a, b) * line.z.mat()(r, a) * std::conj(line.z.mat()(r, b));
  if (std::abs(acc.imag()) > 1e-12)
    throw NumericalDegeneracy("loss quadratic form has imaginary residue " +
                              std::to_string(acc.imag()));
  return acc.real();
}

double line_loss_weight(const RadialNetwork& net, const PowerFlowState& state, int line_index,
                        Phase phi) {
  const Line& l = net.line(line_index);
  double vi = state.v[l.from](phi, phi).real();
  if (vi < 1e-6) throw NumericalDegeneracy("upstream squared voltage below 1e-6");
  return 1.0 - line_loss_quadform(l, state.ell[line_index], phi) / vi;
}

}  // namespace opf3
