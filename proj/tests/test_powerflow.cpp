#include <doctest.h>

#include "test_helpers.hpp"

using namespace opf3;
using namespace opf3::testing;

namespace {

Line mk_line(int from, int to, PhaseSet ps, Complex self, Complex mutual) {
  Line l;
  l.from = from;
  l.to = to;
  l.phases = ps;
  l.z = coupled_z(ps, self, mutual);
  return l;
}

// Loaded unbalanced 6-bus network with shrinking laterals:
// 0 -abc- 1 -abc- 2 -abc- 3, 2 -ab- 4 -a- 5.
RadialNetwork loaded_mixed_network(double scale = 1.0) {
  std::vector<Bus> buses;
  buses.push_back(Bus::make("0", PhaseSet::full()));
  buses.push_back(load_bus("1", PhaseSet::full(), scale * Complex(-0.10, -0.04)));
  buses.push_back(load_bus("2", PhaseSet::full(), scale * Complex(-0.08, -0.03)));
  buses.push_back(load_bus("3", PhaseSet::full(), scale * Complex(-0.12, -0.05)));
  buses.push_back(load_bus("4", PhaseSet::parse("ab"), scale * Complex(-0.06, -0.02)));
  buses.push_back(load_bus("5", PhaseSet::parse("a"), scale * Complex(-0.05, -0.02)));
  std::vector<Line> lines;
  lines.push_back(mk_line(0, 1, PhaseSet::full(), {0.04, 0.09}, {0.012, 0.035}));
  lines.push_back(mk_line(1, 2, PhaseSet::full(), {0.03, 0.07}, {0.010, 0.028}));
  lines.push_back(mk_line(2, 3, PhaseSet::full(), {0.05, 0.10}, {0.014, 0.040}));
  lines.push_back(mk_line(2, 4, PhaseSet::parse("ab"), {0.06, 0.11}, {0.015, 0.042}));
  lines.push_back(mk_line(4, 5, PhaseSet::parse("a"), {0.05, 0.08}, {0, 0}));
  return RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
}

}  // namespace

TEST_CASE("no-load fixed point for all three models") {
  RadialNetwork net = loaded_mixed_network();
  Injections zero = Injections::zero(net);
  for (auto solve : {+[](const RadialNetwork& n, const Injections& u) {
                       return solve_nonlinear_pf(n, u);
                     },
                     +[](const RadialNetwork& n, const Injections& u) {
                       return solve_linear_pf(n, u);
                     },
                     +[](const RadialNetwork& n, const Injections& u) {
                       return solve_bva_pf(n, u);
                     }}) {
    PowerFlowState st = solve(net, zero);
    for (int b = 0; b < net.bus_count(); ++b) {
      const PhaseSet eff = net.effective_phases(b);
      for (Phase p : eff.phases())
        CHECK(st.v_diag(b, p) == doctest::Approx(1.05 * 1.05).epsilon(1e-12));
    }
    for (int li = 0; li < net.line_count(); ++li) {
      CHECK(st.S[li].mat().cwiseAbs().maxCoeff() < 1e-12);
      CHECK(st.ell[li].mat().cwiseAbs().maxCoeff() < 1e-12);
      CHECK(st.Lambda[li].cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("two-bus nonlinear flow matches the closed-form single-line solution") {
  const double r = 0.01, x = 0.02;
  RadialNetwork net = two_bus(r, x, Complex(-0.1, -0.05));
  PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));

  TwoBusSolution oracle = two_bus_closed_form(r, x, 0.1, 0.05, 1.05 * 1.05);
  CHECK(st.v_diag(1, Phase::A) == doctest::Approx(oracle.v1).epsilon(1e-12));
  CHECK(std::abs(std::sqrt(st.v_diag(1, Phase::A)) - std::sqrt(oracle.v1)) < 1e-10);
  CHECK(st.S[0](Phase::A, Phase::A).real() == doctest::Approx(oracle.p_send).epsilon(1e-9));
  CHECK(st.S[0](Phase::A, Phase::A).imag() == doctest::Approx(oracle.q_send).epsilon(1e-9));
  CHECK(st.ell[0](Phase::A, Phase::A).real() == doctest::Approx(oracle.ell).epsilon(1e-9));

  // Frozen oracle values for this exact case (from the quadratic in ell).
  CHECK(oracle.v1 == doctest::Approx(1.0984943103938356).epsilon(1e-13));
  CHECK(oracle.ell == doctest::Approx(0.011379212328854749).epsilon(1e-13));
  CHECK(std::sqrt(oracle.v1) == doctest::Approx(1.0480907930107179).epsilon(1e-13));
}

TEST_CASE("two-bus linear model evaluates the lossless drop") {
  RadialNetwork net = two_bus(0.01, 0.02, Complex(-0.1, -0.05));
  PowerFlowState st = solve_linear_pf(net, Injections::nominal(net));
  // v_hat = v0 - 2 (r p_load + x q_load) = 1.1025 - 0.004
  CHECK(st.v_diag(1, Phase::A) == doctest::Approx(1.0985).epsilon(1e-14));
  CHECK(st.ell[0].mat().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nonlinear state satisfies model residuals and rank-1 structure") {
  RadialNetwork net = loaded_mixed_network(2.0);
  PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));
  ResidualReport rep = pf_residuals(net, st);
  CHECK(rep.max_voltage_eq < 1e-8);
  CHECK(rep.max_power_balance < 1e-8);
  for (int li = 0; li < net.line_count(); ++li) {
    double trace = st.ell[li].mat().trace().real();
    CHECK(rep.rank1_defect[li] < 1e-8 * std::max(trace, 1.0));
    CHECK(st.ell[li].is_hermitian(1e-14));
    CHECK(st.v[net.line(li).to].is_hermitian(1e-12));
  }
  for (int b = 0; b < net.bus_count(); ++b)
    for (Phase p : net.effective_phases(b).phases()) CHECK(st.v_diag(b, p) > 0.0);

  SUBCASE("energy accounting: slack feed = loads + losses") {
    double slack_p = slack_injection(net, st).real().sum();
    double load_p = 0.0, loss_p = 0.0;
    for (int b = 0; b < net.bus_count(); ++b)
      if (b != net.root()) load_p += st.u.s[b].real().sum();
    for (int li = 0; li < net.line_count(); ++li)
      loss_p += (net.line(li).z.mat() * st.ell[li].mat()).diagonal().real().sum();
    CHECK(slack_p == doctest::Approx(-load_p + loss_p).epsilon(1e-8));
  }

  SUBCASE("loss quadratic form is real and nonnegative") {
    for (int li = 0; li < net.line_count(); ++li)
      for (Phase p : net.line(li).phases.phases())
        CHECK(line_loss_quadform(net.line(li), st.ell[li], p) > -1e-12);
  }
}

TEST_CASE("bva model") {
  SUBCASE("zero injections match the nonlinear no-load state") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState bva = solve_bva_pf(net, Injections::zero(net));
    PowerFlowState non = solve_nonlinear_pf(net, Injections::zero(net));
    for (int b = 0; b < net.bus_count(); ++b)
      CHECK((bva.v[b].mat() - non.v[b].mat()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("loaded case satisfies its own model equations") {
    RadialNetwork net = loaded_mixed_network(2.0);
    PowerFlowState bva = solve_bva_pf(net, Injections::nominal(net));
    ResidualReport rep = pf_residuals(net, bva);
    CHECK(rep.max_voltage_eq < 1e-8);
    CHECK(rep.max_power_balance < 1e-8);
  }
  SUBCASE("single-phase chain: bva equals the nonlinear model") {
    // The balanced-voltage approximation is vacuous with one phase.
    std::vector<Bus> buses;
    buses.push_back(Bus::make("0", PhaseSet::single(Phase::A)));
    for (int i = 1; i <= 4; ++i)
      buses.push_back(
          load_bus(std::to_string(i), PhaseSet::single(Phase::A), Complex(-0.08, -0.03)));
    std::vector<Line> lines;
    for (int i = 1; i <= 4; ++i)
      lines.push_back(mk_line(i - 1, i, PhaseSet::single(Phase::A), {0.02, 0.05}, {0, 0}));
    RadialNetwork net = RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
    PowerFlowState bva = solve_bva_pf(net, Injections::nominal(net));
    PowerFlowState non = solve_nonlinear_pf(net, Injections::nominal(net));
    for (int b = 1; b < net.bus_count(); ++b)
      CHECK(bva.v_diag(b, Phase::A) == doctest::Approx(non.v_diag(b, Phase::A)).epsilon(1e-8));
  }
}

TEST_CASE("voltage error decomposition") {
  SUBCASE("no load: all blocks zero") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState bva = solve_bva_pf(net, Injections::zero(net));
    VoltageErrorReport rep = voltage_error_decomposition(net, bva);
    for (const auto& m : rep.M) CHECK(m.mat().cwiseAbs().maxCoeff() < 1e-14);
    for (int b = 0; b < net.bus_count(); ++b)
      CHECK(rep.error[b].mat().cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("leaf line block is the single loss rotation") {
    RadialNetwork net = loaded_mixed_network(1.5);
    PowerFlowState bva = solve_bva_pf(net, Injections::nominal(net));
    VoltageErrorReport rep = voltage_error_decomposition(net, bva);
    const int leaf = net.parent_line(net.bus_index("3"));
    const Line& l = net.line(leaf);
    Eigen::VectorXcd loss = (l.z.mat() * bva.ell[leaf].mat()).diagonal();
    Eigen::MatrixXcd expect = gamma_submatrix(l.phases).mat() * loss.asDiagonal();
    CHECK((rep.M[leaf].mat() - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("decomposition equals the direct model difference") {
    // Includes shrinking laterals, so a child's loss rotates into the
    // parent's cross-phase entries.
    RadialNetwork net = loaded_mixed_network(2.0);
    Injections u = Injections::nominal(net);
    PowerFlowState bva = solve_bva_pf(net, u);
    PowerFlowState lin = solve_linear_pf(net, u);
    VoltageErrorReport rep = voltage_error_decomposition(net, bva);
    for (int b = 0; b < net.bus_count(); ++b) {
      Eigen::MatrixXcd direct = lin.v[b].mat() - bva.v[b].mat();
      CHECK((rep.error[b].mat() - direct).cwiseAbs().maxCoeff() < 1e-10);
    }
    // The lossless model is optimistic at every loaded fixture node.
    for (int b = 0; b < net.bus_count(); ++b)
      for (Phase p : net.effective_phases(b).phases())
        CHECK(lin.v_diag(b, p) >= bva.v_diag(b, p) - 1e-12);
  }
  SUBCASE("argument checking") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState non = solve_nonlinear_pf(net, Injections::nominal(net));
    CHECK_THROWS_AS(voltage_error_decomposition(net, non), StateMismatch);
    RadialNetwork other = loaded_mixed_network();
    PowerFlowState bva = solve_bva_pf(other, Injections::nominal(other));
    CHECK_THROWS_AS(voltage_error_decomposition(net, bva), StateMismatch);
  }
}

TEST_CASE("reference-phase binding sensitivity of the rank-1 closure") {
  // The closure holds for every reference phase only on an exactly rank-1
  // block; under heavy unbalanced loading the choice moves the per-line loss
  // quadratic by up to ~11% on this fixture (measured), which is why the
  // binding is pinned rather than left free. A single-phase line has no
  // freedom and reproduces the stored block to solver tolerance.
  RadialNetwork net = loaded_mixed_network(2.0);
  PowerFlowState bva = solve_bva_pf(net, Injections::nominal(net));
  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.line(li);
    const auto ps = l.phases.phases();
    const Eigen::MatrixXcd& S = bva.S[li].mat();
    const int ref = 0;
    const double vref = bva.v[l.from](ps[ref], ps[ref]).real();
    Eigen::MatrixXcd alt(ps.size(), ps.size());
    for (int r = 0; r < int(ps.size()); ++r)
      for (int c = 0; c < int(ps.size()); ++c)
        alt(r, c) = S(ref, c) * std::conj(S(ref, r)) / vref;
    alt = 0.5 * (alt + alt.adjoint()).eval();
    if (ps.size() == 1) {
      CHECK((alt - bva.ell[li].mat()).cwiseAbs().maxCoeff() < 1e-8);
      continue;
    }
    for (Phase p : ps) {
      double a = line_loss_quadform(l, bva.ell[li], p);
      double b = line_loss_quadform(l, PhaseIndexedMatrix(l.phases, alt), p);
      if (a > 1e-12) CHECK(std::abs(a - b) / a < 0.15);
    }
  }
}

TEST_CASE("linear model residuals against the nonlinear equations") {
  RadialNetwork net = loaded_mixed_network(2.0);
  PowerFlowState lin = solve_linear_pf(net, Injections::nominal(net));
  ResidualReport rep = pf_residuals(net, lin);
  // The lossless state satisfies its own balance identically; the dropped
  // loss terms surface as the rank-1 defect of the flow block.
  CHECK(rep.max_voltage_eq < 1e-12);
  CHECK(rep.max_power_balance < 1e-12);
  PowerFlowState non = solve_nonlinear_pf(net, Injections::nominal(net));
  double ell_scale = 0.0;
  for (int li = 0; li < net.line_count(); ++li)
    ell_scale = std::max(ell_scale, non.ell[li].mat().cwiseAbs().maxCoeff());
  CHECK(rep.max_rank1_defect > 0.1 * ell_scale);
  CHECK(rep.max_rank1_defect < 10.0 * ell_scale);
}

TEST_CASE("infeasible loading diverges") {
  RadialNetwork net = two_bus(0.01, 0.02, Complex(-60.0, -30.0));
  CHECK_THROWS_AS(solve_nonlinear_pf(net, Injections::nominal(net)), PowerFlowDiverged);
}
