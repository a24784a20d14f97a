#include <doctest.h>

#include "opf3/gradients.hpp"
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

// Y with two identical branches off bus 1; used for the locality property.
RadialNetwork twin_branch_network() {
  std::vector<Bus> buses;
  buses.push_back(Bus::make("0", PhaseSet::full()));
  buses.push_back(load_bus("1", PhaseSet::full(), Complex(-0.05, -0.02), true));
  buses.push_back(load_bus("2", PhaseSet::full(), Complex(-0.07, -0.03)));
  buses.push_back(load_bus("3", PhaseSet::full(), Complex(-0.07, -0.03)));
  std::vector<Line> lines;
  lines.push_back(mk_line(0, 1, PhaseSet::full(), {0.04, 0.09}, {0.012, 0.035}));
  lines.push_back(mk_line(1, 2, PhaseSet::full(), {0.05, 0.10}, {0.015, 0.040}));
  lines.push_back(mk_line(1, 3, PhaseSet::full(), {0.05, 0.10}, {0.015, 0.040}));
  return RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
}

}  // namespace

TEST_CASE("linear gradients on elementary cases") {
  SUBCASE("single line, same phase: R=2r, X=2x") {
    RadialNetwork net = two_bus(0.01, 0.02, Complex(-0.1, -0.05));
    GradientTable t = linear_gradients(net);
    REQUIRE(t.dv_dp.rows() == 1);
    CHECK(t.dv_dp(0, 0) == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(t.dv_dq(0, 0) == doctest::Approx(0.04).epsilon(1e-15));
  }
  SUBCASE("disjoint branches off the root: zero entries") {
    std::vector<Bus> buses;
    buses.push_back(Bus::make("0", PhaseSet::full()));
    buses.push_back(load_bus("1", PhaseSet::full(), Complex(-0.1, -0.05)));
    buses.push_back(load_bus("2", PhaseSet::full(), Complex(-0.1, -0.05)));
    std::vector<Line> lines;
    lines.push_back(mk_line(0, 1, PhaseSet::full(), {0.04, 0.09}, {0.01, 0.03}));
    lines.push_back(mk_line(0, 2, PhaseSet::full(), {0.04, 0.09}, {0.01, 0.03}));
    RadialNetwork star = RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
    GradientTable ts = linear_gradients(star);
    int a = star.node_index(star.bus_index("1"), Phase::A);
    int b = star.node_index(star.bus_index("2"), Phase::A);
    CHECK(ts.dv_dp(a, b) == 0.0);
    CHECK(ts.dv_dq(a, b) == 0.0);
  }
  SUBCASE("three-phase single line, cross phase against symbolic evaluation") {
    std::vector<Bus> buses;
    buses.push_back(Bus::make("0", PhaseSet::full()));
    buses.push_back(load_bus("1", PhaseSet::full(), Complex(-0.1, -0.05)));
    const Complex self(0.04, 0.09), mutual(0.012, 0.035);
    std::vector<Line> lines{mk_line(0, 1, PhaseSet::full(), self, mutual)};
    RadialNetwork net = RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
    GradientTable t = linear_gradients(net);
    const int ja = net.node_index(1, Phase::A);
    const int hb = net.node_index(1, Phase::B);
    // Independent evaluation: alpha^{a-b} = alpha^{-1} = -1/2 + i sqrt(3)/2.
    const Complex rot(-0.5, std::sqrt(3.0) / 2.0);
    const Complex zc = std::conj(mutual) * rot;
    CHECK(t.dv_dp(ja, hb) == doctest::Approx(2.0 * zc.real()).epsilon(1e-14));
    CHECK(t.dv_dq(ja, hb) == doctest::Approx(-2.0 * zc.imag()).epsilon(1e-14));
  }
}

TEST_CASE("ell-hat derivatives") {
  SUBCASE("zero flow gives zero for every argument") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState st = solve_nonlinear_pf(net, Injections::zero(net));
    for (Phase psi : {Phase::A, Phase::B, Phase::C})
      for (Phase eta : {Phase::A, Phase::B, Phase::C})
        for (auto kind : {InjectionKind::ActiveP, InjectionKind::ReactiveQ})
          CHECK(std::abs(ell_derivative_hat(net, st, 0, psi, eta, Phase::A, 3, Phase::B, kind)) ==
                0.0);
  }
  SUBCASE("single-phase specialization at a loaded point") {
    // Chain 0-1-2 so the observed line (1,2) has a nonzero upstream
    // sensitivity: R_{1,2} = 2 r01, X_{1,2} = 2 x01.
    const double r01 = 0.015, x01 = 0.03, r12 = 0.01, x12 = 0.02;
    std::vector<Bus> buses;
    buses.push_back(Bus::make("0", PhaseSet::single(Phase::A)));
    buses.push_back(load_bus("1", PhaseSet::single(Phase::A), Complex(-0.05, -0.02)));
    buses.push_back(load_bus("2", PhaseSet::single(Phase::A), Complex(-0.1, -0.05)));
    std::vector<Line> lines;
    Line l01;
    l01.from = 0;
    l01.to = 1;
    l01.phases = PhaseSet::single(Phase::A);
    l01.z = scalar_z(r01, x01);
    Line l12;
    l12.from = 1;
    l12.to = 2;
    l12.phases = PhaseSet::single(Phase::A);
    l12.z = scalar_z(r12, x12);
    lines.push_back(l01);
    lines.push_back(l12);
    RadialNetwork net = RadialNetwork::build(std::move(buses), std::move(lines), SlackSpec{});
    PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));
    const double v1 = st.v_diag(1, Phase::A);
    const Complex S = st.S[1](Phase::A, Phase::A);
    const double ell = st.ell[1](Phase::A, Phase::A).real();
    Complex dp = ell_derivative_hat(net, st, 1, Phase::A, Phase::A, Phase::A, 2, Phase::A,
                                    InjectionKind::ActiveP);
    // -(1/v1) [ ell R_{1h} + (conj(S) + S) 1(2 in P_h) ], R_{1h} = 2 r01.
    CHECK(dp.real() == doctest::Approx(-(ell * 2 * r01 + 2 * S.real()) / v1).epsilon(1e-12));
    CHECK(std::abs(dp.imag()) < 1e-15);
    Complex dq = ell_derivative_hat(net, st, 1, Phase::A, Phase::A, Phase::A, 2, Phase::A,
                                    InjectionKind::ReactiveQ);
    // -(1/v1) [ ell X_{1h} + 2 Im(S) ]; the pair i(conj(S) - S) is real.
    CHECK(dq.real() == doctest::Approx(-(ell * 2 * x01 + 2 * S.imag()) / v1).epsilon(1e-12));
    CHECK(std::abs(dq.imag()) < 1e-15);
  }
  SUBCASE("matches finite differences of the bva flow block") {
    const double r = 0.01, x = 0.02, step = 1e-5;
    RadialNetwork net = two_bus(r, x, Complex(-0.1, -0.05));
    Injections u = Injections::nominal(net);
    PowerFlowState st = solve_nonlinear_pf(net, u);
    PowerFlowOptions tight;
    tight.tol = 1e-13;
    tight.max_sweeps = 400;
    for (auto kind : {InjectionKind::ActiveP, InjectionKind::ReactiveQ}) {
      Injections up = u, dn = u;
      Complex d = kind == InjectionKind::ActiveP ? Complex(step, 0) : Complex(0, step);
      up.set(net, 1, Phase::A, u.at(net, 1, Phase::A) + d);
      dn.set(net, 1, Phase::A, u.at(net, 1, Phase::A) - d);
      Complex fd = (solve_bva_pf(net, up, tight).ell[0](Phase::A, Phase::A) -
                    solve_bva_pf(net, dn, tight).ell[0](Phase::A, Phase::A)) /
                   (2.0 * step);
      Complex an = ell_derivative_hat(net, st, 0, Phase::A, Phase::A, Phase::A, 1, Phase::A, kind);
      // The hatted inner derivatives replace the exact ones, so agreement is
      // at the model-gap level, not machine precision: measured ~2e-3
      // relative on this case, asserted at 5% relative + 1e-4 absolute.
      CHECK(std::abs(fd - an) < 0.05 * std::abs(fd) + 1e-4);
    }
  }
}

TEST_CASE("improved gradients") {
  SUBCASE("collapse to the linear table at zero flow, exactly") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState st = solve_nonlinear_pf(net, Injections::zero(net));
    GradientTable lin = linear_gradients(net);
    GradientTable imp = improved_gradients(net, st);
    for (int r = 0; r < lin.dv_dp.rows(); ++r)
      for (int c = 0; c < lin.dv_dp.cols(); ++c) {
        CHECK(imp.dv_dp(r, c) == lin.dv_dp(r, c));
        CHECK(imp.dv_dq(r, c) == lin.dv_dq(r, c));
      }
  }
  SUBCASE("three algebraic forms agree to 1e-12") {
    RadialNetwork net = loaded_mixed_network(2.0);
    PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));
    LinearSensitivity sens = build_linear_sensitivity(net);
    for (const NodeRef& obs : net.nodes())
      for (const NodeRef& act : net.nodes())
        for (auto kind : {InjectionKind::ActiveP, InjectionKind::ReactiveQ}) {
          double a = improved_gradient_entry(net, st, sens, obs.bus, obs.phase, act.bus,
                                             act.phase, kind, ImprovedForm::Assembled);
          double f = improved_gradient_entry(net, st, sens, obs.bus, obs.phase, act.bus,
                                             act.phase, kind, ImprovedForm::Factored);
          double c = improved_gradient_entry(net, st, sens, obs.bus, obs.phase, act.bus,
                                             act.phase, kind, ImprovedForm::Compensated);
          CHECK(std::abs(a - f) < 1e-12);
          CHECK(std::abs(a - c) < 1e-12);
        }
  }
  SUBCASE("loss weights lie in (0, 1] on the loaded network") {
    RadialNetwork net = loaded_mixed_network(2.0);
    PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));
    for (int li = 0; li < net.line_count(); ++li)
      for (Phase p : net.line(li).phases.phases()) {
        double w = line_loss_weight(net, st, li, p);
        CHECK(w > 0.0);
        CHECK(w <= 1.0);
      }
  }
  SUBCASE("single-phase two-bus: improved beats linear against the oracle") {
    RadialNetwork net = two_bus(0.01, 0.02, Complex(-0.3, -0.15));
    Injections u = Injections::nominal(net);
    PowerFlowState st = solve_nonlinear_pf(net, u);
    GradientTable lin = linear_gradients(net);
    GradientTable imp = improved_gradients(net, st);
    double fd_p =
        finite_difference_gradient(net, u, 1, Phase::A, 1, Phase::A, InjectionKind::ActiveP);
    double fd_q =
        finite_difference_gradient(net, u, 1, Phase::A, 1, Phase::A, InjectionKind::ReactiveQ);
    CHECK(std::abs(imp.dv_dp(0, 0) - fd_p) < std::abs(lin.dv_dp(0, 0) - fd_p));
    CHECK(std::abs(imp.dv_dq(0, 0) - fd_q) < std::abs(lin.dv_dq(0, 0) - fd_q));
  }
  SUBCASE("state checking") {
    RadialNetwork net = loaded_mixed_network();
    PowerFlowState lin_state = solve_linear_pf(net, Injections::nominal(net));
    CHECK_THROWS_AS(improved_gradients(net, lin_state), StateMismatch);
  }
  SUBCASE("locality: twin observed nodes with equal parent-line state agree") {
    RadialNetwork net = twin_branch_network();
    PowerFlowState st = solve_nonlinear_pf(net, Injections::nominal(net));
    GradientTable imp = improved_gradients(net, st);
    const int h = net.node_index(net.bus_index("1"), Phase::B);
    for (Phase p : PhaseSet::full().phases()) {
      const int j2 = net.node_index(net.bus_index("2"), p);
      const int j3 = net.node_index(net.bus_index("3"), p);
      CHECK(imp.dv_dp(j2, h) == doctest::Approx(imp.dv_dp(j3, h)).epsilon(1e-12));
      CHECK(imp.dv_dq(j2, h) == doctest::Approx(imp.dv_dq(j3, h)).epsilon(1e-12));
    }
  }
}

TEST_CASE("finite-difference oracle") {
  SUBCASE("no-load gradients match the linear table to truncation error") {
    RadialNetwork net = loaded_mixed_network();
    Injections zero = Injections::zero(net);
    GradientTable lin = linear_gradients(net);
    GradientTable fd = finite_difference_table(net, zero, 1e-6);
    GradientErrorReport err = gradient_error(lin, fd);
    CHECK(err.max_abs < 1e-6);
  }
  SUBCASE("step-halving consistency") {
    // With tightly converged solves, large steps sit in the truncation-
    // dominated regime and shrink about quadratically; tiny steps are
    // already converged so successive estimates stay within the noise floor.
    RadialNetwork net = two_bus(0.01, 0.02, Complex(-0.4, -0.2));
    Injections u = Injections::nominal(net);
    auto fd = [&](double step) {
      return finite_difference_gradient(net, u, 1, Phase::A, 1, Phase::A,
                                        InjectionKind::ActiveP, step);
    };
    const double coarse = std::abs(fd(4e-2) - fd(2e-2));
    const double fine = std::abs(fd(2e-2) - fd(1e-2));
    CHECK(fine < 0.5 * coarse);  // ~4x shrink expected, allow headroom
    CHECK(std::abs(fd(1e-5) - fd(1e-6)) < 1e-6);
  }
  SUBCASE("error report basics") {
    RadialNetwork net = loaded_mixed_network(2.0);
    GradientTable lin = linear_gradients(net);
    GradientErrorReport self = gradient_error(lin, lin);
    CHECK(self.max_abs == 0.0);
    CHECK(self.frobenius == 0.0);
    GradientTable small = lin;
    small.dv_dp.conservativeResize(2, 2);
    CHECK_THROWS_AS(gradient_error(small, lin), IndexMismatch);
  }
  SUBCASE("improved error below linear error on the loaded network") {
    RadialNetwork net = loaded_mixed_network(2.0);
    Injections u = Injections::nominal(net);
    PowerFlowState st = solve_nonlinear_pf(net, u);
    GradientTable fd = finite_difference_table(net, u);
    GradientErrorReport e_imp = gradient_error(improved_gradients(net, st), fd);
    GradientErrorReport e_lin = gradient_error(linear_gradients(net), fd);
    CHECK(e_imp.frobenius < e_lin.frobenius);
    CHECK(e_imp.max_abs < e_lin.max_abs);
  }
}
