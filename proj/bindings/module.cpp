#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "opf3/diagnostics.hpp"
#include "opf3/feeder.hpp"
#include "opf3/scenario.hpp"

namespace py = pybind11;
using namespace opf3;

namespace {

// Parsed feeder plus derived handles; the shared network owns everything the
// other calls reference.
struct PyFeeder {
  std::shared_ptr<ParsedFeeder> f;
  const RadialNetwork& net() const { return f->network; }
};

PyFeeder load_feeder(const std::string& path, std::optional<double> load_scale) {
  PyFeeder out;
  out.f = std::make_shared<ParsedFeeder>(parse_feeder_file(path, load_scale));
  return out;
}

struct PyState {
  std::shared_ptr<ParsedFeeder> f;  // keeps the network alive
  PowerFlowState state;
};

py::dict state_summary(const PyState& s) {
  const RadialNetwork& net = *s.state.network;
  py::dict d;
  d["model"] = s.state.tag == ModelTag::Nonlinear ? "nonlinear"
               : s.state.tag == ModelTag::Linear  ? "linear"
                                                  : "bva";
  d["sweeps"] = s.state.sweeps;
  d["residual"] = s.state.residual;
  py::dict volts;
  for (const NodeRef& n : net.nodes()) {
    std::string key = net.bus(n.bus).name + "." + phase_letter(n.phase);
    volts[py::str(key)] = std::sqrt(s.state.v_diag(n.bus, n.phase));
  }
  d["vmag_pu"] = volts;
  d["v_diag"] = s.state.v_diag_vector();
  return d;
}

}  // namespace

PYBIND11_MODULE(_opf3, m) {
  m.doc() =
      "Three-phase distribution OPF: power flow, gradients, hierarchical primal-dual solver";

  static py::exception<Error> exc(m, "Opf3Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      exc(e.what());
    }
  });

  py::class_<PyFeeder>(m, "Feeder")
      .def_property_readonly("bus_count", [](const PyFeeder& f) { return f.net().bus_count(); })
      .def_property_readonly("line_count", [](const PyFeeder& f) { return f.net().line_count(); })
      .def_property_readonly("node_count", [](const PyFeeder& f) { return f.net().node_count(); })
      .def_property_readonly("node_names",
                             [](const PyFeeder& f) {
                               std::vector<std::string> names;
                               for (const NodeRef& n : f.net().nodes())
                                 names.push_back(f.net().bus(n.bus).name + "." +
                                                 phase_letter(n.phase));
                               return names;
                             })
      .def("validate_clustering", [](const PyFeeder& f) {
        std::vector<std::string> out;
        for (const auto& v : validate_clustering(f.net(), f.f->clustering).violations)
          out.push_back(v.detail);
        return out;
      });

  py::class_<PyState>(m, "PowerFlowResult")
      .def_property_readonly("summary", &state_summary)
      .def_property_readonly("v_diag", [](const PyState& s) { return s.state.v_diag_vector(); })
      .def_property_readonly("min_vmag", [](const PyState& s) {
        return std::sqrt(s.state.v_diag_vector().minCoeff());
      });

  m.def("load_feeder", &load_feeder, py::arg("path"), py::arg("load_scale") = std::nullopt);

  m.def(
      "solve_power_flow",
      [](const PyFeeder& f, const std::string& model) {
        Injections u = Injections::nominal(f.net());
        PyState out{f.f, {}};
        if (model == "nonlinear")
          out.state = solve_nonlinear_pf(f.net(), u);
        else if (model == "linear")
          out.state = solve_linear_pf(f.net(), u);
        else if (model == "bva")
          out.state = solve_bva_pf(f.net(), u);
        else
          throw Error("unknown model '" + model + "'");
        return out;
      },
      py::arg("feeder"), py::arg("model") = "nonlinear");

  m.def("pf_residual_report", [](const PyFeeder& f, const PyState& s) {
    ResidualReport rep = pf_residuals(f.net(), s.state);
    py::dict d;
    d["max_voltage_eq"] = rep.max_voltage_eq;
    d["max_power_balance"] = rep.max_power_balance;
    d["max_rank1_defect"] = rep.max_rank1_defect;
    return d;
  });

  m.def("voltage_error_decomposition", [](const PyFeeder& f) {
    Injections u = Injections::nominal(f.net());
    PowerFlowState bva = solve_bva_pf(f.net(), u);
    PowerFlowState lin = solve_linear_pf(f.net(), u);
    VoltageErrorReport rep = voltage_error_decomposition(f.net(), bva);
    double worst = 0.0;
    for (int b = 0; b < f.net().bus_count(); ++b)
      worst = std::max(
          worst,
          (rep.error[b].mat() - (lin.v[b].mat() - bva.v[b].mat())).cwiseAbs().maxCoeff());
    py::dict d;
    d["max_identity_gap"] = worst;
    std::vector<double> diag;
    for (const NodeRef& n : f.net().nodes())
      diag.push_back(rep.diag_error[n.bus](f.net().effective_phases(n.bus).index_of(n.phase)));
    d["diag_error"] = diag;
    return d;
  });

  m.def("gradient_tables", [](const PyFeeder& f) {
    Injections u = Injections::nominal(f.net());
    PowerFlowState st = solve_nonlinear_pf(f.net(), u);
    GradientTable lin = linear_gradients(f.net());
    GradientTable imp = improved_gradients(f.net(), st);
    py::dict d;
    d["linear_dv_dp"] = lin.dv_dp;
    d["linear_dv_dq"] = lin.dv_dq;
    d["improved_dv_dp"] = imp.dv_dp;
    d["improved_dv_dq"] = imp.dv_dq;
    return d;
  });

  m.def(
      "finite_difference_tables",
      [](const PyFeeder& f, double step) {
        GradientTable fd = finite_difference_table(f.net(), Injections::nominal(f.net()), step);
        py::dict d;
        d["dv_dp"] = fd.dv_dp;
        d["dv_dq"] = fd.dv_dq;
        return d;
      },
      py::arg("feeder"), py::arg("step") = 1e-6);

  m.def(
      "solve_opf",
      [](const PyFeeder& f, const std::string& mode, const std::string& execution,
         std::optional<int> max_iters) {
        ScenarioSpec spec;
        SolverConfig cfg = resolve_config(*f.f, spec);
        cfg.gradient_mode = mode == "linear" ? GradientTag::Linear : GradientTag::Improved;
        cfg.execution_mode = execution == "hierarchical" ? ExecutionMode::Hierarchical
                                                         : ExecutionMode::Centralized;
        if (max_iters) cfg.max_iters = *max_iters;
        std::optional<Clustering> clustering;
        if (cfg.execution_mode == ExecutionMode::Hierarchical) clustering = f.f->clustering;
        SolveResult res = solve(f.net(), clustering, std::nullopt, cfg);
        py::dict d;
        d["converged"] = res.status == SolveStatus::Converged;
        d["iterations"] = res.state.iter;
        Eigen::VectorXd vd = res.state.pf.v_diag_vector();
        d["min_vmag"] = std::sqrt(vd.minCoeff());
        d["max_vmag"] = std::sqrt(vd.maxCoeff());
        d["violations"] = count_violations(vd, cfg.v_lower, cfg.v_upper);
        d["mu_norm"] =
            std::sqrt(res.state.mu.lower.squaredNorm() + res.state.mu.upper.squaredNorm());
        std::vector<double> du;
        for (const TraceRecord& r : res.state.trace.records) du.push_back(r.du_norm);
        d["du_trace"] = du;
        long scalars = 0;
        for (const auto& msg : res.state.ledger.per_iteration) scalars += msg.payload_scalars;
        d["message_scalars"] = scalars;
        return d;
      },
      py::arg("feeder"), py::arg("mode") = "improved", py::arg("execution") = "centralized",
      py::arg("max_iters") = std::nullopt);
}
