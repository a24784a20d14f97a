#include "opf3/scenario.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opf3/errors.hpp"

namespace opf3 {

namespace fs = std::filesystem;

std::string to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::None: return "none";
    case ControlMode::Linear: return "linear";
    default: return "improved";
  }
}

std::string to_string(ExecutionMode mode) {
  return mode == ExecutionMode::Centralized ? "centralized" : "hierarchical";
}

SolverConfig resolve_config(const ParsedFeeder& feeder, const ScenarioSpec& spec) {
  SolverConfig cfg;
  const ScenarioParams& s = feeder.scenario;
  if (s.sigma_u) cfg.sigma_u = *s.sigma_u;
  if (s.sigma_mu) cfg.sigma_mu = *s.sigma_mu;
  if (s.epsilon) cfg.epsilon = *s.epsilon;
  if (s.lambda_stop) cfg.lambda_stop = *s.lambda_stop;
  if (s.max_iters) cfg.max_iters = *s.max_iters;
  if (s.v_lower_pu) cfg.v_lower = *s.v_lower_pu * *s.v_lower_pu;
  if (s.v_upper_pu) cfg.v_upper = *s.v_upper_pu * *s.v_upper_pu;
  if (spec.sigma_u) cfg.sigma_u = *spec.sigma_u;
  if (spec.sigma_mu) cfg.sigma_mu = *spec.sigma_mu;
  if (spec.epsilon) cfg.epsilon = *spec.epsilon;
  if (spec.lambda_stop) cfg.lambda_stop = *spec.lambda_stop;
  if (spec.max_iters) cfg.max_iters = *spec.max_iters;
  if (spec.v_lower_pu) cfg.v_lower = *spec.v_lower_pu * *spec.v_lower_pu;
  if (spec.v_upper_pu) cfg.v_upper = *spec.v_upper_pu * *spec.v_upper_pu;
  cfg.gradient_mode =
      spec.mode == ControlMode::Linear ? GradientTag::Linear : GradientTag::Improved;
  cfg.execution_mode = spec.execution;
  cfg.dual_source = spec.dual_source;
  return cfg;
}

namespace {

std::string feeder_stem(const std::string& path) { return fs::path(path).stem().string(); }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

std::string summary_line(const ScenarioResult& r) {
  std::ostringstream os;
  os << to_string(r.mode) << "/" << to_string(r.execution) << ": min_v=" << format_g9(r.min_v)
     << " max_v=" << format_g9(r.max_v) << " violations=" << r.violations
     << " iterations=" << r.iterations << " converged=" << (r.converged ? "yes" : "no")
     << " wall_ms=" << format_g9(r.wall_ms);
  if (r.messages > 0) os << " messages=" << r.messages;
  return os.str();
}

std::string diagnostics_report(const ConvergenceDiagnostics& d) {
  std::ostringstream os;
  os << "e1_estimate=" << format_g9(d.e1_estimate) << "\n"
     << "L_v=" << format_g9(d.L_v) << "\n"
     << "M_v=" << format_g9(d.M_v) << "\n"
     << "M_mu=" << format_g9(d.M_mu) << "\n"
     << "Delta=" << format_g9(d.Delta) << "\n"
     << "nu=" << format_g9(d.nu) << "\n"
     << "rho=" << format_g9(d.rho) << "\n"
     << "rho_lt_one=" << (d.rho_lt_one ? "true" : "false") << "\n"
     << "ball_radius=" << format_g9(d.ball_radius) << "\n"
     << "delta_probe=" << format_g9(d.delta_probe) << "\n"
     << "samples=" << d.samples << "\n";
  return os.str();
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  ParsedFeeder feeder = parse_feeder_file(spec.feeder_path, spec.load_scale);
  const RadialNetwork& net = feeder.network;
  SolverConfig cfg = resolve_config(feeder, spec);
  cfg.validate();

  fs::create_directories(spec.out_dir);
  const std::string stem = feeder_stem(spec.feeder_path) + "_" + to_string(spec.mode) + "_" +
                           to_string(spec.execution);
  ScenarioResult res;
  res.mode = spec.mode;
  res.execution = spec.execution;

  if (spec.mode == ControlMode::None) {
    PowerFlowState pf = solve_nonlinear_pf(net, Injections::nominal(net), cfg.pf);
    Eigen::VectorXd vd = pf.v_diag_vector();
    res.min_v = std::sqrt(vd.minCoeff());
    res.max_v = std::sqrt(vd.maxCoeff());
    res.violations = count_violations(vd, cfg.v_lower, cfg.v_upper);
    res.iterations = 0;
    IterationTrace trace;
    for (const NodeRef& ref : net.nodes())
      trace.profile.push_back(ProfileRow{net.bus(ref.bus).name, phase_letter(ref.phase),
                                         std::sqrt(pf.v_diag(ref.bus, ref.phase))});
    res.profile_path = (fs::path(spec.out_dir) / (stem + "_profile.csv")).string();
    write_file(res.profile_path, write_profile_csv(trace));
    res.summary = summary_line(res);
    return res;
  }

  std::optional<Clustering> clustering;
  if (spec.execution == ExecutionMode::Hierarchical) clustering = feeder.clustering;

  const auto t0 = std::chrono::steady_clock::now();
  SolveResult sol = solve(net, clustering, std::nullopt, cfg);
  const auto t1 = std::chrono::steady_clock::now();

  if (sol.status == SolveStatus::Diverged)
    throw PowerFlowDiverged("scenario '" + stem + "': power flow diverged at iteration " +
                            std::to_string(sol.state.iter));

  res.converged = sol.status == SolveStatus::Converged;
  res.iterations = sol.state.iter;
  res.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  Eigen::VectorXd vd = sol.state.pf.v_diag_vector();
  res.min_v = std::sqrt(vd.minCoeff());
  res.max_v = std::sqrt(vd.maxCoeff());
  res.violations = count_violations(vd, cfg.v_lower, cfg.v_upper);
  for (const IterationMessages& m : sol.state.ledger.per_iteration) res.messages += m.payload_scalars;

  res.trace_path = (fs::path(spec.out_dir) / (stem + "_trace.csv")).string();
  res.profile_path = (fs::path(spec.out_dir) / (stem + "_profile.csv")).string();
  write_file(res.trace_path, write_trace_csv(sol.state.trace));
  write_file(res.profile_path, write_profile_csv(sol.state.trace));

  if (spec.diagnostics) {
    ProbeSpec probe;
    ConvergenceDiagnostics diag = convergence_diagnostics(net, sol.state, cfg, probe);
    res.diagnostics_path = (fs::path(spec.out_dir) / (stem + "_diagnostics.txt")).string();
    write_file(res.diagnostics_path, diagnostics_report(diag));
  }
  res.summary = summary_line(res);
  return res;
}

std::vector<CompareRow> compare_controls(const std::string& feeder_path,
                                         const std::string& out_dir) {
  std::vector<CompareRow> rows;
  auto run_one = [&](ControlMode mode, ExecutionMode exec, const std::string& label) {
    ScenarioSpec spec;
    spec.feeder_path = feeder_path;
    spec.mode = mode;
    spec.execution = exec;
    spec.out_dir = out_dir;
    CompareRow row;
    row.label = label;
    try {
      row.result = run_scenario(spec);
    } catch (const Error& e) {
      row.result.mode = mode;
      row.result.execution = exec;
      row.result.failed = true;
      row.result.converged = false;
      row.result.summary = label + ": failed: " + e.what();
    }
    rows.push_back(std::move(row));
  };
  run_one(ControlMode::None, ExecutionMode::Centralized, "none");
  run_one(ControlMode::Linear, ExecutionMode::Centralized, "linear");
  run_one(ControlMode::Improved, ExecutionMode::Centralized, "improved/centralized");
  run_one(ControlMode::Improved, ExecutionMode::Hierarchical, "improved/hierarchical");
  return rows;
}

std::string comparison_table_text(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "mode                   min_v      violations  iterations  wall_ms     messages\n";
  for (const CompareRow& row : rows) {
    const ScenarioResult& r = row.result;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-22s %-10.6f %-11d %-11d %-11.2f %ld\n", row.label.c_str(),
                  r.min_v, r.violations, r.iterations, r.wall_ms, r.messages);
    os << buf;
  }
  return os.str();
}

std::string comparison_table_csv(const std::vector<CompareRow>& rows) {
  std::string out = "mode,min_v,violations,iterations,wall_ms,messages\n";
  for (const CompareRow& row : rows) {
    const ScenarioResult& r = row.result;
    out += row.label + "," + format_g9(r.min_v) + "," + std::to_string(r.violations) + "," +
           std::to_string(r.iterations) + "," + format_g9(r.wall_ms) + "," +
           std::to_string(r.messages) + "\n";
  }
  return out;
}

std::string validation_report(const std::string& feeder_path) {
  ParsedFeeder feeder = parse_feeder_file(feeder_path);
  const RadialNetwork& net = feeder.network;
  std::ostringstream os;
  os << "network: " << net.bus_count() << " buses, " << net.line_count() << " lines, "
     << net.node_count() << " node-phases, root '" << net.bus(net.root()).name << "'\n";
  os << "clustering: " << feeder.clustering.subtrees.size() << " subtrees, "
     << feeder.clustering.unclustered.size() << " unclustered buses\n";
  ClusterValidation val = validate_clustering(net, feeder.clustering);
  if (val.ok()) {
    os << "clustering assumptions: satisfied\n";
  } else {
    os << "clustering assumptions: VIOLATED\n";
    for (const auto& v : val.violations) os << "  - " << v.detail << "\n";
  }
  return os.str();
}

}  // namespace opf3
