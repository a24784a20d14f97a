#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "opf3/scenario.hpp"

namespace {

int run_command(const opf3::ScenarioSpec& spec) {
  try {
    opf3::ScenarioResult res = opf3::run_scenario(spec);
    std::cout << res.summary << "\n";
    return 0;
  } catch (const opf3::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-phase OPF solver with hierarchical primal-dual control"};
  app.require_subcommand(1);

  opf3::ScenarioSpec spec;
  std::string mode = "improved", execution = "centralized", dual_source = "measured";

  CLI::App* run = app.add_subcommand("run", "Run one control scenario on a feeder");
  run->add_option("--feeder", spec.feeder_path, "Feeder JSON file")->required();
  run->add_option("--mode", mode, "none|linear|improved")->default_str("improved");
  run->add_option("--execution", execution, "centralized|hierarchical")
      ->default_str("centralized");
  double load_scale = 0, sigma_u = 0, sigma_mu = 0, epsilon = 0, lambda = 0;
  int max_iters = 0;
  auto* o_scale = run->add_option("--load-scale", load_scale, "Multiplier on nominal loads");
  auto* o_su = run->add_option("--sigma-u", sigma_u, "Primal step size");
  auto* o_sm = run->add_option("--sigma-mu", sigma_mu, "Dual step size");
  auto* o_eps = run->add_option("--epsilon", epsilon, "Dual regularization");
  auto* o_lam = run->add_option("--lambda", lambda, "Stopping threshold on ||du||_2");
  auto* o_max = run->add_option("--max-iters", max_iters, "Iteration cap");
  run->add_option("--out", spec.out_dir, "Output directory")->default_str(".");
  run->add_flag("--diagnostics", spec.diagnostics, "Write convergence diagnostics report");
  run->add_option("--dual-source", dual_source,
                  "measured|linear-model voltage feeding the dual update")
      ->default_str("measured");

  std::string cmp_feeder, cmp_out = ".";
  CLI::App* cmp = app.add_subcommand("compare", "Run no-control / linear / improved comparison");
  cmp->add_option("--feeder", cmp_feeder, "Feeder JSON file")->required();
  cmp->add_option("--out", cmp_out, "Output directory")->default_str(".");

  std::string val_feeder;
  CLI::App* val = app.add_subcommand("validate", "Validate a feeder and its clustering");
  val->add_option("--feeder", val_feeder, "Feeder JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    if (mode == "none")
      spec.mode = opf3::ControlMode::None;
    else if (mode == "linear")
      spec.mode = opf3::ControlMode::Linear;
    else if (mode == "improved")
      spec.mode = opf3::ControlMode::Improved;
    else {
      std::cerr << "error: unknown mode '" << mode << "'\n";
      return 2;
    }
    if (execution == "hierarchical")
      spec.execution = opf3::ExecutionMode::Hierarchical;
    else if (execution == "centralized")
      spec.execution = opf3::ExecutionMode::Centralized;
    else {
      std::cerr << "error: unknown execution '" << execution << "'\n";
      return 2;
    }
    if (dual_source == "linear-model")
      spec.dual_source = opf3::DualVoltageSource::LinearModel;
    else if (dual_source != "measured") {
      std::cerr << "error: unknown dual source '" << dual_source << "'\n";
      return 2;
    }
    if (*o_scale) spec.load_scale = load_scale;
    if (*o_su) spec.sigma_u = sigma_u;
    if (*o_sm) spec.sigma_mu = sigma_mu;
    if (*o_eps) spec.epsilon = epsilon;
    if (*o_lam) spec.lambda_stop = lambda;
    if (*o_max) spec.max_iters = max_iters;
    return run_command(spec);
  }

  if (cmp->parsed()) {
    std::vector<opf3::CompareRow> rows;
    try {
      rows = opf3::compare_controls(cmp_feeder, cmp_out);
    } catch (const opf3::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    std::cout << opf3::comparison_table_text(rows);
    const std::string csv_path = cmp_out + "/comparison.csv";
    try {
      std::ofstream out(csv_path, std::ios::binary);
      out << opf3::comparison_table_csv(rows);
    } catch (...) {
      std::cerr << "error: cannot write " << csv_path << "\n";
      return 1;
    }
    int exit_code = 0;
    for (const auto& row : rows)
      if (row.result.failed) exit_code = 1;
    return exit_code;
  }

  if (val->parsed()) {
    try {
      std::cout << opf3::validation_report(val_feeder);
      return 0;
    } catch (const opf3::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
