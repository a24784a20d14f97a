#pragma once

#include <optional>
#include <string>

#include "opf3/network.hpp"
#include "opf3/trace.hpp"

namespace opf3 {

struct ScenarioParams {
  double load_scale = 1.0;
  double controllable_fraction_floor = 0.3;
  // Optional solver defaults carried by the fixture.
  std::optional<double> sigma_u, sigma_mu, epsilon, lambda_stop;
  std::optional<int> max_iters;
  std::optional<double> v_lower_pu, v_upper_pu;
};

struct ParsedFeeder {
  RadialNetwork network;
  Clustering clustering;
  ScenarioParams scenario;
  std::string normalized;  // canonical per-unit document (defaults materialized)
};

// Parses and validates a feeder document (JSON, schema version 1).
//
// Conventions: injections are per-unit generation-positive; impedance entries
// come as {"row","col","r","x"} pairs, mirrored symmetrically (conflicting
// mirror entries are rejected); "units": "physical" converts ohm / kW inputs
// through the base block. load_scale multiplies nominal injections and
// explicit bounds; controllable buses without explicit bounds get the
// box between the scaled nominal and controllable_fraction_floor times it.
ParsedFeeder parse_feeder(const std::string& text,
                          std::optional<double> load_scale_override = {});
ParsedFeeder parse_feeder_file(const std::string& path,
                               std::optional<double> load_scale_override = {});

// Canonical document for the parsed model; parse(serialize(f)) reproduces
// both the model and the byte-identical document.
std::string serialize_feeder(const ParsedFeeder& feeder);

// 9-significant-digit formatting used by every CSV emitter.
std::string format_g9(double value);

// Trace CSV: header iter,objective,min_v,max_v,du_norm,mu_norm,violations,ms.
std::string write_trace_csv(const IterationTrace& trace);
// Profile CSV: header bus,phase,vmag_pu.
std::string write_profile_csv(const IterationTrace& trace);
IterationTrace parse_trace_csv(const std::string& text);

}  // namespace opf3
