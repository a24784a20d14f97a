#include "opf3/feeder.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "opf3/errors.hpp"

namespace opf3 {

using Json = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_fail(const std::string& where, const std::string& what) {
  throw SchemaError("feeder schema: " + where + ": " + what);
}

const Json& need(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) schema_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double need_number(const Json& j, const char* key, const std::string& where) {
  const Json& v = need(j, key, where);
  if (!v.is_number()) schema_fail(where + "." + key, "expected a number");
  return v.get<double>();
}

std::string need_string(const Json& j, const char* key, const std::string& where) {
  const Json& v = need(j, key, where);
  if (!v.is_string()) schema_fail(where + "." + key, "expected a string");
  return v.get<std::string>();
}

PhaseSet parse_phases(const Json& j, const char* key, const std::string& where) {
  try {
    return PhaseSet::parse(need_string(j, key, where));
  } catch (const PhaseMismatch& e) {
    schema_fail(where + "." + key, e.what());
  }
}

}  // namespace

ParsedFeeder parse_feeder(const std::string& text, std::optional<double> load_scale_override) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("feeder schema: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("feeder schema: top level must be an object");
  if (need(doc, "version", "$").get<int>() != 1)
    schema_fail("$.version", "unsupported schema version");

  const bool physical = doc.value("units", std::string("per_unit")) == "physical";
  double s_base_kva = 1.0, v_base_kv = 1.0, z_base = 1.0;
  if (doc.contains("base")) {
    const Json& base = doc["base"];
    s_base_kva = need_number(base, "s_base_kva", "$.base");
    v_base_kv = need_number(base, "v_base_kv", "$.base");
    if (s_base_kva <= 0 || v_base_kv <= 0) schema_fail("$.base", "base values must be positive");
    z_base = v_base_kv * v_base_kv * 1000.0 / s_base_kva;
  } else if (physical) {
    schema_fail("$", "physical units require a base block");
  }
  const double s_div = physical ? s_base_kva : 1.0;
  const double z_div = physical ? z_base : 1.0;

  SlackSpec slack;
  const Json& js = need(doc, "slack", "$");
  slack.v_magnitude_pu = need_number(js, "v_magnitude_pu", "$.slack");
  if (js.contains("phase_angles_deg")) {
    const Json& ang = js["phase_angles_deg"];
    if (!ang.is_array() || ang.size() != 3) schema_fail("$.slack.phase_angles_deg", "expected 3 angles");
    for (int i = 0; i < 3; ++i) slack.phase_angles_deg[i] = ang[i].get<double>();
  }

  ScenarioParams scen;
  if (doc.contains("scenario")) {
    const Json& sc = doc["scenario"];
    scen.load_scale = sc.value("load_scale", 1.0);
    scen.controllable_fraction_floor = sc.value("controllable_fraction_floor", 0.3);
    if (sc.contains("sigma_u")) scen.sigma_u = sc["sigma_u"].get<double>();
    if (sc.contains("sigma_mu")) scen.sigma_mu = sc["sigma_mu"].get<double>();
    if (sc.contains("epsilon")) scen.epsilon = sc["epsilon"].get<double>();
    if (sc.contains("lambda")) scen.lambda_stop = sc["lambda"].get<double>();
    if (sc.contains("max_iters")) scen.max_iters = sc["max_iters"].get<int>();
    if (sc.contains("v_lower_pu")) scen.v_lower_pu = sc["v_lower_pu"].get<double>();
    if (sc.contains("v_upper_pu")) scen.v_upper_pu = sc["v_upper_pu"].get<double>();
  }
  if (load_scale_override) scen.load_scale = *load_scale_override;
  if (scen.load_scale <= 0) throw ValidationError("load_scale must be positive");
  const double scale = scen.load_scale;

  const Json& jbuses = need(doc, "buses", "$");
  if (!jbuses.is_array() || jbuses.empty()) schema_fail("$.buses", "expected a non-empty array");
  std::vector<Bus> buses;
  std::unordered_map<std::string, int> index_of;
  for (size_t i = 0; i < jbuses.size(); ++i) {
    const std::string where = "$.buses[" + std::to_string(i) + "]";
    const Json& jb = jbuses[i];
    Bus bus = Bus::make(need_string(jb, "name", where), parse_phases(jb, "phases", where));
    bus.controllable = jb.value("controllable", false);
    if (jb.contains("injection")) {
      for (const Json& ji : jb["injection"]) {
        Phase p = phase_from_letter(need_string(ji, "phase", where + ".injection")[0]);
        if (!bus.phases.contains(p))
          throw ValidationError(where + ": injection on phase not declared at the bus");
        bus.injection(bus.phases.index_of(p)) =
            scale * Complex(need_number(ji, "p", where + ".injection") / s_div,
                            need_number(ji, "q", where + ".injection") / s_div);
      }
    }
    if (jb.contains("bounds")) {
      for (const Json& jbd : jb["bounds"]) {
        Phase p = phase_from_letter(need_string(jbd, "phase", where + ".bounds")[0]);
        if (!bus.phases.contains(p))
          throw ValidationError(where + ": bounds on phase not declared at the bus");
        const int k = bus.phases.index_of(p);
        bus.p_min(k) = scale * need_number(jbd, "p_min", where + ".bounds") / s_div;
        bus.p_max(k) = scale * need_number(jbd, "p_max", where + ".bounds") / s_div;
        bus.q_min(k) = scale * need_number(jbd, "q_min", where + ".bounds") / s_div;
        bus.q_max(k) = scale * need_number(jbd, "q_max", where + ".bounds") / s_div;
      }
    } else if (bus.controllable) {
      // Curtailable-load convention: the box spans nominal to the fraction
      // floor of nominal, per coordinate.
      const double f = scen.controllable_fraction_floor;
      for (int k = 0; k < bus.phases.size(); ++k) {
        const double pn = bus.injection(k).real(), qn = bus.injection(k).imag();
        bus.p_min(k) = std::min(pn, f * pn);
        bus.p_max(k) = std::max(pn, f * pn);
        bus.q_min(k) = std::min(qn, f * qn);
        bus.q_max(k) = std::max(qn, f * qn);
      }
    } else {
      for (int k = 0; k < bus.phases.size(); ++k) {
        bus.p_min(k) = bus.p_max(k) = bus.injection(k).real();
        bus.q_min(k) = bus.q_max(k) = bus.injection(k).imag();
      }
    }
    if (!index_of.emplace(bus.name, int(buses.size())).second)
      throw ValidationError("duplicate bus id '" + bus.name + "'");
    buses.push_back(std::move(bus));
  }

  auto lookup = [&](const std::string& name, const std::string& where) {
    auto it = index_of.find(name);
    if (it == index_of.end()) throw UnknownBus(where + ": unknown bus id '" + name + "'");
    return it->second;
  };

  const Json& jlines = need(doc, "lines", "$");
  if (!jlines.is_array()) schema_fail("$.lines", "expected an array");
  std::vector<Line> lines;
  for (size_t i = 0; i < jlines.size(); ++i) {
    const std::string where = "$.lines[" + std::to_string(i) + "]";
    const Json& jl = jlines[i];
    Line line;
    line.from = lookup(need_string(jl, "from", where), where);
    line.to = lookup(need_string(jl, "to", where), where);
    line.phases = parse_phases(jl, "phases", where);
    line.z = PhaseIndexedMatrix(line.phases);
    Eigen::MatrixXd seen = Eigen::MatrixXd::Zero(line.phases.size(), line.phases.size());
    for (const Json& je : need(jl, "impedance", where)) {
      Phase r = phase_from_letter(need_string(je, "row", where + ".impedance")[0]);
      Phase c = phase_from_letter(need_string(je, "col", where + ".impedance")[0]);
      if (!line.phases.contains(r) || !line.phases.contains(c))
        throw ValidationError(where + ": impedance entry on a phase the line does not carry");
      const Complex z(need_number(je, "r", where + ".impedance") / z_div,
                      need_number(je, "x", where + ".impedance") / z_div);
      const int ri = line.phases.index_of(r), ci = line.phases.index_of(c);
      if (seen(ri, ci) != 0.0 && line.z.mat()(ri, ci) != z)
        throw ValidationError(where + ": asymmetric or conflicting impedance entries for (" +
                              std::string(1, phase_letter(r)) + "," +
                              std::string(1, phase_letter(c)) + ")");
      line.z.mat()(ri, ci) = z;
      seen(ri, ci) = 1.0;
      if (seen(ci, ri) != 0.0 && line.z.mat()(ci, ri) != z)
        throw ValidationError(where + ": asymmetric impedance matrix");
      line.z.mat()(ci, ri) = z;
      seen(ci, ri) = 1.0;
    }
    lines.push_back(std::move(line));
  }

  ParsedFeeder out;
  try {
    out.network = RadialNetwork::build(std::move(buses), std::move(lines), slack);
  } catch (const Error& e) {
    throw ValidationError(std::string("feeder validation: ") + e.what());
  }

  if (doc.contains("clustering")) {
    const Json& jc = doc["clustering"];
    for (const Json& jst : jc.value("subtrees", Json::array())) {
      Clustering::Subtree st;
      st.root = lookup(need_string(jst, "root", "$.clustering.subtrees"), "$.clustering");
      for (const Json& jm : need(jst, "members", "$.clustering.subtrees"))
        st.members.push_back(lookup(jm.get<std::string>(), "$.clustering"));
      out.clustering.subtrees.push_back(std::move(st));
    }
    for (const Json& jm : jc.value("unclustered", Json::array()))
      out.clustering.unclustered.push_back(lookup(jm.get<std::string>(), "$.clustering"));
  }

  out.scenario = scen;
  out.scenario.load_scale = 1.0;  // already baked into the stored model

  // Canonical per-unit document with defaults materialized.
  Json norm;
  norm["version"] = 1;
  norm["slack"] = {{"v_magnitude_pu", slack.v_magnitude_pu},
                   {"phase_angles_deg", slack.phase_angles_deg}};
  norm["buses"] = Json::array();
  const RadialNetwork& net = out.network;
  for (int b = 0; b < net.bus_count(); ++b) {
    const Bus& bus = net.bus(b);
    Json jb;
    jb["name"] = bus.name;
    jb["phases"] = bus.phases.to_string();
    jb["controllable"] = bus.controllable;
    Json inj = Json::array(), bnd = Json::array();
    for (int k = 0; k < bus.phases.size(); ++k) {
      const char ph = phase_letter(bus.phases.phase_at(k));
      inj.push_back({{"phase", std::string(1, ph)},
                     {"p", bus.injection(k).real()},
                     {"q", bus.injection(k).imag()}});
      bnd.push_back({{"phase", std::string(1, ph)},
                     {"p_min", bus.p_min(k)},
                     {"p_max", bus.p_max(k)},
                     {"q_min", bus.q_min(k)},
                     {"q_max", bus.q_max(k)}});
    }
    jb["injection"] = std::move(inj);
    jb["bounds"] = std::move(bnd);
    norm["buses"].push_back(std::move(jb));
  }
  norm["lines"] = Json::array();
  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.line(li);
    Json jl;
    jl["from"] = net.bus(l.from).name;
    jl["to"] = net.bus(l.to).name;
    jl["phases"] = l.phases.to_string();
    Json imp = Json::array();
    const auto ps = l.phases.phases();
    for (int r = 0; r < int(ps.size()); ++r)
      for (int c = r; c < int(ps.size()); ++c)
        imp.push_back({{"row", std::string(1, phase_letter(ps[r]))},
                       {"col", std::string(1, phase_letter(ps[c]))},
                       {"r", l.z.mat()(r, c).real()},
                       {"x", l.z.mat()(r, c).imag()}});
    jl["impedance"] = std::move(imp);
    norm["lines"].push_back(std::move(jl));
  }
  Json jc;
  jc["subtrees"] = Json::array();
  for (const auto& st : out.clustering.subtrees) {
    Json jst;
    jst["root"] = net.bus(st.root).name;
    Json members = Json::array();
    for (int m : st.members) members.push_back(net.bus(m).name);
    jst["members"] = std::move(members);
    jc["subtrees"].push_back(std::move(jst));
  }
  Json unc = Json::array();
  for (int m : out.clustering.unclustered) unc.push_back(net.bus(m).name);
  jc["unclustered"] = std::move(unc);
  norm["clustering"] = std::move(jc);
  Json jsc;
  jsc["load_scale"] = 1.0;
  jsc["controllable_fraction_floor"] = scen.controllable_fraction_floor;
  if (scen.sigma_u) jsc["sigma_u"] = *scen.sigma_u;
  if (scen.sigma_mu) jsc["sigma_mu"] = *scen.sigma_mu;
  if (scen.epsilon) jsc["epsilon"] = *scen.epsilon;
  if (scen.lambda_stop) jsc["lambda"] = *scen.lambda_stop;
  if (scen.max_iters) jsc["max_iters"] = *scen.max_iters;
  if (scen.v_lower_pu) jsc["v_lower_pu"] = *scen.v_lower_pu;
  if (scen.v_upper_pu) jsc["v_upper_pu"] = *scen.v_upper_pu;
  norm["scenario"] = std::move(jsc);
  out.normalized = norm.dump(2) + "\n";
  return out;
}

ParsedFeeder parse_feeder_file(const std::string& path,
                               std::optional<double> load_scale_override) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open feeder file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_feeder(buf.str(), load_scale_override);
}

std::string serialize_feeder(const ParsedFeeder& feeder) { return feeder.normalized; }

std::string format_g9(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string write_trace_csv(const IterationTrace& trace) {
  std::string out = "iter,objective,min_v,max_v,du_norm,mu_norm,violations,ms\n";
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.iter);
    out += ',';
    out += format_g9(r.objective);
    out += ',';
    out += format_g9(r.min_v);
    out += ',';
    out += format_g9(r.max_v);
    out += ',';
    out += format_g9(r.du_norm);
    out += ',';
    out += format_g9(r.mu_norm);
    out += ',';
    out += std::to_string(r.violations);
    out += ',';
    out += format_g9(r.ms);
    out += '\n';
  }
  return out;
}

std::string write_profile_csv(const IterationTrace& trace) {
  std::string out = "bus,phase,vmag_pu\n";
  for (const ProfileRow& r : trace.profile) {
    out += r.bus;
    out += ',';
    out += r.phase;
    out += ',';
    out += format_g9(r.vmag_pu);
    out += '\n';
  }
  return out;
}

IterationTrace parse_trace_csv(const std::string& text) {
  IterationTrace trace;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "iter,objective,min_v,max_v,du_norm,mu_norm,violations,ms")
    throw SchemaError("trace csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceRecord r;
    int n = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%d,%lf", &r.iter, &r.objective,
                        &r.min_v, &r.max_v, &r.du_norm, &r.mu_norm, &r.violations, &r.ms);
    if (n != 8) throw SchemaError("trace csv: malformed row '" + line + "'");
    trace.records.push_back(r);
  }
  return trace;
}

}  // namespace opf3
