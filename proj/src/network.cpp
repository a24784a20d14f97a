#include "opf3/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "opf3/errors.hpp"

namespace opf3 {

Bus Bus::make(std::string name, PhaseSet phases) {
  Bus b;
  b.name = std::move(name);
  b.phases = phases;
  int n = phases.size();
  b.injection = Eigen::VectorXcd::Zero(n);
  b.p_min = Eigen::VectorXd::Zero(n);
  b.p_max = Eigen::VectorXd::Zero(n);
  b.q_min = Eigen::VectorXd::Zero(n);
  b.q_max = Eigen::VectorXd::Zero(n);
  return b;
}

RadialNetwork RadialNetwork::build(std::vector<Bus> buses, std::vector<Line> lines,
                                   SlackSpec slack) {
  RadialNetwork net;
  net.buses_ = std::move(buses);
  net.lines_ = std::move(lines);
  net.slack_ = slack;

  const int nb = net.bus_count();
  if (nb == 0) throw ValidationError("network has no buses");
  for (int i = 0; i < nb; ++i) {
    const Bus& b = net.buses_[i];
    if (b.phases.empty()) throw PhaseMismatch("bus '" + b.name + "' has an empty phase set");
    if (!net.by_name_.emplace(b.name, i).second)
      throw ValidationError("duplicate bus id '" + b.name + "'");
    int n = b.phases.size();
    if (b.injection.size() != n || b.p_min.size() != n || b.p_max.size() != n ||
        b.q_min.size() != n || b.q_max.size() != n)
      throw ValidationError("bus '" + b.name + "': per-phase arrays do not match phase set");
    for (int k = 0; k < n; ++k) {
      if (b.p_min(k) > b.p_max(k) || b.q_min(k) > b.q_max(k))
        throw ValidationError("bus '" + b.name + "': empty injection bounds");
      if (b.controllable &&
          (b.injection(k).real() < b.p_min(k) - 1e-12 || b.injection(k).real() > b.p_max(k) + 1e-12 ||
           b.injection(k).imag() < b.q_min(k) - 1e-12 || b.injection(k).imag() > b.q_max(k) + 1e-12))
        throw ValidationError("bus '" + b.name + "': nominal injection outside bounds");
    }
  }

  net.parent_line_.assign(nb, -1);
  net.children_.assign(nb, {});
  for (int li = 0; li < net.line_count(); ++li) {
    const Line& l = net.lines_[li];
    if (l.from < 0 || l.from >= nb || l.to < 0 || l.to >= nb)
      throw UnknownBus("line " + std::to_string(li) + " references a missing bus");
    if (l.from == l.to) throw CycleDetected("line " + std::to_string(li) + " is a self-loop");
    if (l.phases.empty()) throw PhaseMismatch("line " + std::to_string(li) + " has no phases");
    if (!l.phases.subset_of(net.buses_[l.from].phases) ||
        !l.phases.subset_of(net.buses_[l.to].phases))
      throw PhaseMismatch("line " + std::to_string(li) + " (" + net.buses_[l.from].name + "->" +
                          net.buses_[l.to].name + "): phases " + l.phases.to_string() +
                          " not carried by both endpoints");
    if (l.z.phases() != l.phases)
      throw PhaseMismatch("line " + std::to_string(li) + ": impedance block does not match phases");
    if (!l.z.is_symmetric(0.0))
      throw ValidationError("line " + std::to_string(li) + ": impedance matrix is not symmetric");
    if (net.parent_line_[l.to] != -1)
      throw CycleDetected("bus '" + net.buses_[l.to].name + "' has two upstream lines");
    net.parent_line_[l.to] = li;
    net.children_[l.from].push_back(li);
  }

  net.root_ = -1;
  for (int i = 0; i < nb; ++i) {
    if (net.parent_line_[i] == -1) {
      if (net.root_ != -1)
        throw DisconnectedBus("buses '" + net.buses_[net.root_].name + "' and '" +
                              net.buses_[i].name + "' both lack an upstream line");
      net.root_ = i;
    }
  }
  if (net.root_ == -1) throw CycleDetected("every bus has an upstream line; graph contains a cycle");

  // Iterative DFS: topological order, depths, ancestor intervals.
  net.depth_.assign(nb, -1);
  net.tin_.assign(nb, 0);
  net.tout_.assign(nb, 0);
  net.topo_.clear();
  net.topo_.reserve(nb);
  int clock = 0;
  std::vector<std::pair<int, size_t>> stack{{net.root_, 0}};
  net.depth_[net.root_] = 0;
  net.tin_[net.root_] = clock++;
  net.topo_.push_back(net.root_);
  while (!stack.empty()) {
    auto& [bus, next] = stack.back();
    if (next < net.children_[bus].size()) {
      const Line& l = net.lines_[net.children_[bus][next++]];
      net.depth_[l.to] = net.depth_[bus] + 1;
      net.tin_[l.to] = clock++;
      net.topo_.push_back(l.to);
      stack.emplace_back(l.to, 0);
    } else {
      net.tout_[bus] = clock++;
      stack.pop_back();
    }
  }
  if (int(net.topo_.size()) != nb) {
    for (int i = 0; i < nb; ++i)
      if (net.depth_[i] == -1)
        throw CycleDetected("bus '" + net.buses_[i].name + "' is unreachable from the root");
  }

  // Energized phases: the root exposes its declared set; every other bus is
  // energized exactly on its parent line's phases.
  net.effective_.assign(nb, PhaseSet());
  net.effective_[net.root_] = net.buses_[net.root_].phases;
  for (int bus : net.topo_) {
    if (bus == net.root_) continue;
    const Line& pl = net.lines_[net.parent_line_[bus]];
    if (!pl.phases.subset_of(net.effective_[pl.from]))
      throw PhaseMismatch("line into bus '" + net.buses_[bus].name + "' carries phases " +
                          pl.phases.to_string() + " not energized upstream (" +
                          net.effective_[pl.from].to_string() + ")");
    net.effective_[bus] = pl.phases;
    for (Phase p : net.buses_[bus].phases.phases()) {
      if (!net.effective_[bus].contains(p) &&
          std::abs(net.buses_[bus].injection_at(p)) != 0.0)
        throw PhaseMismatch("bus '" + net.buses_[bus].name + "': phase " +
                            std::string(1, phase_letter(p)) +
                            " is not energized but has a nonzero injection");
    }
  }

  net.nodes_.clear();
  net.node_index_.assign(nb, {-1, -1, -1});
  for (int bus = 0; bus < nb; ++bus) {
    if (bus == net.root_) continue;
    for (Phase p : net.effective_[bus].phases()) {
      net.node_index_[bus][phase_number(p)] = int(net.nodes_.size());
      net.nodes_.push_back(NodeRef{bus, p});
    }
  }
  return net;
}

int RadialNetwork::bus_index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UnknownBus("unknown bus id '" + name + "'");
  return it->second;
}

void RadialNetwork::check_bus(int bus) const {
  if (bus < 0 || bus >= bus_count())
    throw UnknownBus("bus index " + std::to_string(bus) + " out of range");
}

int RadialNetwork::parent_line(int bus) const {
  check_bus(bus);
  return parent_line_[bus];
}

int RadialNetwork::parent_bus(int bus) const {
  check_bus(bus);
  int pl = parent_line_[bus];
  return pl < 0 ? -1 : lines_[pl].from;
}

Eigen::VectorXcd RadialNetwork::slack_voltage() const {
  const PhaseSet ps = effective_[root_];
  Eigen::VectorXcd v(ps.size());
  int k = 0;
  for (Phase p : ps.phases()) {
    double ang = slack_.phase_angles_deg[phase_number(p)] * std::numbers::pi / 180.0;
    v(k++) = std::polar(slack_.v_magnitude_pu, ang);
  }
  return v;
}

std::vector<int> RadialNetwork::path_to_root(int bus) const {
  check_bus(bus);
  std::vector<int> path;
  for (int b = bus; parent_line_[b] != -1; b = lines_[parent_line_[b]].from)
    path.push_back(parent_line_[b]);
  std::reverse(path.begin(), path.end());
  return path;
}

bool RadialNetwork::on_path(int j, int h) const {
  check_bus(j);
  check_bus(h);
  return tin_[j] <= tin_[h] && tout_[h] <= tout_[j];
}

int RadialNetwork::lca(int a, int b) const {
  check_bus(a);
  check_bus(b);
  while (depth_[a] > depth_[b]) a = lines_[parent_line_[a]].from;
  while (depth_[b] > depth_[a]) b = lines_[parent_line_[b]].from;
  while (a != b) {
    a = lines_[parent_line_[a]].from;
    b = lines_[parent_line_[b]].from;
  }
  return a;
}

std::vector<int> RadialNetwork::common_path(int j, int h) const {
  return path_to_root(lca(j, h));
}

std::vector<int> RadialNetwork::downstream_lines(int xi) const {
  check_bus(xi);
  std::vector<int> out;
  std::vector<int> stack{xi};
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (int li : children_[b]) {
      out.push_back(li);
      stack.push_back(lines_[li].to);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int RadialNetwork::node_index(int bus, Phase p) const {
  check_bus(bus);
  return node_index_[bus][phase_number(p)];
}

int Clustering::subtree_of(int bus) const {
  for (int k = 0; k < int(subtrees.size()); ++k)
    for (int m : subtrees[k].members)
      if (m == bus) return k;
  return -1;
}

ClusterValidation validate_clustering(const RadialNetwork& net, const Clustering& clustering) {
  using Kind = ClusterViolation::Kind;
  ClusterValidation report;
  auto add = [&](Kind kind, std::string detail) {
    report.violations.push_back(ClusterViolation{kind, std::move(detail)});
  };

  const int nb = net.bus_count();
  std::vector<int> owner(nb, -2);  // -2 unseen, -1 unclustered, k subtree index

  for (int k = 0; k < int(clustering.subtrees.size()); ++k) {
    const auto& st = clustering.subtrees[k];
    net.check_bus(st.root);
    bool root_listed = false;
    for (int m : st.members) {
      net.check_bus(m);
      if (m == st.root) root_listed = true;
      if (m == net.root()) add(Kind::SlackClustered, "slack bus listed in subtree " + std::to_string(k));
      if (owner[m] >= 0)
        add(Kind::Overlap, "bus '" + net.bus(m).name + "' belongs to subtrees " +
                               std::to_string(owner[m]) + " and " + std::to_string(k));
      else if (owner[m] == -1)
        add(Kind::NotPartition, "bus '" + net.bus(m).name + "' is both unclustered and in subtree " +
                                    std::to_string(k));
      else
        owner[m] = k;
    }
    if (!root_listed)
      add(Kind::NotConnected,
          "subtree " + std::to_string(k) + " root '" + net.bus(st.root).name + "' is not a member");
  }
  for (int m : clustering.unclustered) {
    net.check_bus(m);
    if (m == net.root()) add(Kind::SlackClustered, "slack bus listed as unclustered");
    if (owner[m] >= 0)
      add(Kind::NotPartition,
          "bus '" + net.bus(m).name + "' is both in subtree " + std::to_string(owner[m]) +
              " and unclustered");
    else if (owner[m] == -1)
      add(Kind::NotPartition, "bus '" + net.bus(m).name + "' listed twice as unclustered");
    else
      owner[m] = -1;
  }
  for (int b = 0; b < nb; ++b) {
    if (b == net.root()) continue;
    if (owner[b] == -2)
      add(Kind::NotPartition, "bus '" + net.bus(b).name + "' is in no subtree and not unclustered");
  }

  // Connectivity: every member's parent must be inside the same subtree,
  // except the subtree root whose parent lies outside by definition.
  for (int k = 0; k < int(clustering.subtrees.size()); ++k) {
    const auto& st = clustering.subtrees[k];
    for (int m : st.members) {
      if (m == st.root || m == net.root()) continue;
      int pb = net.parent_bus(m);
      if (pb < 0 || owner[pb] != k || !net.on_path(st.root, m))
        add(Kind::NotConnected, "bus '" + net.bus(m).name + "' of subtree " + std::to_string(k) +
                                    " is not connected to root '" + net.bus(st.root).name +
                                    "' within the subtree");
    }
  }

  // Assumption 2: root paths of subtree roots and unclustered buses stay in
  // the unclustered set.
  auto path_clear = [&](int bus, const std::string& what) {
    for (int b = net.parent_bus(bus); b >= 0 && b != net.root(); b = net.parent_bus(b)) {
      if (owner[b] >= 0)
        add(Kind::PathCrossesSubtree, what + " '" + net.bus(bus).name +
                                          "': path to the network root passes through bus '" +
                                          net.bus(b).name + "' of subtree " +
                                          std::to_string(owner[b]));
    }
  };
  for (const auto& st : clustering.subtrees) path_clear(st.root, "subtree root");
  for (int m : clustering.unclustered) path_clear(m, "unclustered bus");

  return report;
}

}  // namespace opf3
