#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "opf3/phase.hpp"

namespace opf3 {

struct SlackSpec {
  double v_magnitude_pu = 1.05;
  std::array<double, 3> phase_angles_deg = {0.0, -120.0, 120.0};
};

// Per-phase quantities are aligned with the declared phase set order.
struct Bus {
  std::string name;
  PhaseSet phases;
  Eigen::VectorXcd injection;  // nominal s = p + iq, p.u., negative for load
  Eigen::VectorXd p_min, p_max, q_min, q_max;
  bool controllable = false;

  static Bus make(std::string name, PhaseSet phases);
  Complex injection_at(Phase p) const { return injection(phases.index_of(p)); }
};

struct Line {
  int from = -1;  // upstream bus index
  int to = -1;    // downstream bus index
  PhaseSet phases;
  PhaseIndexedMatrix z;  // series impedance, p.u., symmetric
};

// (bus, phase) coordinate of the stacked voltage/dual vectors. The slack bus
// carries no node coordinates.
struct NodeRef {
  int bus;
  Phase phase;
};

// Rooted radial network. Immutable once built; all queries are pure.
//
// Build-time validation enforces the tree structure (unique upstream line per
// bus, no cycles, full connectivity) and phase consistency: a line's phases
// must be a subset of both endpoints' declared phases and of the upstream
// bus's energized phases. The energized ("effective") phase set of a non-root
// bus therefore equals its parent line's phase set, which never grows moving
// downstream. Declared bus phases that are not energized must carry zero
// nominal injection; they take no part in power flow or optimization.
class RadialNetwork {
 public:
  // An empty network; only useful as an assignment target.
  RadialNetwork() = default;

  static RadialNetwork build(std::vector<Bus> buses, std::vector<Line> lines, SlackSpec slack);

  int bus_count() const { return static_cast<int>(buses_.size()); }
  int line_count() const { return static_cast<int>(lines_.size()); }
  const Bus& bus(int i) const { return buses_.at(i); }
  const Line& line(int i) const { return lines_.at(i); }
  const SlackSpec& slack() const { return slack_; }
  int root() const { return root_; }

  int bus_index(const std::string& name) const;  // throws UnknownBus
  bool has_bus(const std::string& name) const { return by_name_.count(name) > 0; }

  int parent_line(int bus) const;  // -1 for the root
  int parent_bus(int bus) const;   // -1 for the root
  const std::vector<int>& children_lines(int bus) const { return children_.at(bus); }
  const std::vector<int>& topo_order() const { return topo_; }  // root first
  int depth(int bus) const { return depth_.at(bus); }

  PhaseSet effective_phases(int bus) const { return effective_.at(bus); }
  // Complex slack voltage on the root's phases.
  Eigen::VectorXcd slack_voltage() const;

  // Lines of the unique root->bus path, in root-to-leaf order.
  std::vector<int> path_to_root(int bus) const;
  // Common part of the two root paths, in root-to-leaf order.
  std::vector<int> common_path(int j, int h) const;
  // Lines strictly inside the subtree rooted at xi (parent line excluded).
  std::vector<int> downstream_lines(int xi) const;
  // Indicator 1(j in P_h): j lies on the path from the root to h.
  bool on_path(int j, int h) const;
  int lca(int a, int b) const;

  void check_bus(int bus) const;

  // Node coordinates: all (non-root bus, energized phase) pairs ordered by
  // bus index then phase. This ordering fixes every stacked vector layout.
  const std::vector<NodeRef>& nodes() const { return nodes_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int node_index(int bus, Phase p) const;  // -1 when absent

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  SlackSpec slack_;
  int root_ = -1;
  std::unordered_map<std::string, int> by_name_;
  std::vector<int> parent_line_;
  std::vector<std::vector<int>> children_;
  std::vector<int> topo_;
  std::vector<int> depth_;
  std::vector<int> tin_, tout_;  // DFS intervals for O(1) ancestor tests
  std::vector<PhaseSet> effective_;
  std::vector<NodeRef> nodes_;
  std::vector<std::array<int, 3>> node_index_;
};

struct Clustering {
  struct Subtree {
    int root = -1;
    std::vector<int> members;
  };
  std::vector<Subtree> subtrees;
  std::vector<int> unclustered;

  int subtree_of(int bus) const;  // -1 if unclustered/absent
};

struct ClusterViolation {
  enum class Kind {
    Overlap,            // a bus appears in two subtrees (Assumption 1)
    NotPartition,       // a bus missing from, or duplicated across, the partition
    PathCrossesSubtree, // root path of a subtree root / unclustered bus enters a subtree (Assumption 2)
    NotConnected,       // subtree members do not form a connected tree under the stated root
    SlackClustered,     // the slack bus was listed
  };
  Kind kind;
  std::string detail;
};

struct ClusterValidation {
  std::vector<ClusterViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Checks Assumptions 1-2 and the partition/connectivity invariants.
// Violations are report entries, not faults; unknown bus references do throw.
ClusterValidation validate_clustering(const RadialNetwork& net, const Clustering& clustering);

}  // namespace opf3
