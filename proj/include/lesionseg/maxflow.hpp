#pragma once

#include "lesionseg/core.hpp"

namespace lesionseg {

/// Sentinel capacity for seed constraints; far above any reachable energy.
inline constexpr double kHardCap = 1e9;

/// Two-terminal flow network over `n_nodes` pixels. terminal_caps[i] is
/// (capacity source->i, capacity i->sink); edges carry both directions.
struct FlowNetwork {
  struct Edge {
    int u = 0;
    int v = 0;
    double cap_uv = 0.0;
    double cap_vu = 0.0;
  };

  int n_nodes = 0;
  std::vector<std::pair<double, double>> terminal_caps;
  std::vector<Edge> edges;

  explicit FlowNetwork(int n = 0) : n_nodes(n), terminal_caps(static_cast<std::size_t>(n), {0.0, 0.0}) {}

  void add_edge(int u, int v, double cap_uv, double cap_vu) { edges.push_back({u, v, cap_uv, cap_vu}); }
  void add_terminal(int node, double source_cap, double sink_cap) {
    terminal_caps[static_cast<std::size_t>(node)].first += source_cap;
    terminal_caps[static_cast<std::size_t>(node)].second += sink_cap;
  }
};

enum class CutSide : std::uint8_t { kSource, kSink };

struct MaxFlowResult {
  double flow = 0.0;
  std::vector<CutSide> side;  // minimum cut, source side = residual-reachable
};

/// Exact max-flow / min-cut (Dinic). Nodes with hard source capacity land
/// on the source side, hard sink capacity on the sink side.
MaxFlowResult max_flow(const FlowNetwork& g);

}  // namespace lesionseg
