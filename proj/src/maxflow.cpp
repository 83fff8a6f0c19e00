#include "lesionseg/maxflow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace lesionseg {

namespace {

// Residual edge list with paired reverse edges (rev = index ^ 1).
class Dinic {
 public:
  explicit Dinic(int n) : head_(static_cast<std::size_t>(n), -1), level_(static_cast<std::size_t>(n)), iter_(static_cast<std::size_t>(n)) {}

  void add_edge(int u, int v, double cap_uv, double cap_vu) {
    to_.push_back(v);
    cap_.push_back(cap_uv);
    next_.push_back(head_[static_cast<std::size_t>(u)]);
    head_[static_cast<std::size_t>(u)] = static_cast<int>(to_.size()) - 1;
    to_.push_back(u);
    cap_.push_back(cap_vu);
    next_.push_back(head_[static_cast<std::size_t>(v)]);
    head_[static_cast<std::size_t>(v)] = static_cast<int>(to_.size()) - 1;
  }

  double run(int source, int sink) {
    double flow = 0.0;
    while (bfs(source, sink)) {
      iter_ = head_;
      while (true) {
        const double pushed = dfs(source, sink, std::numeric_limits<double>::infinity());
        if (pushed <= 0.0) break;
        flow += pushed;
      }
    }
    return flow;
  }

  // After run(): nodes reachable from source in the residual graph.
  std::vector<bool> reachable(int source) const {
    std::vector<bool> seen(head_.size(), false);
    std::queue<int> queue;
    seen[static_cast<std::size_t>(source)] = true;
    queue.push(source);
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop();
      for (int e = head_[static_cast<std::size_t>(u)]; e != -1; e = next_[static_cast<std::size_t>(e)]) {
        const int v = to_[static_cast<std::size_t>(e)];
        if (cap_[static_cast<std::size_t>(e)] > 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          queue.push(v);
        }
      }
    }
    return seen;
  }

 private:
  bool bfs(int source, int sink) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> queue;
    level_[static_cast<std::size_t>(source)] = 0;
    queue.push(source);
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop();
      for (int e = head_[static_cast<std::size_t>(u)]; e != -1; e = next_[static_cast<std::size_t>(e)]) {
        const int v = to_[static_cast<std::size_t>(e)];
        if (cap_[static_cast<std::size_t>(e)] > 0.0 && level_[static_cast<std::size_t>(v)] < 0) {
          level_[static_cast<std::size_t>(v)] = level_[static_cast<std::size_t>(u)] + 1;
          queue.push(v);
        }
      }
    }
    return level_[static_cast<std::size_t>(sink)] >= 0;
  }

  double dfs(int u, int sink, double limit) {
    if (u == sink) return limit;
    for (int& e = iter_[static_cast<std::size_t>(u)]; e != -1; e = next_[static_cast<std::size_t>(e)]) {
      const int v = to_[static_cast<std::size_t>(e)];
      if (cap_[static_cast<std::size_t>(e)] <= 0.0 || level_[static_cast<std::size_t>(v)] != level_[static_cast<std::size_t>(u)] + 1) continue;
      const double pushed = dfs(v, sink, std::min(limit, cap_[static_cast<std::size_t>(e)]));
      if (pushed > 0.0) {
        cap_[static_cast<std::size_t>(e)] -= pushed;
        cap_[static_cast<std::size_t>(e ^ 1)] += pushed;
        return pushed;
      }
    }
    return 0.0;
  }

  std::vector<int> to_;
  std::vector<double> cap_;
  std::vector<int> next_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

}  // namespace

MaxFlowResult max_flow(const FlowNetwork& g) {
  if (static_cast<int>(g.terminal_caps.size()) != g.n_nodes) throw std::runtime_error("max_flow: terminal_caps size mismatch");
  const int source = g.n_nodes;
  const int sink = g.n_nodes + 1;
  Dinic solver(g.n_nodes + 2);
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto& [source_cap, sink_cap] = g.terminal_caps[static_cast<std::size_t>(i)];
    if (source_cap < 0.0 || sink_cap < 0.0) throw std::runtime_error("max_flow: negative terminal capacity");
    if (source_cap > 0.0) solver.add_edge(source, i, source_cap, 0.0);
    if (sink_cap > 0.0) solver.add_edge(i, sink, sink_cap, 0.0);
  }
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= g.n_nodes || e.v >= g.n_nodes) throw std::runtime_error("max_flow: node index out of range");
    if (e.u == e.v) throw std::runtime_error("max_flow: self-loop");
    if (e.cap_uv < 0.0 || e.cap_vu < 0.0) throw std::runtime_error("max_flow: negative edge capacity");
    solver.add_edge(e.u, e.v, e.cap_uv, e.cap_vu);
  }

  MaxFlowResult result;
  result.flow = solver.run(source, sink);
  const std::vector<bool> reach = solver.reachable(source);
  result.side.resize(static_cast<std::size_t>(g.n_nodes));
  for (int i = 0; i < g.n_nodes; ++i) {
    result.side[static_cast<std::size_t>(i)] = reach[static_cast<std::size_t>(i)] ? CutSide::kSource : CutSide::kSink;
  }
  return result;
}

}  // namespace lesionseg
