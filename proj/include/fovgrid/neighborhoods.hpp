#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fovgrid/cmf.hpp"
#include "fovgrid/sampler.hpp"

namespace fovgrid {

/// Distance on the sensor manifold between two points of one grid, in cortical units.
///
/// Chord form of the isotropic metric ds^2 = dw^2 + (r M(r))^2 dtheta^2 evaluated at
/// the geometric-mean eccentricity: the angular term is M(r_g) * 2 sqrt(r_i r_j) sin(|dtheta| / 2).
/// It reduces to |dw| when either point is the pole and to M * |z_i - z_j| for
/// uniform sampling, and is symmetric bit-for-bit.
inline double manifold_distance(const CmfParams& p, const SensorPoint& a, const SensorPoint& b) {
  const double dw = a.w - b.w;
  double dth = std::abs(a.theta - b.theta);
  if (dth > std::numbers::pi) dth = kTwoPi - dth;
  const double rr = a.r * b.r;
  if (rr == 0.0) return std::abs(dw);
  const double rg = std::sqrt(rr);
  const double lateral = p.k_a / (rg + p.a) * 2.0 * rg * std::sin(dth / 2.0);
  return std::sqrt(dw * dw + lateral * lateral);
}

inline double local_manifold_distance(const SensorGrid& g, std::size_t i, std::size_t j) {
  return manifold_distance(g.params, g.points.at(i), g.points.at(j));
}

struct MetricGraph {
  struct Edge {
    std::uint32_t to;
    double length;
  };
  std::vector<std::vector<Edge>> adjacency;

  std::size_t size() const { return adjacency.size(); }
};

namespace detail {

inline void add_edge(std::vector<std::vector<std::pair<std::uint32_t, double>>>& adj, const SensorGrid& g,
                     std::uint32_t i, std::uint32_t j) {
  if (i == j) return;
  const double d = local_manifold_distance(g, i, j);
  if (!(d > 0.0)) return;
  adj[i].emplace_back(j, d);
  adj[j].emplace_back(i, d);
}

/// Indices on `ring` whose angles are nearest to `theta`, at most `count` of them.
inline std::vector<std::uint32_t> nearest_on_ring(const SensorGrid& g, std::size_t ring, double theta,
                                                  std::size_t count) {
  const std::uint32_t n = g.ring_counts[ring];
  const std::uint32_t start = g.ring_starts[ring];
  if (n <= count) {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), start);
    return all;
  }
  const double step = kTwoPi / n;
  const double t = wrap_angle(theta - g.ring_offsets[ring]) / step;
  const auto base = static_cast<long>(std::floor(t));
  std::vector<std::pair<double, std::uint32_t>> cand;
  const long reach = static_cast<long>(count) + 1;
  for (long o = -reach; o <= reach; ++o) {
    const long idx = ((base + o) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n);
    const auto pi = start + static_cast<std::uint32_t>(idx);
    cand.emplace_back(std::abs(wrap_delta(g.points[pi].theta - theta)), pi);
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end(),
                         [](const auto& x, const auto& y) { return x.second == y.second; }),
             cand.end());
  std::vector<std::uint32_t> out;
  for (const auto& c : cand) {
    if (std::find(out.begin(), out.end(), c.second) == out.end()) out.push_back(c.second);
    if (out.size() == count) break;
  }
  return out;
}

}  // namespace detail

/// Sparse graph for exact-geodesic checks. Radial grids: each point links to two
/// neighbours each way on its ring, the three angularly nearest points on the rings
/// one step in and out, and the two nearest two rings away; the pole links to all of
/// ring 1. Lattice grids: 8-neighbourhood plus knight moves.
inline MetricGraph build_metric_graph(const SensorGrid& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  if (g.layout == GridLayout::lattice) {
    const std::size_t full = g.lattice_side + 2 * g.lattice_pad;
    const int moves[][2] = {{0, 1}, {1, -1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}, {1, -2}, {2, -1}};
    for (std::size_t row = 0; row < full; ++row)
      for (std::size_t col = 0; col < full; ++col)
        for (const auto& m : moves) {
          const long r2 = static_cast<long>(row) + m[0];
          const long c2 = static_cast<long>(col) + m[1];
          if (r2 < 0 || c2 < 0 || r2 >= static_cast<long>(full) || c2 >= static_cast<long>(full)) continue;
          detail::add_edge(adj, g, static_cast<std::uint32_t>(row * full + col),
                           static_cast<std::uint32_t>(static_cast<std::size_t>(r2) * full + static_cast<std::size_t>(c2)));
        }
  } else {
    const std::size_t rings = g.ring_counts.size();
    for (std::size_t ring = 0; ring < rings; ++ring) {
      const std::uint32_t cnt = g.ring_counts[ring];
      const std::uint32_t start = g.ring_starts[ring];
      for (std::uint32_t j = 0; j < cnt; ++j) {
        const std::uint32_t i = start + j;
        for (std::uint32_t step = 1; step <= 2 && step < cnt; ++step)
          detail::add_edge(adj, g, i, start + (j + step) % cnt);
        const double theta = g.points[i].theta;
        if (ring == 0) {
          if (rings > 1)
            for (std::uint32_t q = 0; q < g.ring_counts[1]; ++q) detail::add_edge(adj, g, i, g.ring_starts[1] + q);
          continue;
        }
        for (int dr : {-1, 1}) {
          const long other = static_cast<long>(ring) + dr;
          if (other <= 0 || other >= static_cast<long>(rings)) continue;
          for (auto q : detail::nearest_on_ring(g, static_cast<std::size_t>(other), theta, 3))
            detail::add_edge(adj, g, i, q);
        }
        for (int dr : {-2, 2}) {
          const long other = static_cast<long>(ring) + dr;
          if (other <= 0 || other >= static_cast<long>(rings)) continue;
          for (auto q : detail::nearest_on_ring(g, static_cast<std::size_t>(other), theta, 2))
            detail::add_edge(adj, g, i, q);
        }
      }
    }
  }
  MetricGraph mg;
  mg.adjacency.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = adj[i];
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end(), [](const auto& x, const auto& y) { return x.first == y.first; }),
            a.end());
    mg.adjacency[i].reserve(a.size());
    for (const auto& [to, d] : a) mg.adjacency[i].push_back({to, d});
  }
  return mg;
}

/// Shortest-path distances from the seeds over the graph (Dijkstra).
inline std::vector<double> geodesic_distances(const MetricGraph& graph,
                                              const std::vector<std::pair<std::uint32_t, double>>& seeds) {
  std::vector<double> dist(graph.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const auto& [s, d0] : seeds)
    if (d0 < dist[s]) {
      dist[s] = d0;
      pq.emplace(d0, s);
    }
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& e : graph.adjacency[u]) {
      const double nd = d + e.length;
      if (nd < dist[e.to]) {
        dist[e.to] = nd;
        pq.emplace(nd, e.to);
      }
    }
  }
  return dist;
}

inline std::vector<double> geodesic_distances(const MetricGraph& graph, std::uint32_t source) {
  return geodesic_distances(graph, {{source, 0.0}});
}

/// Number of connected components, used to check graph construction.
inline std::size_t connected_components(const MetricGraph& graph) {
  std::vector<char> seen(graph.size(), 0);
  std::size_t comps = 0;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < graph.size(); ++s) {
    if (seen[s]) continue;
    ++comps;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (const auto& e : graph.adjacency[u])
        if (!seen[e.to]) {
          seen[e.to] = 1;
          stack.push_back(e.to);
        }
    }
  }
  return comps;
}

struct NeighborhoodSet {
  std::string input_grid_id;
  std::string output_grid_id;
  std::size_t n_out = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;
  std::vector<float> dists;
  std::vector<float> thetas;

  std::uint32_t index(std::size_t j, std::size_t i) const { return indices[j * k + i]; }
  float dist(std::size_t j, std::size_t i) const { return dists[j * k + i]; }
  float theta(std::size_t j, std::size_t i) const { return thetas[j * k + i]; }
};

enum class DistanceMode { local, geodesic };

namespace detail {

struct Candidate {
  double d;
  std::uint32_t ring;
  std::uint32_t idx;
  bool operator<(const Candidate& o) const { return std::tie(d, ring, idx) < std::tie(o.d, o.ring, o.idx); }
  bool operator>(const Candidate& o) const { return o < *this; }
};

inline void check_compatible(const SensorGrid& in, const SensorGrid& out, std::size_t k) {
  if (in.params.a != out.params.a || in.params.r_max != out.params.r_max)
    throw std::invalid_argument("input and output grids must share a and r_max");
  if (k == 0 || k > in.size()) throw std::invalid_argument("k must be in [1, input size]");
}

inline void fill_row(NeighborhoodSet& ns, std::size_t j, const std::vector<Candidate>& best, const SensorGrid& in,
                     const SensorPoint& o) {
  for (std::size_t s = 0; s < ns.k; ++s) {
    const auto& c = best[s];
    const auto& p = in.points[c.idx];
    ns.indices[j * ns.k + s] = c.idx;
    ns.dists[j * ns.k + s] = static_cast<float>(c.d);
    const double dx = p.x - o.x, dy = p.y - o.y;
    ns.thetas[j * ns.k + s] = (dx == 0.0 && dy == 0.0) ? 0.0f : static_cast<float>(std::atan2(dy, dx));
  }
}

/// Input point indices ordered by w, the pruning key of the local search.
inline std::vector<std::uint32_t> order_by_w(const SensorGrid& in) {
  std::vector<std::uint32_t> ord(in.size());
  std::iota(ord.begin(), ord.end(), 0u);
  std::stable_sort(ord.begin(), ord.end(), [&](auto x, auto y) { return in.points[x].w < in.points[y].w; });
  return ord;
}

/// Exact k smallest local distances from `o`. Walks outward in w from the query,
/// stopping once |dw| alone exceeds the current k-th best.
inline std::vector<Candidate> local_knn(const SensorGrid& in, const std::vector<std::uint32_t>& ord,
                                        const std::vector<double>& ws, const SensorPoint& o, std::size_t k) {
  std::priority_queue<Candidate> heap;
  auto offer = [&](std::uint32_t idx) {
    const auto& p = in.points[idx];
    Candidate c{manifold_distance(in.params, o, p), p.ring_index, idx};
    if (heap.size() < k) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
  };
  const auto split = static_cast<std::size_t>(std::lower_bound(ws.begin(), ws.end(), o.w) - ws.begin());
  std::size_t up = split;
  std::size_t down = split;
  while (up < ws.size() || down > 0) {
    const double du = up < ws.size() ? ws[up] - o.w : std::numeric_limits<double>::infinity();
    const double dd = down > 0 ? o.w - ws[down - 1] : std::numeric_limits<double>::infinity();
    const double next = std::min(du, dd);
    if (heap.size() == k && next > heap.top().d) break;
    if (du <= dd) {
      offer(ord[up++]);
    } else {
      offer(ord[--down]);
    }
  }
  std::vector<Candidate> best;
  best.reserve(k);
  while (!heap.empty()) {
    best.push_back(heap.top());
    heap.pop();
  }
  std::reverse(best.begin(), best.end());
  return best;
}

/// k nearest by graph geodesic. The query attaches to its 8 local nearest inputs
/// unless it coincides with an input point.
inline std::vector<Candidate> geodesic_knn(const SensorGrid& in, const MetricGraph& graph,
                                           const std::vector<std::uint32_t>& ord, const std::vector<double>& ws,
                                           const SensorPoint& o, std::size_t k) {
  const auto seeds_c = local_knn(in, ord, ws, o, std::min<std::size_t>(8, in.size()));
  std::vector<std::pair<std::uint32_t, double>> seeds;
  if (!seeds_c.empty() && seeds_c.front().d == 0.0) {
    seeds.emplace_back(seeds_c.front().idx, 0.0);
  } else {
    for (const auto& c : seeds_c) seeds.emplace_back(c.idx, c.d);
  }
  // Truncated Dijkstra: settle nodes in (distance, ring, index) order until k are final.
  std::vector<double> dist(graph.size(), std::numeric_limits<double>::infinity());
  std::vector<char> done(graph.size(), 0);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> pq;
  auto push = [&](std::uint32_t v, double d) {
    if (d < dist[v]) {
      dist[v] = d;
      pq.push({d, in.points[v].ring_index, v});
    }
  };
  for (const auto& [s, d0] : seeds) push(s, d0);
  std::vector<Candidate> best;
  while (!pq.empty() && best.size() < k) {
    const auto c = pq.top();
    pq.pop();
    if (done[c.idx] || c.d > dist[c.idx]) continue;
    done[c.idx] = 1;
    best.push_back(c);
    for (const auto& e : graph.adjacency[c.idx]) push(e.to, c.d + e.length);
  }
  if (best.size() < k) throw std::runtime_error("metric graph is disconnected");
  return best;
}

}  // namespace detail

/// k nearest input points around every output unit, ties broken by (ring, index).
inline NeighborhoodSet knn(const SensorGrid& input, const SensorGrid& output, std::size_t k,
                           DistanceMode mode = DistanceMode::local) {
  detail::check_compatible(input, output, k);
  NeighborhoodSet ns;
  ns.input_grid_id = input.id();
  ns.output_grid_id = output.id();
  ns.n_out = output.size();
  ns.k = k;
  ns.indices.resize(ns.n_out * k);
  ns.dists.resize(ns.n_out * k);
  ns.thetas.resize(ns.n_out * k);
  const auto ord = detail::order_by_w(input);
  std::vector<double> ws(ord.size());
  for (std::size_t i = 0; i < ord.size(); ++i) ws[i] = input.points[ord[i]].w;
  MetricGraph graph;
  if (mode == DistanceMode::geodesic) graph = build_metric_graph(input);
  for (std::size_t j = 0; j < ns.n_out; ++j) {
    const auto& o = output.points[j];
    const auto best = mode == DistanceMode::local ? detail::local_knn(input, ord, ws, o, k)
                                                  : detail::geodesic_knn(input, graph, ord, ws, o, k);
    detail::fill_row(ns, j, best, input, o);
  }
  return ns;
}

/// Fraction of non-padding input points that appear in at least one neighbourhood.
inline double coverage_fraction(const SensorGrid& input, const NeighborhoodSet& ns) {
  std::vector<char> hit(input.size(), 0);
  for (auto idx : ns.indices) hit[idx] = 1;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < input.size(); ++i)
    if (!input.points[i].is_padding && hit[i]) ++covered;
  return input.n_active == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(input.n_active);
}

/// Smallest k whose output neighbourhoods jointly cover every non-padding input point.
inline std::size_t min_covering_k(const SensorGrid& input, const SensorGrid& output) {
  auto covers = [&](std::size_t k) { return coverage_fraction(input, knn(input, output, k)) >= 1.0; };
  std::size_t hi = 1;
  while (!covers(hi)) {
    if (hi >= input.size()) throw std::runtime_error("outputs cannot cover the input grid");
    hi = std::min(hi * 2, input.size());
  }
  std::size_t lo = hi / 2;  // lo fails (or is 0)
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (covers(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace fovgrid
