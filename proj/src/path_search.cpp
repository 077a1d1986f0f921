#include "pcamm/path_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>

namespace pcamm {

// ---------------------------------------------------------------------------
// candidate edges

CandidateEdge project_onto_link(const Point2d& position, const Link& link, const RoadNetwork& net) {
  const Point2d& a = net.node(link.from).pos;
  const Point2d& b = net.node(link.to).pos;
  const auto proj = project_point_to_segment(position, a, b);
  const double s = proj.fraction * link.length;
  const int index = net.edge_index_at(link, s);
  const Edge& e = link.edge(index);
  CandidateEdge c;
  c.edge = e.ref();
  c.point = proj.point;
  c.offset = std::clamp(s - e.link_offset, 0.0, e.length);
  c.link_position = e.link_offset + c.offset;
  c.distance = proj.distance;
  return c;
}

std::vector<CandidateEdge> find_candidate_edges(const Point2d& position, double bearing, const RoadNetwork& net,
                                                double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("find_candidate_edges: radius must be positive");
  std::vector<LinkId> links;
  for (const auto& e : net.spatial_index().query_radius(position, radius)) links.push_back(e.link);
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());

  std::vector<CandidateEdge> out;
  for (LinkId id : links) {
    const Link& l = net.link(id);
    if (bearing_inclination(bearing, l.direction) >= 90.0) continue;
    const auto c = project_onto_link(position, l, net);
    if (c.distance > radius) continue;
    const Edge& e = net.edge(c.edge);
    if ((e.start - position).norm() > radius && (e.end - position).norm() > radius) continue;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const CandidateEdge& a, const CandidateEdge& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.edge < b.edge;
  });
  return out;
}

// ---------------------------------------------------------------------------
// ellipse and subgraph

bool EllipseRegion::contains(const Point2d& p) const {
  const double sum = (p - focus_a).norm() + (p - focus_b).norm();
  return sum <= long_axis * (1.0 + 1e-12) + 1e-9;
}

Point2d EllipseRegion::box_min() const {
  const double half = 0.5 * long_axis;
  const Point2d c = 0.5 * (focus_a + focus_b);
  return c - Point2d(half, half);
}

Point2d EllipseRegion::box_max() const {
  const double half = 0.5 * long_axis;
  const Point2d c = 0.5 * (focus_a + focus_b);
  return c + Point2d(half, half);
}

EllipseRegion ellipse_region(const Point2d& p_prev, const Point2d& p_cur, double v_prev, double v_cur, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("ellipse_region: dt must be positive");
  const double reach = std::max(v_prev, v_cur) * dt;
  return {p_prev, p_cur, std::max(reach, 2.0 * (p_cur - p_prev).norm())};
}

SideNode edge_start_node(const Link& link, int edge_index) {
  if (edge_index == 1) return {false, link.from, 0};
  return {true, link.id, edge_index - 1};
}

SideNode edge_end_node(const Link& link, int edge_index) {
  if (edge_index == link.edge_count()) return {false, link.to, 0};
  return {true, link.id, edge_index};
}

SubGraph SubGraph::whole(const RoadNetwork& net) {
  SubGraph g(net);
  for (const auto& l : net.links())
    for (const auto& e : l.edges) g.insert(e.ref());
  return g;
}

void SubGraph::insert(const EdgeRef& e) {
  if (edges_.insert(e).second) ++per_link_[e.link];
}

bool SubGraph::contains_link(LinkId link) const {
  auto it = per_link_.find(link);
  return it != per_link_.end() && it->second == net_->link(link).edge_count();
}

bool SubGraph::contains_range(LinkId link, int first, int last) const {
  if (first > last) return true;
  if (contains_link(link)) return true;
  for (int i = first; i <= last; ++i)
    if (!contains({link, i})) return false;
  return true;
}

SubGraph build_subgraph(const RoadNetwork& net, const EllipseRegion& region,
                        const std::vector<CandidateEdge>& start_candidates,
                        const std::vector<CandidateEdge>& end_candidates) {
  std::set<SideNode> candidate_nodes;
  for (const auto& c : start_candidates) candidate_nodes.insert(edge_start_node(net.link(c.edge.link), c.edge.index));
  for (const auto& c : end_candidates) candidate_nodes.insert(edge_end_node(net.link(c.edge.link), c.edge.index));

  SubGraph g(net);
  for (const auto& ref : net.spatial_index().query_box(region.box_min(), region.box_max())) {
    const Link& l = net.link(ref.link);
    const Edge& e = l.edge(ref.index);
    const bool a_in = region.contains(e.start);
    const bool b_in = region.contains(e.end);
    const bool keep = (a_in && b_in) || (a_in && candidate_nodes.count(edge_start_node(l, ref.index))) ||
                      (b_in && candidate_nodes.count(edge_end_node(l, ref.index)));
    if (keep) g.insert(ref);
  }
  for (const auto& c : start_candidates) g.insert(c.edge);
  for (const auto& c : end_candidates) g.insert(c.edge);
  return g;
}

// ---------------------------------------------------------------------------
// ranking

namespace {

std::weak_ordering compare_lengths(double a, double b) {
  if (a < b) return std::weak_ordering::less;
  if (b < a) return std::weak_ordering::greater;
  return std::weak_ordering::equivalent;
}

}  // namespace

std::weak_ordering compare_paths(const CandidatePath& a, const CandidatePath& b) {
  if (auto c = compare_lengths(a.length, b.length); c != 0) return c;
  if (auto c = a.links.size() <=> b.links.size(); c != 0) return c;
  return std::lexicographical_compare_three_way(a.edges.begin(), a.edges.end(), b.edges.begin(), b.edges.end());
}

int candidate_path_count(double dt) {
  const double k = std::floor(std::max(0.3 * dt - 18.0, 6.0) + 1e-9);
  return static_cast<int>(std::clamp(k, 6.0, 200.0));
}

// ---------------------------------------------------------------------------
// K shortest loopless paths (Yen) over a virtual source/sink graph

namespace {

struct Arc {
  int from = 0;
  int to = 0;
  double weight = 0.0;
  LinkId link = 0;
  int first_edge = 1;
  int last_edge = 1;
  int start_cand = -1;
  int end_cand = -1;
};

class SearchGraph {
 public:
  SearchGraph(const SubGraph& g, const std::vector<CandidateEdge>& starts, const std::vector<CandidateEdge>& ends) {
    const RoadNetwork& net = g.network();
    source_ = add_vertex();
    sink_ = add_vertex();
    // Links are visited in id order so arc ids and tie-breaking are reproducible.
    std::vector<LinkId> ids;
    for (const auto& e : g.edges()) ids.push_back(e.link);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (LinkId id : ids) {
      if (!g.contains_link(id)) continue;
      const Link& l = net.link(id);
      add_arc({vertex(l.from), vertex(l.to), l.length, l.id, 1, l.edge_count(), -1, -1});
    }
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const Link& l = net.link(starts[i].edge.link);
      const int e = starts[i].edge.index;
      if (!g.contains_range(l.id, e + 1, l.edge_count())) continue;
      add_arc({source_, vertex(l.to), l.length - starts[i].link_position, l.id, e, l.edge_count(),
               static_cast<int>(i), -1});
    }
    for (std::size_t j = 0; j < ends.size(); ++j) {
      const Link& l = net.link(ends[j].edge.link);
      const int e = ends[j].edge.index;
      if (!g.contains_range(l.id, 1, e - 1)) continue;
      add_arc({vertex(l.from), sink_, ends[j].link_position, l.id, 1, e, -1, static_cast<int>(j)});
    }
    for (std::size_t i = 0; i < starts.size(); ++i) {
      for (std::size_t j = 0; j < ends.size(); ++j) {
        const auto& s = starts[i];
        const auto& t = ends[j];
        if (s.edge.link != t.edge.link || t.link_position < s.link_position) continue;
        if (!g.contains_range(s.edge.link, s.edge.index + 1, t.edge.index - 1)) continue;
        add_arc({source_, sink_, t.link_position - s.link_position, s.edge.link, s.edge.index, t.edge.index,
                 static_cast<int>(i), static_cast<int>(j)});
      }
    }
  }

  int source() const { return source_; }
  int sink() const { return sink_; }
  std::size_t vertex_count() const { return out_.size(); }
  const Arc& arc(int id) const { return arcs_[static_cast<std::size_t>(id)]; }
  std::size_t arc_count() const { return arcs_.size(); }
  const std::vector<int>& out(int v) const { return out_[static_cast<std::size_t>(v)]; }

  /// Lexicographic comparison of the edge sequences spelled by two arc lists.
  std::weak_ordering compare_edges(const std::vector<int>& a, const std::vector<int>& b) const {
    std::size_t ia = 0, ib = 0;
    int ea = a.empty() ? 0 : arc(a[0]).first_edge;
    int eb = b.empty() ? 0 : arc(b[0]).first_edge;
    while (ia < a.size() && ib < b.size()) {
      const Arc& x = arc(a[ia]);
      const Arc& y = arc(b[ib]);
      const EdgeRef rx{x.link, ea};
      const EdgeRef ry{y.link, eb};
      if (auto c = rx <=> ry; c != 0) return c;
      if (++ea > x.last_edge && ++ia < a.size()) ea = arc(a[ia]).first_edge;
      if (++eb > y.last_edge && ++ib < b.size()) eb = arc(b[ib]).first_edge;
    }
    const bool a_done = ia >= a.size();
    const bool b_done = ib >= b.size();
    if (a_done && b_done) return std::weak_ordering::equivalent;
    return a_done ? std::weak_ordering::less : std::weak_ordering::greater;
  }

  double length(const std::vector<int>& arcs) const {
    double total = 0.0;
    for (int a : arcs) total += arc(a).weight;
    return total;
  }

 private:
  int add_vertex() {
    out_.emplace_back();
    return static_cast<int>(out_.size() - 1);
  }
  int vertex(NodeId n) {
    auto [it, inserted] = vertex_of_.try_emplace(n, 0);
    if (inserted) it->second = add_vertex();
    return it->second;
  }
  void add_arc(const Arc& a) {
    out_[static_cast<std::size_t>(a.from)].push_back(static_cast<int>(arcs_.size()));
    arcs_.push_back(a);
  }

  int source_ = 0;
  int sink_ = 0;
  std::vector<Arc> arcs_;
  std::vector<std::vector<int>> out_;
  std::map<NodeId, int> vertex_of_;
};

/// Dijkstra from `from` to the sink under the key (length, arc count, edge
/// sequence). Returns the arc list of the best path, if any.
std::optional<std::vector<int>> best_path(const SearchGraph& g, int from, const std::vector<char>& banned_arc,
                                          const std::vector<char>& banned_vertex) {
  const std::size_t n = g.vertex_count();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<int> hops(n, 0);
  std::vector<int> parent(n, -1);
  std::vector<char> done(n, 0);

  auto arcs_to = [&](int v) {
    std::vector<int> seq;
    while (v != from) {
      const int a = parent[static_cast<std::size_t>(v)];
      seq.push_back(a);
      v = g.arc(a).from;
    }
    std::reverse(seq.begin(), seq.end());
    return seq;
  };

  using Entry = std::tuple<double, int, int>;  // dist, hops, vertex
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[static_cast<std::size_t>(from)] = 0.0;
  heap.emplace(0.0, 0, from);
  while (!heap.empty()) {
    auto [d, h, u] = heap.top();
    heap.pop();
    const auto uu = static_cast<std::size_t>(u);
    if (done[uu] || d != dist[uu] || h != hops[uu]) continue;
    done[uu] = 1;
    if (u == g.sink()) break;
    for (int a : g.out(u)) {
      if (banned_arc[static_cast<std::size_t>(a)]) continue;
      const Arc& arc = g.arc(a);
      const auto v = static_cast<std::size_t>(arc.to);
      if (banned_vertex[v] || done[v]) continue;
      const double nd = d + arc.weight;
      const int nh = h + 1;
      bool better = nd < dist[v] || (nd == dist[v] && nh < hops[v]);
      if (!better && nd == dist[v] && nh == hops[v]) {
        auto candidate = arcs_to(u);
        candidate.push_back(a);
        better = g.compare_edges(candidate, arcs_to(arc.to)) < 0;
      }
      if (better) {
        dist[v] = nd;
        hops[v] = nh;
        parent[v] = a;
        heap.emplace(nd, nh, arc.to);
      }
    }
  }
  if (!done[static_cast<std::size_t>(g.sink())]) return std::nullopt;
  return arcs_to(g.sink());
}

struct RankedArcs {
  std::vector<int> arcs;
  double length = 0.0;
};

}  // namespace

std::vector<CandidatePath> k_shortest_paths(const SubGraph& graph, const std::vector<CandidateEdge>& start_candidates,
                                            const std::vector<CandidateEdge>& end_candidates, int k) {
  if (k < 1) throw std::invalid_argument("k_shortest_paths: k must be >= 1");
  std::vector<CandidatePath> result;
  if (start_candidates.empty() || end_candidates.empty()) return result;

  const SearchGraph g(graph, start_candidates, end_candidates);
  auto less = [&](const RankedArcs& a, const RankedArcs& b) {
    if (a.length != b.length) return a.length < b.length;
    if (a.arcs.size() != b.arcs.size()) return a.arcs.size() < b.arcs.size();
    return g.compare_edges(a.arcs, b.arcs) < 0;
  };
  auto vertices_of = [&](const std::vector<int>& arcs) {
    std::vector<int> vs{g.source()};
    for (int a : arcs) vs.push_back(g.arc(a).to);
    return vs;
  };

  std::vector<char> banned_arc(g.arc_count(), 0);
  std::vector<char> banned_vertex(g.vertex_count(), 0);
  auto first = best_path(g, g.source(), banned_arc, banned_vertex);
  if (!first) return result;

  std::vector<RankedArcs> accepted{{*first, g.length(*first)}};
  std::vector<RankedArcs> pool;
  std::set<std::vector<int>> seen{*first};

  while (static_cast<int>(accepted.size()) < k) {
    const std::vector<int> prev = accepted.back().arcs;
    const auto prev_vertices = vertices_of(prev);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const int spur = prev_vertices[i];
      std::fill(banned_arc.begin(), banned_arc.end(), 0);
      std::fill(banned_vertex.begin(), banned_vertex.end(), 0);
      for (const auto& p : accepted)
        if (p.arcs.size() > i && std::equal(prev.begin(), prev.begin() + static_cast<std::ptrdiff_t>(i), p.arcs.begin()))
          banned_arc[static_cast<std::size_t>(p.arcs[i])] = 1;
      for (std::size_t r = 0; r < i; ++r) banned_vertex[static_cast<std::size_t>(prev_vertices[r])] = 1;

      auto spur_path = best_path(g, spur, banned_arc, banned_vertex);
      if (!spur_path) continue;
      std::vector<int> total(prev.begin(), prev.begin() + static_cast<std::ptrdiff_t>(i));
      total.insert(total.end(), spur_path->begin(), spur_path->end());
      if (!seen.insert(total).second) continue;
      const double len = g.length(total);
      pool.push_back({std::move(total), len});
    }
    if (pool.empty()) break;
    auto best = std::min_element(pool.begin(), pool.end(), less);
    accepted.push_back(std::move(*best));
    pool.erase(best);
  }

  std::sort(accepted.begin(), accepted.end(), less);
  for (const auto& r : accepted) {
    CandidatePath p;
    p.length = r.length;
    for (int a : r.arcs) {
      const Arc& arc = g.arc(a);
      if (arc.start_cand >= 0) p.start = start_candidates[static_cast<std::size_t>(arc.start_cand)];
      if (arc.end_cand >= 0) p.end = end_candidates[static_cast<std::size_t>(arc.end_cand)];
      p.links.push_back(arc.link);
      for (int e = arc.first_edge; e <= arc.last_edge; ++e) p.edges.push_back({arc.link, e});
    }
    result.push_back(std::move(p));
  }
  return result;
}

}  // namespace pcamm
