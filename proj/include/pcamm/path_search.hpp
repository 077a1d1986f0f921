#pragma once

#include "pcamm/road_graph.hpp"

#include <compare>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace pcamm {

/// A legal projection of a probe onto an edge.
struct CandidateEdge {
  EdgeRef edge;
  Point2d point = Point2d::Zero();
  double offset = 0.0;         // from the edge start, in [0, edge length]
  double link_position = 0.0;  // from the link's upstream node
  double distance = 0.0;       // probe to projection point
};

/// Edges whose link lies within `radius` of the probe, whose direction is
/// less than 90 degrees from the probe bearing, and whose projected edge has
/// at least one side node within `radius`. At most one candidate per link;
/// sorted by distance, then edge id.
std::vector<CandidateEdge> find_candidate_edges(const Point2d& position, double bearing, const RoadNetwork& net,
                                                double radius);

/// Projects onto a specific link (no filtering); used for ground truth and tests.
CandidateEdge project_onto_link(const Point2d& position, const Link& link, const RoadNetwork& net);

/// Reachability region between consecutive probes: the points whose summed
/// distance to both foci is at most `long_axis`.
struct EllipseRegion {
  Point2d focus_a = Point2d::Zero();
  Point2d focus_b = Point2d::Zero();
  double long_axis = 0.0;

  bool contains(const Point2d& p) const;
  Point2d box_min() const;
  Point2d box_max() const;
};

EllipseRegion ellipse_region(const Point2d& p_prev, const Point2d& p_cur, double v_prev, double v_cur, double dt);

/// Identifies an edge side node: an intersection node, or the split point
/// between edges `index` and `index + 1` of `link`.
struct SideNode {
  bool internal = false;
  std::int64_t id = 0;
  int index = 0;

  auto operator<=>(const SideNode&) const = default;
};

SideNode edge_start_node(const Link& link, int edge_index);
SideNode edge_end_node(const Link& link, int edge_index);

/// Set of edges usable by the path search.
class SubGraph {
 public:
  explicit SubGraph(const RoadNetwork& net) : net_(&net) {}
  static SubGraph whole(const RoadNetwork& net);

  void insert(const EdgeRef& e);
  bool contains(const EdgeRef& e) const { return edges_.count(e) > 0; }
  /// True iff edges first..last (inclusive, 1-based) of the link are all present.
  bool contains_range(LinkId link, int first, int last) const;
  bool contains_link(LinkId link) const;
  std::size_t size() const { return edges_.size(); }
  const RoadNetwork& network() const { return *net_; }
  const std::unordered_set<EdgeRef, EdgeRefHash>& edges() const { return edges_; }

 private:
  const RoadNetwork* net_;
  std::unordered_set<EdgeRef, EdgeRefHash> edges_;
  std::unordered_map<LinkId, int> per_link_;
};

/// Trims the network to the ellipse: an edge is kept when both side nodes
/// are inside, or when a side node inside the region is the from-node of a
/// start candidate or the to-node of an end candidate. Candidate edges are
/// always kept.
SubGraph build_subgraph(const RoadNetwork& net, const EllipseRegion& region,
                        const std::vector<CandidateEdge>& start_candidates,
                        const std::vector<CandidateEdge>& end_candidates);

/// Candidate path from a start projection to an end projection.
struct CandidatePath {
  CandidateEdge start;
  CandidateEdge end;
  std::vector<LinkId> links;  // every link traversed, start and end link included
  std::vector<EdgeRef> edges;
  double length = 0.0;        // travelled distance between the projections

  std::size_t link_count() const { return links.size(); }
  std::size_t edge_count() const { return edges.size(); }
};

/// Total order used for ranking: length, then link count, then edge ids.
std::weak_ordering compare_paths(const CandidatePath& a, const CandidatePath& b);

/// Up to k loopless paths from any start candidate to any end candidate,
/// globally ranked by compare_paths. Loopless means no intersection node is
/// visited twice.
std::vector<CandidatePath> k_shortest_paths(const SubGraph& graph, const std::vector<CandidateEdge>& start_candidates,
                                            const std::vector<CandidateEdge>& end_candidates, int k);

/// K = max(0.3 dt - 18, 6), clamped to [6, 200].
int candidate_path_count(double dt);

}  // namespace pcamm
