#pragma once

#include "pcamm/road_graph.hpp"
#include "pcamm/trajectory.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pcamm::test {

inline constexpr GeoOrigin kBase{118.08, 24.48};

/// Builds small networks from planar coordinates around kBase.
class NetBuilder {
 public:
  NodeId node(double x, double y) {
    const auto ll = unproject_from_plane(Point2d(x, y), kBase);
    nodes_.push_back({next_node_, ll.x(), ll.y()});
    return next_node_++;
  }

  LinkId link(NodeId from, NodeId to, std::optional<double> length = std::nullopt,
              std::optional<double> bearing = std::nullopt) {
    links_.push_back({next_link_, from, to, length, bearing});
    return next_link_++;
  }

  /// Two links, a->b then b->a; returns the first id.
  LinkId both_ways(NodeId a, NodeId b, std::optional<double> length = std::nullopt) {
    const LinkId id = link(a, b, length);
    link(b, a, length);
    return id;
  }

  RoadNetwork build(double split = 50.0) const { return load_network(nodes_, links_, split); }

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<LinkRecord>& links() const { return links_; }

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<LinkRecord> links_;
  NodeId next_node_ = 1;
  LinkId next_link_ = 1;
};

/// Square grid of two-way links with explicit lengths; node (r, c) has id
/// r * cols + c + 1 and sits at (c * spacing, r * spacing).
inline NetBuilder grid_builder(int rows, int cols, double spacing) {
  NetBuilder b;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) b.node(c * spacing, r * spacing);
  auto id = [&](int r, int c) { return static_cast<NodeId>(r * cols + c + 1); };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) b.both_ways(id(r, c), id(r, c + 1), spacing);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r + 1 < rows; ++r) b.both_ways(id(r, c), id(r + 1, c), spacing);
  return b;
}

/// Probe at a planar point of the network frame.
inline Probe probe_at(const RoadNetwork& net, const Point2d& p, double t, double speed, double bearing) {
  const auto ll = unproject_from_plane(p, net.origin());
  Probe q;
  q.t = t;
  q.speed = speed;
  q.bearing = bearing;
  q.lon = ll.x();
  q.lat = ll.y();
  return q;
}

/// Probe on a link at the given distance from its upstream node, heading along it.
inline Probe probe_on_link(const RoadNetwork& net, LinkId link, double distance, double t, double speed) {
  const Link& l = net.link(link);
  return probe_at(net, net.point_on_link(l, distance), t, speed, l.direction);
}

inline std::vector<EdgeRef> link_edges(const RoadNetwork& net, LinkId link, int first = 1, int last = -1) {
  const Link& l = net.link(link);
  if (last < 0) last = l.edge_count();
  std::vector<EdgeRef> out;
  for (int e = first; e <= last; ++e) out.push_back({link, e});
  return out;
}

}  // namespace pcamm::test
