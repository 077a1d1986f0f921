#include "pcamm/road_graph.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace pcamm {

std::string to_string(const EdgeRef& e) { return std::to_string(e.link) + ":" + std::to_string(e.index); }

// ---------------------------------------------------------------------------
// EdgeGrid

EdgeGrid::EdgeGrid(const std::vector<Link>& links, double cell_size) : cell_size_(cell_size) {
  for (const auto& l : links) {
    for (const auto& e : l.edges) {
      const Point2d lo = e.start.cwiseMin(e.end);
      const Point2d hi = e.start.cwiseMax(e.end);
      const Cell c0 = cell_of(lo);
      const Cell c1 = cell_of(hi);
      for (auto cx = c0.first; cx <= c1.first; ++cx)
        for (auto cy = c0.second; cy <= c1.second; ++cy) cells_[{cx, cy}].push_back(e.ref());
    }
  }
}

EdgeGrid::Cell EdgeGrid::cell_of(const Point2d& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_size_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_size_))};
}

std::vector<EdgeRef> EdgeGrid::query_box(const Point2d& lo, const Point2d& hi) const {
  const Cell c0 = cell_of(lo);
  const Cell c1 = cell_of(hi);
  std::vector<EdgeRef> out;
  for (auto cx = c0.first; cx <= c1.first; ++cx) {
    for (auto cy = c0.second; cy <= c1.second; ++cy) {
      auto it = cells_.find({cx, cy});
      if (it == cells_.end()) continue;
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<EdgeRef> EdgeGrid::query_radius(const Point2d& center, double radius) const {
  const Point2d r(radius, radius);
  return query_box(center - r, center + r);
}

// ---------------------------------------------------------------------------
// RoadNetwork

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Link> links, double split_length, GeoOrigin origin)
    : nodes_(std::move(nodes)),
      links_(std::move(links)),
      split_length_(split_length),
      origin_(origin),
      spectrum_(std::make_unique<SpectrumCache>()) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) node_pos_[nodes_[i].id] = i;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    links_[i].dense_index = i;
    link_pos_[links_[i].id] = i;
    out_links_[links_[i].from].push_back(i);
    edge_count_ += links_[i].edges.size();
  }
  grid_ = EdgeGrid(links_, std::max(split_length_, 25.0));
}

const Node& RoadNetwork::node(NodeId id) const {
  auto it = node_pos_.find(id);
  if (it == node_pos_.end()) throw std::out_of_range("unknown node " + std::to_string(id));
  return nodes_[it->second];
}

const Link& RoadNetwork::link(LinkId id) const { return links_[link_index(id)]; }

std::size_t RoadNetwork::link_index(LinkId id) const {
  auto it = link_pos_.find(id);
  if (it == link_pos_.end()) throw std::out_of_range("unknown link " + std::to_string(id));
  return it->second;
}

const std::vector<std::size_t>& RoadNetwork::out_links(NodeId node) const {
  static const std::vector<std::size_t> kNone;
  auto it = out_links_.find(node);
  return it == out_links_.end() ? kNone : it->second;
}

Point2d RoadNetwork::point_on_link(const Link& l, double distance) const {
  const Point2d& a = node(l.from).pos;
  const Point2d& b = node(l.to).pos;
  const double t = std::clamp(distance / l.length, 0.0, 1.0);
  return a + t * (b - a);
}

int RoadNetwork::edge_index_at(const Link& l, double distance) const {
  // Edges are contiguous; the last edge may be longer than the split length after merging.
  for (const auto& e : l.edges)
    if (distance < e.link_offset + e.length) return e.index;
  return l.edge_count();
}

Eigen::MatrixXd RoadNetwork::adjacency() const {
  const auto n = static_cast<Eigen::Index>(links_.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  std::unordered_map<NodeId, std::vector<Eigen::Index>> incident;
  for (const auto& l : links_) {
    const auto i = static_cast<Eigen::Index>(l.dense_index);
    incident[l.from].push_back(i);
    incident[l.to].push_back(i);
  }
  for (const auto& [node, ls] : incident)
    for (auto i : ls)
      for (auto j : ls)
        if (i != j) a(i, j) = 1.0;
  return a;
}

Eigen::MatrixXd RoadNetwork::laplacian() const {
  const Eigen::MatrixXd a = adjacency();
  Eigen::MatrixXd l = -a;
  l.diagonal() += a.rowwise().sum();
  return l;
}

const LaplacianSpectrum& RoadNetwork::spectrum() const {
  std::call_once(spectrum_->once, [this] { spectrum_->value = laplacian_spectrum(laplacian()); });
  return spectrum_->value;
}

// ---------------------------------------------------------------------------

std::vector<double> split_link_lengths(double length, double split_length) {
  if (!(split_length > 0.0)) throw InputError("split length must be positive");
  if (!(length > 0.0)) throw InputError("link length must be positive");
  const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(length / split_length)));
  std::vector<double> out(m, split_length);
  out.back() = length - static_cast<double>(m - 1) * split_length;
  if (out.size() > 1 && out.back() < 1e-3) {
    const double tail = out.back();
    out.pop_back();
    out.back() += tail;
  }
  return out;
}

RoadNetwork load_network(const std::vector<NodeRecord>& node_rows, const std::vector<LinkRecord>& link_rows,
                         double split_length) {
  if (!(split_length > 0.0)) throw InputError("split length must be positive");
  if (node_rows.empty()) throw InputError("network has no nodes");

  GeoOrigin origin;
  for (const auto& n : node_rows) {
    origin.lon += n.lon;
    origin.lat += n.lat;
  }
  origin.lon /= static_cast<double>(node_rows.size());
  origin.lat /= static_cast<double>(node_rows.size());

  std::vector<Node> nodes;
  std::unordered_map<NodeId, Point2d> pos;
  nodes.reserve(node_rows.size());
  for (const auto& r : node_rows) {
    if (std::abs(r.lon) > 180.0 || std::abs(r.lat) > 90.0)
      throw InputError("node " + std::to_string(r.id) + " has out-of-range coordinates");
    Node n{r.id, r.lon, r.lat, project_to_plane(r.lon, r.lat, origin)};
    if (!pos.emplace(n.id, n.pos).second) throw InputError("duplicate node id " + std::to_string(r.id));
    nodes.push_back(n);
  }

  std::vector<Link> links;
  std::unordered_set<LinkId> seen;
  links.reserve(link_rows.size());
  for (const auto& r : link_rows) {
    if (!seen.insert(r.id).second) throw InputError("duplicate link id " + std::to_string(r.id));
    auto a = pos.find(r.from);
    auto b = pos.find(r.to);
    if (a == pos.end() || b == pos.end())
      throw InputError("link " + std::to_string(r.id) + " references a missing node");
    if (r.from == r.to) throw InputError("link " + std::to_string(r.id) + " is a self loop");

    Link l;
    l.id = r.id;
    l.from = r.from;
    l.to = r.to;
    const double geometric = (b->second - a->second).norm();
    l.length = r.length.value_or(geometric);
    if (!(l.length > 0.0)) throw InputError("link " + std::to_string(r.id) + " has non-positive length");
    l.direction = r.bearing ? normalize_degrees(*r.bearing) : direction_degrees(a->second, b->second);

    double offset = 0.0;
    int index = 1;
    for (double piece : split_link_lengths(l.length, split_length)) {
      Edge e;
      e.link = l.id;
      e.index = index++;
      e.length = piece;
      e.link_offset = offset;
      const double t0 = offset / l.length;
      const double t1 = std::min(1.0, (offset + piece) / l.length);
      e.start = a->second + t0 * (b->second - a->second);
      e.end = a->second + t1 * (b->second - a->second);
      offset += piece;
      l.edges.push_back(e);
    }
    links.push_back(std::move(l));
  }
  return RoadNetwork(std::move(nodes), std::move(links), split_length, origin);
}

LaplacianSpectrum laplacian_spectrum(const Eigen::MatrixXd& laplacian) {
  LaplacianSpectrum out;
  if (laplacian.rows() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Laplacian eigendecomposition failed");
  out.eigenvectors = solver.eigenvectors();
  out.eigenvalues = solver.eigenvalues().cwiseMax(0.0);  // clamp round-off below zero
  out.max_eigenvalue = out.eigenvalues.maxCoeff();
  out.normalized = out.max_eigenvalue > 0.0 ? Eigen::VectorXd(out.eigenvalues / out.max_eigenvalue)
                                            : Eigen::VectorXd(out.eigenvalues);
  return out;
}

}  // namespace pcamm
