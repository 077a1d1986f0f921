#pragma once

#include "pcamm/geometry.hpp"

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pcamm {

using NodeId = std::int64_t;
using LinkId = std::int64_t;

/// Malformed or inconsistent input data (maps to CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced nothing usable (maps to CLI exit code 3).
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Identifies one edge: the 1-based sub-link `index` of link `link`.
struct EdgeRef {
  LinkId link = 0;
  int index = 0;

  auto operator<=>(const EdgeRef&) const = default;
};

struct EdgeRefHash {
  std::size_t operator()(const EdgeRef& e) const noexcept {
    return std::hash<std::int64_t>{}(e.link * 1000003 + e.index);
  }
};

std::string to_string(const EdgeRef& e);

struct Node {
  NodeId id = 0;
  double lon = 0.0;
  double lat = 0.0;
  Point2d pos = Point2d::Zero();
};

struct Edge {
  LinkId link = 0;
  int index = 0;                // 1-based position within the link
  double length = 0.0;          // meters
  double link_offset = 0.0;     // distance from the link's upstream node to the edge start
  Point2d start = Point2d::Zero();
  Point2d end = Point2d::Zero();

  EdgeRef ref() const { return {link, index}; }
};

struct Link {
  LinkId id = 0;
  NodeId from = 0;  // upstream node
  NodeId to = 0;    // downstream node
  double length = 0.0;
  double direction = 0.0;  // degrees counter-clockwise from east, [0, 360)
  std::size_t dense_index = 0;
  std::vector<Edge> edges;

  const Edge& edge(int index) const { return edges.at(static_cast<std::size_t>(index - 1)); }
  int edge_count() const { return static_cast<int>(edges.size()); }
};

struct NodeRecord {
  NodeId id = 0;
  double lon = 0.0;
  double lat = 0.0;
};

struct LinkRecord {
  LinkId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  std::optional<double> length;
  std::optional<double> bearing;
};

/// Uniform grid over edge bounding boxes. Radius queries may return extra
/// edges but never miss one whose distance to the query point is <= radius.
class EdgeGrid {
 public:
  EdgeGrid() = default;
  EdgeGrid(const std::vector<Link>& links, double cell_size);

  std::vector<EdgeRef> query_box(const Point2d& lo, const Point2d& hi) const;
  std::vector<EdgeRef> query_radius(const Point2d& center, double radius) const;

 private:
  using Cell = std::pair<std::int64_t, std::int64_t>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const noexcept {
      return std::hash<std::int64_t>{}(c.first * 73856093 ^ c.second * 19349663);
    }
  };

  Cell cell_of(const Point2d& p) const;

  double cell_size_ = 100.0;
  std::unordered_map<Cell, std::vector<EdgeRef>, CellHash> cells_;
};

/// Laplacian eigenpairs. `eigenvalues` are raw; `normalized` are divided by
/// the largest eigenvalue so they lie in [0, 1].
struct LaplacianSpectrum {
  Eigen::MatrixXd eigenvectors;  // columns are orthonormal eigenvectors
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd normalized;
  double max_eigenvalue = 0.0;
};

/// Directed road network. Immutable after construction.
class RoadNetwork {
 public:
  RoadNetwork(std::vector<Node> nodes, std::vector<Link> links, double split_length, GeoOrigin origin);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  double split_length() const { return split_length_; }
  const GeoOrigin& origin() const { return origin_; }
  std::size_t edge_count() const { return edge_count_; }

  const Node& node(NodeId id) const;
  const Link& link(LinkId id) const;
  const Link& link_at(std::size_t dense_index) const { return links_.at(dense_index); }
  std::size_t link_index(LinkId id) const;
  bool has_link(LinkId id) const { return link_pos_.count(id) > 0; }
  const Edge& edge(const EdgeRef& ref) const { return link(ref.link).edge(ref.index); }

  /// Dense indices of links leaving `node`.
  const std::vector<std::size_t>& out_links(NodeId node) const;

  /// Planar point at `distance` meters from the link's upstream node.
  Point2d point_on_link(const Link& l, double distance) const;
  /// 1-based edge index covering the given distance along the link.
  int edge_index_at(const Link& l, double distance) const;

  const EdgeGrid& spatial_index() const { return grid_; }

  /// |L| x |L| symmetric 0/1 matrix: 1 iff the two links share a node.
  Eigen::MatrixXd adjacency() const;
  /// diag(row sums of A) - A.
  Eigen::MatrixXd laplacian() const;
  /// Computed once, on first use; thread safe.
  const LaplacianSpectrum& spectrum() const;

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  double split_length_;
  GeoOrigin origin_;
  std::size_t edge_count_ = 0;
  std::unordered_map<NodeId, std::size_t> node_pos_;
  std::unordered_map<LinkId, std::size_t> link_pos_;
  std::unordered_map<NodeId, std::vector<std::size_t>> out_links_;
  EdgeGrid grid_;

  struct SpectrumCache {
    std::once_flag once;
    LaplacianSpectrum value;
  };
  std::unique_ptr<SpectrumCache> spectrum_;
};

/// Subdivides a link of the given length into fixed-length edges:
/// ceil(L / split) pieces, all but the last of length `split`. A trailing
/// piece shorter than 1e-3 m is merged into its predecessor.
std::vector<double> split_link_lengths(double length, double split_length);

/// Builds a network from raw tables. Throws InputError on dangling node
/// references, duplicate ids, self loops or non-positive lengths.
RoadNetwork load_network(const std::vector<NodeRecord>& nodes, const std::vector<LinkRecord>& links,
                         double split_length);

/// Symmetric eigendecomposition of the Laplacian with eigenvalues rescaled to [0, 1].
LaplacianSpectrum laplacian_spectrum(const Eigen::MatrixXd& laplacian);

}  // namespace pcamm
