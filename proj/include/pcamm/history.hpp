#pragma once

#include "pcamm/road_graph.hpp"
#include "pcamm/trajectory.hpp"

#include <iosfwd>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pcamm {

enum class TemporalMode { kAbsolute, kTimeOfDay };

TemporalMode parse_temporal_mode(const std::string& s);

/// Trip attributes used by collaborative-group queries.
struct TripQuery {
  std::string vehicle;
  Point2d start = Point2d::Zero();
  std::optional<Point2d> end;
  double t0 = 0.0;
  std::optional<double> t_end;
};

TripQuery make_trip_query(const Trajectory& traj, const GeoOrigin& origin);

struct GroupParams {
  double spatial_radius = 300.0;  // r_s, meters
  double temporal_radius = 5.0;   // r_t, seconds
  TemporalMode temporal_mode = TemporalMode::kTimeOfDay;
  bool streaming = false;         // allow queries without an end probe
};

/// Collaborative group of an ego trip. The ego member is represented by
/// every finished earlier trip of the ego vehicle; neighbours are finished
/// trips of other vehicles passing the OD/time predicates.
struct CollaborativeGroup {
  std::string ego_vehicle;
  std::vector<std::string> ego_trips;
  std::vector<std::string> neighbors;

  std::size_t size() const { return 1 + neighbors.size(); }
};

/// Edge counts summed over the ego trips and over the neighbours.
struct GroupCounts {
  std::unordered_map<EdgeRef, double, EdgeRefHash> ego;
  std::unordered_map<EdgeRef, double, EdgeRefHash> neighbors;
  std::size_t group_size = 1;
};

/// Weighted historical usage frequency of a path (edge sequence).
double usage_frequency(const GroupCounts& counts, std::span<const EdgeRef> path, double neighbor_weight);

/// Append-only store of finished match records. Queries may run
/// concurrently; record_match takes an exclusive lock.
class HistoryStore {
 public:
  explicit HistoryStore(const RoadNetwork& net) : net_(&net) {}

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  /// Validates connectivity and adds the record's edge traversals.
  void record_match(const MatchRecord& record);

  CollaborativeGroup collaborative_group(const TripQuery& trip, const GroupParams& params) const;
  GroupCounts group_counts(const CollaborativeGroup& group) const;
  double usage_frequency(const CollaborativeGroup& group, std::span<const EdgeRef> path,
                         double neighbor_weight) const;

  int edge_count(const std::string& trajectory_id, const EdgeRef& edge) const;
  std::size_t size() const;
  std::vector<MatchRecord> records() const;
  const RoadNetwork& network() const { return *net_; }

  /// Newline-delimited log: `#traj|...` and `#times|...` metadata lines
  /// followed by `trajectory_id|probe_idx|link:edge|path_edges` records.
  void write_log(std::ostream& out) const;
  static void write_record(std::ostream& out, const MatchRecord& record);
  void load_log(std::istream& in);

 private:
  struct Trip {
    std::string id;
    std::string vehicle;
    Point2d start;
    Point2d end;
    double t0;
    double t_end;
  };

  bool time_close(double a, double b, const GroupParams& params) const;

  const RoadNetwork* net_;
  mutable std::shared_mutex mutex_;
  std::vector<MatchRecord> records_;
  std::vector<Trip> trips_;
  std::unordered_map<std::string, std::size_t> trip_pos_;
  std::unordered_map<std::string, std::unordered_map<EdgeRef, int, EdgeRefHash>> counts_;
};

/// Parses "link:edge".
EdgeRef parse_edge_ref(const std::string& s);
std::string format_path(std::span<const EdgeRef> path);
std::vector<EdgeRef> parse_path(const std::string& s);

}  // namespace pcamm
