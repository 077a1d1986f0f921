#pragma once

#include "pcamm/geometry.hpp"
#include "pcamm/road_graph.hpp"

#include <string>
#include <vector>

namespace pcamm {

inline constexpr double kMaxProbeSpeed = 70.0;  // m/s sanity bound

struct Probe {
  double t = 0.0;        // unix seconds
  double speed = 0.0;    // m/s
  double bearing = 0.0;  // degrees counter-clockwise from east
  double lon = 0.0;
  double lat = 0.0;
};

/// A vehicle's time-ordered probe sequence for one trip.
struct Trajectory {
  std::string id;
  std::string vehicle;
  std::vector<Probe> probes;
  bool finished = true;
  double interval = 0.0;  // median successive gap, seconds

  const Probe& start() const { return probes.front(); }
  const Probe& end() const { return probes.back(); }
  double t0() const { return probes.front().t; }
  double t_end() const { return probes.back().t; }
};

/// Validates (finite, strictly increasing timestamps, speed bound) and
/// fills in the median probing interval. Throws InputError.
Trajectory make_trajectory(std::string id, std::string vehicle, std::vector<Probe> probes, bool finished = true);

double median_interval(const std::vector<Probe>& probes);

inline Point2d probe_position(const Probe& p, const GeoOrigin& origin) {
  return project_to_plane(p.lon, p.lat, origin);
}

/// Match outcome for one probe. `path` is the inferred path of the segment
/// ending at this probe (empty for the first probe of a matched run).
struct ProbeMatch {
  double t = 0.0;
  bool matched = false;
  EdgeRef edge;
  Point2d point = Point2d::Zero();  // projection on the matched edge (planar)
  std::vector<EdgeRef> path;
};

struct MatchRecord {
  std::string trajectory_id;
  std::string vehicle;
  double t0 = 0.0;
  double t_end = 0.0;
  double lon0 = 0.0, lat0 = 0.0;
  double lon_end = 0.0, lat_end = 0.0;
  std::vector<ProbeMatch> probes;

  double completion_time() const { return t_end; }
};

/// Empty record (every probe unmatched) carrying the trajectory's attributes.
MatchRecord make_record_shell(const Trajectory& traj);

/// True iff consecutive edges follow each other in the directed graph.
bool is_connected_path(const std::vector<EdgeRef>& path, const RoadNetwork& net);

/// Edges traversed by the whole record, with the junction edge shared by
/// consecutive segments counted once.
std::vector<EdgeRef> traversed_edges(const MatchRecord& record);

}  // namespace pcamm
