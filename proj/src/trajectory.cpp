#include "pcamm/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace pcamm {

double median_interval(const std::vector<Probe>& probes) {
  if (probes.size() < 2) return 0.0;
  std::vector<double> gaps;
  gaps.reserve(probes.size() - 1);
  for (std::size_t i = 1; i < probes.size(); ++i) gaps.push_back(probes[i].t - probes[i - 1].t);
  std::sort(gaps.begin(), gaps.end());
  const std::size_t mid = gaps.size() / 2;
  return gaps.size() % 2 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
}

Trajectory make_trajectory(std::string id, std::string vehicle, std::vector<Probe> probes, bool finished) {
  if (probes.empty()) throw InputError("trajectory " + id + " has no probes");
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    if (!std::isfinite(p.t) || !std::isfinite(p.lon) || !std::isfinite(p.lat) || !std::isfinite(p.speed) ||
        !std::isfinite(p.bearing))
      throw InputError("trajectory " + id + " has a non-finite probe");
    if (std::abs(p.lon) > 180.0 || std::abs(p.lat) > 90.0)
      throw InputError("trajectory " + id + " has out-of-range coordinates");
    if (p.speed < 0.0 || p.speed >= kMaxProbeSpeed) throw InputError("trajectory " + id + " has an implausible speed");
    if (i > 0 && !(p.t > probes[i - 1].t)) throw InputError("trajectory " + id + " timestamps not increasing");
  }
  for (auto& p : probes) p.bearing = normalize_degrees(p.bearing);
  Trajectory t;
  t.id = std::move(id);
  t.vehicle = std::move(vehicle);
  t.interval = median_interval(probes);
  t.probes = std::move(probes);
  t.finished = finished;
  return t;
}

MatchRecord make_record_shell(const Trajectory& traj) {
  MatchRecord r;
  r.trajectory_id = traj.id;
  r.vehicle = traj.vehicle;
  r.t0 = traj.t0();
  r.t_end = traj.t_end();
  r.lon0 = traj.start().lon;
  r.lat0 = traj.start().lat;
  r.lon_end = traj.end().lon;
  r.lat_end = traj.end().lat;
  r.probes.resize(traj.probes.size());
  for (std::size_t i = 0; i < traj.probes.size(); ++i) r.probes[i].t = traj.probes[i].t;
  return r;
}

bool is_connected_path(const std::vector<EdgeRef>& path, const RoadNetwork& net) {
  for (const auto& e : path) {
    if (!net.has_link(e.link)) return false;
    const auto& l = net.link(e.link);
    if (e.index < 1 || e.index > l.edge_count()) return false;
  }
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto& a = path[i - 1];
    const auto& b = path[i];
    if (a.link == b.link && b.index == a.index + 1) continue;
    const auto& la = net.link(a.link);
    const auto& lb = net.link(b.link);
    if (a.index == la.edge_count() && b.index == 1 && la.to == lb.from) continue;
    return false;
  }
  return true;
}

std::vector<EdgeRef> traversed_edges(const MatchRecord& record) {
  std::vector<EdgeRef> out;
  for (std::size_t i = 0; i < record.probes.size(); ++i) {
    const auto& path = record.probes[i].path;
    if (path.empty()) continue;
    auto first = path.begin();
    if (i > 0 && !record.probes[i - 1].path.empty() && record.probes[i - 1].path.back() == *first) ++first;
    out.insert(out.end(), first, path.end());
  }
  return out;
}

}  // namespace pcamm
