#include "pcamm/history.hpp"

#include "pcamm/io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <stdexcept>

namespace pcamm {

namespace {

constexpr double kSecondsPerDay = 86400.0;

double time_of_day(double t) {
  double r = std::fmod(t, kSecondsPerDay);
  return r < 0.0 ? r + kSecondsPerDay : r;
}

}  // namespace

TemporalMode parse_temporal_mode(const std::string& s) {
  if (s == "absolute") return TemporalMode::kAbsolute;
  if (s == "time-of-day") return TemporalMode::kTimeOfDay;
  throw InputError("unknown temporal mode '" + s + "'");
}

TripQuery make_trip_query(const Trajectory& traj, const GeoOrigin& origin) {
  TripQuery q;
  q.vehicle = traj.vehicle;
  q.start = probe_position(traj.start(), origin);
  q.t0 = traj.t0();
  if (traj.finished) {
    q.end = probe_position(traj.end(), origin);
    q.t_end = traj.t_end();
  }
  return q;
}

double usage_frequency(const GroupCounts& counts, std::span<const EdgeRef> path, double neighbor_weight) {
  if (path.empty()) throw std::invalid_argument("usage_frequency: empty path");
  if (neighbor_weight < 0.0 || neighbor_weight > 1.0) throw std::invalid_argument("usage_frequency: w_c outside [0,1]");
  double ego = 0.0;
  double others = 0.0;
  for (const auto& e : path) {
    if (auto it = counts.ego.find(e); it != counts.ego.end()) ego += it->second;
    if (auto it = counts.neighbors.find(e); it != counts.neighbors.end()) others += it->second;
  }
  const double members = static_cast<double>(counts.group_size) - 1.0;
  return (ego + neighbor_weight * others) /
         ((1.0 + neighbor_weight * members) * static_cast<double>(path.size()));
}

bool HistoryStore::time_close(double a, double b, const GroupParams& params) const {
  if (params.temporal_mode == TemporalMode::kAbsolute) return std::abs(a - b) <= params.temporal_radius;
  const double d = std::abs(time_of_day(a) - time_of_day(b));
  return std::min(d, kSecondsPerDay - d) <= params.temporal_radius;
}

void HistoryStore::record_match(const MatchRecord& record) {
  for (std::size_t i = 0; i < record.probes.size(); ++i) {
    const auto& pm = record.probes[i];
    if (pm.path.empty()) continue;
    if (!pm.matched || pm.path.back() != pm.edge)
      throw std::invalid_argument("record " + record.trajectory_id + ": path does not end at the matched edge");
    if (!is_connected_path(pm.path, *net_))
      throw std::invalid_argument("record " + record.trajectory_id + ": disconnected path at probe " +
                                  std::to_string(i));
    if (i > 0 && record.probes[i - 1].matched && record.probes[i - 1].edge != pm.path.front())
      throw std::invalid_argument("record " + record.trajectory_id + ": path does not start at the previous edge");
  }

  const auto origin = net_->origin();
  std::unique_lock lock(mutex_);
  if (trip_pos_.count(record.trajectory_id))
    throw std::invalid_argument("duplicate record id " + record.trajectory_id);
  auto& counts = counts_[record.trajectory_id];
  for (const auto& e : traversed_edges(record)) ++counts[e];
  trip_pos_[record.trajectory_id] = trips_.size();
  trips_.push_back({record.trajectory_id, record.vehicle, project_to_plane(record.lon0, record.lat0, origin),
                    project_to_plane(record.lon_end, record.lat_end, origin), record.t0, record.t_end});
  records_.push_back(record);
}

CollaborativeGroup HistoryStore::collaborative_group(const TripQuery& trip, const GroupParams& params) const {
  if ((!trip.end || !trip.t_end) && !params.streaming)
    throw std::invalid_argument("collaborative_group: trip has no end probe (streaming mode not enabled)");
  CollaborativeGroup g;
  g.ego_vehicle = trip.vehicle;
  std::shared_lock lock(mutex_);
  for (const auto& t : trips_) {
    if (!(t.t_end < trip.t0)) continue;  // only trips finished before this one starts
    if (t.vehicle == trip.vehicle) {
      g.ego_trips.push_back(t.id);
      continue;
    }
    if ((t.start - trip.start).norm() > params.spatial_radius) continue;
    if (!time_close(t.t0, trip.t0, params)) continue;
    if (trip.end && (t.end - *trip.end).norm() > params.spatial_radius) continue;
    if (trip.t_end && !time_close(t.t_end, *trip.t_end, params)) continue;
    g.neighbors.push_back(t.id);
  }
  std::sort(g.ego_trips.begin(), g.ego_trips.end());
  std::sort(g.neighbors.begin(), g.neighbors.end());
  return g;
}

GroupCounts HistoryStore::group_counts(const CollaborativeGroup& group) const {
  GroupCounts out;
  out.group_size = group.size();
  std::shared_lock lock(mutex_);
  auto add = [&](const std::vector<std::string>& ids, auto& target) {
    for (const auto& id : ids) {
      auto it = counts_.find(id);
      if (it == counts_.end()) continue;
      for (const auto& [e, c] : it->second) target[e] += c;
    }
  };
  add(group.ego_trips, out.ego);
  add(group.neighbors, out.neighbors);
  return out;
}

double HistoryStore::usage_frequency(const CollaborativeGroup& group, std::span<const EdgeRef> path,
                                     double neighbor_weight) const {
  return pcamm::usage_frequency(group_counts(group), path, neighbor_weight);
}

int HistoryStore::edge_count(const std::string& trajectory_id, const EdgeRef& edge) const {
  std::shared_lock lock(mutex_);
  auto it = counts_.find(trajectory_id);
  if (it == counts_.end()) return 0;
  auto jt = it->second.find(edge);
  return jt == it->second.end() ? 0 : jt->second;
}

std::size_t HistoryStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

std::vector<MatchRecord> HistoryStore::records() const {
  std::shared_lock lock(mutex_);
  return records_;
}

// ---------------------------------------------------------------------------
// log persistence

EdgeRef parse_edge_ref(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw InputError("bad edge reference '" + s + "'");
  return {parse_int(parts[0], "edge"), static_cast<int>(parse_int(parts[1], "edge"))};
}

std::string format_path(std::span<const EdgeRef> path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ';';
    out += to_string(path[i]);
  }
  return out;
}

std::vector<EdgeRef> parse_path(const std::string& s) {
  std::vector<EdgeRef> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ';')) out.push_back(parse_edge_ref(item));
  return out;
}

void HistoryStore::write_record(std::ostream& out, const MatchRecord& r) {
  out << "#traj|" << r.trajectory_id << '|' << r.vehicle << '|' << format_double(r.t0) << '|'
      << format_double(r.t_end) << '|' << format_double(r.lon0) << '|' << format_double(r.lat0) << '|'
      << format_double(r.lon_end) << '|' << format_double(r.lat_end) << '\n';
  out << "#times|" << r.trajectory_id << '|';
  for (std::size_t i = 0; i < r.probes.size(); ++i) out << (i ? ";" : "") << format_double(r.probes[i].t);
  out << '\n';
  for (std::size_t i = 0; i < r.probes.size(); ++i) {
    const auto& pm = r.probes[i];
    out << r.trajectory_id << '|' << i << '|' << (pm.matched ? to_string(pm.edge) : "-") << '|'
        << format_path(pm.path) << '\n';
  }
}

void HistoryStore::write_log(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : records_) write_record(out, r);
}

void HistoryStore::load_log(std::istream& in) {
  std::vector<MatchRecord> pending;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  auto record_for = [&](const std::string& id) -> MatchRecord& {
    auto it = index.find(id);
    if (it == index.end()) throw InputError("history log: record for unknown trajectory " + id);
    return pending[it->second];
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto ctx = "history log:" + std::to_string(line_no);
    const auto f = split(line, '|');
    if (f[0] == "#traj") {
      if (f.size() != 9) throw InputError(ctx + ": malformed #traj line");
      MatchRecord r;
      r.trajectory_id = f[1];
      r.vehicle = f[2];
      r.t0 = parse_double(f[3], ctx);
      r.t_end = parse_double(f[4], ctx);
      r.lon0 = parse_double(f[5], ctx);
      r.lat0 = parse_double(f[6], ctx);
      r.lon_end = parse_double(f[7], ctx);
      r.lat_end = parse_double(f[8], ctx);
      index[r.trajectory_id] = pending.size();
      pending.push_back(std::move(r));
    } else if (f[0] == "#times") {
      if (f.size() != 3) throw InputError(ctx + ": malformed #times line");
      auto& r = record_for(f[1]);
      for (const auto& t : split(f[2], ';')) r.probes.push_back(ProbeMatch{parse_double(t, ctx), false, {}, {}, {}});
    } else if (!f[0].empty() && f[0][0] == '#') {
      continue;
    } else {
      if (f.size() != 4) throw InputError(ctx + ": expected 4 fields");
      auto& r = record_for(f[0]);
      const auto idx = static_cast<std::size_t>(parse_int(f[1], ctx));
      if (idx >= r.probes.size()) r.probes.resize(idx + 1);
      auto& pm = r.probes[idx];
      pm.matched = f[2] != "-";
      if (pm.matched) {
        pm.edge = parse_edge_ref(f[2]);
        if (net_->has_link(pm.edge.link)) {
          const auto& e = net_->edge(pm.edge);
          pm.point = 0.5 * (e.start + e.end);
        }
      }
      pm.path = parse_path(f[3]);
    }
  }
  for (const auto& r : pending) record_match(r);
}

}  // namespace pcamm
