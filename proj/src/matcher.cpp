#include "pcamm/matcher.hpp"

#include "pcamm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace pcamm {

// ---------------------------------------------------------------------------
// score fusion matcher

std::vector<CandidateEdge> ScoreFusionMatcher::match_first_probe(const Probe& p) const {
  return find_candidate_edges(probe_position(p, net_->origin()), p.bearing, *net_, config_.search_radius);
}

TrajectoryContext ScoreFusionMatcher::trajectory_context(const Trajectory& traj, const MatchContext& ctx) const {
  TrajectoryContext t;
  t.k = config_.fixed_k ? std::clamp(*config_.fixed_k, 1, 200) : candidate_path_count(traj.interval);
  if (ctx.history && config_.mask.c) {
    const auto group = ctx.history->collaborative_group(make_trip_query(traj, net_->origin()), config_.group);
    t.counts = ctx.history->group_counts(group);
  }
  return t;
}

std::vector<CandidatePath> ScoreFusionMatcher::candidate_paths(const Probe& prev, const Probe& cur,
                                                               const std::vector<CandidateEdge>& carried,
                                                               const std::vector<CandidateEdge>& end_candidates,
                                                               int k) const {
  const auto& origin = net_->origin();
  const auto region =
      ellipse_region(probe_position(prev, origin), probe_position(cur, origin), prev.speed, cur.speed, cur.t - prev.t);
  const auto sub = build_subgraph(*net_, region, carried, end_candidates);
  return k_shortest_paths(sub, carried, end_candidates, k);
}

std::vector<ScoreVector> ScoreFusionMatcher::score_candidates(std::span<const CandidatePath> paths, const Probe& prev,
                                                              const Probe& cur, const GroupCounts& counts,
                                                              const Eigen::VectorXd* shares) const {
  std::vector<double> freq(paths.size(), 0.0), share(paths.size(), 0.0);
  std::vector<ScoreVector> out(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out[i].p = p_score(paths[i], prev, cur, *net_, config_.speed_coef);
    freq[i] = usage_frequency(counts, paths[i].edges, config_.neighbor_weight);
    if (shares) share[i] = mean_link_share(paths[i], *shares, *net_);
  }
  const auto c = c_scores(freq);
  const auto a = a_scores(share);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out[i].c = c[i];
    out[i].a = a[i];
  }
  return out;
}

FusionWeights ScoreFusionMatcher::effective_weights(bool have_prediction) const {
  ScoreMask m = config_.mask;
  if (!have_prediction) {
    m.a = false;
    if (!m.p && !m.c) m.p = m.c = true;
  }
  return config_.weights.restricted(m);
}

std::optional<SegmentResult> ScoreFusionMatcher::match_segment(const Probe& prev, const Probe& cur,
                                                               const std::vector<CandidateEdge>& carried,
                                                               const TrajectoryContext& tctx,
                                                               const MatchContext& ctx) const {
  if (carried.empty()) return std::nullopt;
  const auto ends = match_first_probe(cur);
  if (ends.empty()) return std::nullopt;
  auto paths = candidate_paths(prev, cur, carried, ends, tctx.k);
  if (paths.empty()) return std::nullopt;

  std::optional<Eigen::VectorXd> shares;
  if (ctx.traffic && config_.mask.a) shares = ctx.traffic->predict_at(cur.t);
  const auto scores = score_candidates(paths, prev, cur, tctx.counts, shares ? &*shares : nullptr);
  const auto w = effective_weights(shares.has_value());
  std::vector<double> finals(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) finals[i] = final_score(scores[i], w);
  const auto best = *select_path(paths, finals);
  return SegmentResult{std::move(paths[best]), scores[best], finals[best]};
}

MatchRecord ScoreFusionMatcher::match(const Trajectory& traj, const MatchContext& ctx) const {
  auto record = make_record_shell(traj);
  if (traj.probes.empty()) return record;
  const auto tctx = trajectory_context(traj, ctx);
  std::vector<CandidateEdge> carried = match_first_probe(traj.probes[0]);
  bool fresh = true;  // carried set comes from a candidate search, not a matched segment
  for (std::size_t i = 1; i < traj.probes.size(); ++i) {
    const auto& cur = traj.probes[i];
    auto seg = match_segment(traj.probes[i - 1], cur, carried, tctx, ctx);
    if (!seg) {
      carried = match_first_probe(cur);
      fresh = true;
      continue;
    }
    if (fresh) {
      auto& pm = record.probes[i - 1];
      pm.matched = true;
      pm.edge = seg->path.start.edge;
      pm.point = seg->path.start.point;
    }
    auto& pm = record.probes[i];
    pm.matched = true;
    pm.edge = seg->path.end.edge;
    pm.point = seg->path.end.point;
    pm.path = seg->path.edges;
    carried = {seg->path.end};
    fresh = false;
  }
  return record;
}

// ---------------------------------------------------------------------------
// nearest-edge baseline

MatchRecord NearestEdgeMatcher::match(const Trajectory& traj, const MatchContext&) const {
  auto record = make_record_shell(traj);
  const auto whole = SubGraph::whole(*net_);
  std::optional<CandidateEdge> prev;
  for (std::size_t i = 0; i < traj.probes.size(); ++i) {
    const auto& p = traj.probes[i];
    const auto cands = find_candidate_edges(probe_position(p, net_->origin()), p.bearing, *net_, radius_);
    if (cands.empty()) {
      prev.reset();
      continue;
    }
    auto& pm = record.probes[i];
    pm.matched = true;
    pm.edge = cands.front().edge;
    pm.point = cands.front().point;
    if (prev) {
      const auto paths = k_shortest_paths(whole, {*prev}, {cands.front()}, 1);
      if (!paths.empty()) pm.path = paths.front().edges;
    }
    prev = cands.front();
  }
  return record;
}

// ---------------------------------------------------------------------------
// fleet

FleetResult match_fleet(const Matcher& matcher, std::span<const Trajectory> trajectories, HistoryStore& history,
                        TrafficAggregator& traffic, const FleetOptions& options) {
  std::vector<std::size_t> order(trajectories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = trajectories[a];
    const auto& tb = trajectories[b];
    return ta.t0() != tb.t0() ? ta.t0() < tb.t0() : ta.id < tb.id;
  });

  FleetResult result;
  result.records.resize(order.size());
  result.wall_seconds.resize(order.size());
  const int jobs = std::max(1, options.jobs);

  std::size_t begin = 0;
  while (begin < order.size()) {
    const auto epoch = interval_index(trajectories[order[begin]].t0(), options.traffic.interval);
    std::size_t end = begin;
    while (end < order.size() && interval_index(trajectories[order[end]].t0(), options.traffic.interval) == epoch) ++end;

    std::optional<SgmnModel> model;
    if (options.model) model = *options.model;
    const TrafficSnapshot snapshot(traffic, options.traffic, options.predictor, std::move(model));
    const MatchContext ctx{&history, &snapshot};

    std::atomic<std::size_t> next{begin};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++) {
        const auto t0 = std::chrono::steady_clock::now();
        result.records[i] = matcher.match(trajectories[order[i]], ctx);
        result.wall_seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    };
    if (jobs == 1 || end - begin == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (int j = 0; j < std::min<int>(jobs, static_cast<int>(end - begin)); ++j) pool.emplace_back(worker);
    }

    for (std::size_t i = begin; i < end; ++i) {
      if (trajectories[order[i]].finished) history.record_match(result.records[i]);
      traffic.add(result.records[i]);
    }
    begin = end;
  }
  return result;
}

// ---------------------------------------------------------------------------
// output

void write_match_header(std::ostream& out) {
  out << "trajectory_id,probe_idx,timestamp,link_id,edge_idx,matched,path_edges\n";
}

void write_match_rows(std::ostream& out, const MatchRecord& record) {
  for (std::size_t i = 0; i < record.probes.size(); ++i) {
    const auto& pm = record.probes[i];
    out << record.trajectory_id << ',' << i << ',' << format_double(pm.t) << ',';
    if (pm.matched) out << pm.edge.link << ',' << pm.edge.index << ",1,";
    else out << ",,0,";
    out << format_path(pm.path) << '\n';
  }
}

std::vector<MatchRecord> read_match_records(std::istream& in, const std::string& source) {
  const auto table =
      read_csv(in, {"trajectory_id", "probe_idx", "timestamp", "link_id", "edge_idx", "matched", "path_edges"}, source);
  std::vector<MatchRecord> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto ctx = source + ":" + std::to_string(table.line_numbers[r]);
    if (row.size() < 7) throw InputError(ctx + ": expected 7 fields");
    auto [it, inserted] = index.try_emplace(row[0], out.size());
    if (inserted) {
      MatchRecord rec;
      rec.trajectory_id = row[0];
      const auto dash = row[0].rfind('-');
      rec.vehicle = dash == std::string::npos ? row[0] : row[0].substr(0, dash);
      out.push_back(std::move(rec));
    }
    auto& rec = out[it->second];
    const auto idx = parse_int(row[1], ctx);
    if (idx < 0) throw InputError(ctx + ": negative probe index");
    if (static_cast<std::size_t>(idx) >= rec.probes.size()) rec.probes.resize(static_cast<std::size_t>(idx) + 1);
    auto& pm = rec.probes[static_cast<std::size_t>(idx)];
    pm.t = parse_double(row[2], ctx);
    if (row[5] != "0" && row[5] != "1") throw InputError(ctx + ": matched must be 0 or 1");
    pm.matched = row[5] == "1";
    if (pm.matched) pm.edge = {parse_int(row[3], ctx), static_cast<int>(parse_int(row[4], ctx))};
    pm.path = parse_path(row[6]);
  }
  for (auto& rec : out) {
    if (rec.probes.empty()) continue;
    rec.t0 = rec.probes.front().t;
    rec.t_end = rec.probes.back().t;
  }
  return out;
}

void write_geojson(std::ostream& out, std::span<const MatchRecord> records, const RoadNetwork& net) {
  using nlohmann::json;
  auto lonlat = [&](const Point2d& p) {
    const auto g = unproject_from_plane(p, net.origin());
    return json::array({g.x(), g.y()});
  };
  json features = json::array();
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.probes.size(); ++i) {
      const auto& pm = r.probes[i];
      if (!pm.matched) continue;
      if (!pm.path.empty()) {
        json coords = json::array();
        coords.push_back(lonlat(net.edge(pm.path.front()).start));
        for (const auto& e : pm.path) coords.push_back(lonlat(net.edge(e).end));
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                            {"properties", {{"trajectory_id", r.trajectory_id}, {"probe_idx", i}, {"kind", "path"}}}});
      }
      features.push_back({{"type", "Feature"},
                          {"geometry", {{"type", "Point"}, {"coordinates", lonlat(pm.point)}}},
                          {"properties",
                           {{"trajectory_id", r.trajectory_id},
                            {"probe_idx", i},
                            {"kind", "probe"},
                            {"edge", to_string(pm.edge)}}}});
    }
  }
  out << json{{"type", "FeatureCollection"}, {"features", features}}.dump() << '\n';
}

}  // namespace pcamm
