#include "pcamm/synthetic.hpp"

#include "pcamm/path_search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace pcamm {

namespace {

NodeId grid_node(const GridSpec& g, int r, int c) { return static_cast<NodeId>(r) * g.cols + c + 1; }

std::pair<int, int> grid_cell(const GridSpec& g, NodeId id) {
  const auto k = static_cast<int>(id - 1);
  return {k / g.cols, k % g.cols};
}

/// Cheapest node-to-node route under per-link costs; empty if unreachable.
std::vector<std::size_t> cheapest_route(const RoadNetwork& net, NodeId from, NodeId to,
                                        const std::vector<double>& cost) {
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  std::unordered_map<NodeId, double> dist;
  std::unordered_map<NodeId, std::size_t> via;
  dist[from] = 0.0;
  queue.push({0.0, from});
  while (!queue.empty()) {
    const auto [d, n] = queue.top();
    queue.pop();
    if (d > dist[n]) continue;
    if (n == to) break;
    for (auto li : net.out_links(n)) {
      const auto& l = net.link_at(li);
      const double nd = d + cost[li];
      auto it = dist.find(l.to);
      if (it == dist.end() || nd < it->second) {
        dist[l.to] = nd;
        via[l.to] = li;
        queue.push({nd, l.to});
      }
    }
  }
  if (!via.count(to)) return {};
  std::vector<std::size_t> route;
  for (NodeId n = to; n != from; n = net.link_at(route.back()).from) route.push_back(via.at(n));
  std::reverse(route.begin(), route.end());
  return route;
}

struct Leg {
  std::size_t link;
  double offset;  // route distance at the leg start
  double from;    // positions along the link
  double to;
};

}  // namespace

NetworkTables make_grid(const GridSpec& g) {
  if (g.rows < 2 || g.cols < 2 || !(g.spacing > 0.0)) throw std::invalid_argument("make_grid: bad grid size");
  NetworkTables t;
  const GeoOrigin corner{g.lon, g.lat};
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const auto ll = unproject_from_plane(Point2d(c * g.spacing, r * g.spacing), corner);
      t.nodes.push_back({grid_node(g, r, c), ll.x(), ll.y()});
    }
  LinkId next = 1;
  auto add = [&](NodeId a, NodeId b) {
    t.links.push_back({next++, a, b, g.spacing, std::nullopt});
    t.links.push_back({next++, b, a, g.spacing, std::nullopt});
  };
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c + 1 < g.cols; ++c) add(grid_node(g, r, c), grid_node(g, r, c + 1));
  for (int c = 0; c < g.cols; ++c)
    for (int r = 0; r + 1 < g.rows; ++r) add(grid_node(g, r, c), grid_node(g, r + 1, c));
  return t;
}

bool is_arterial(const GridSpec& g, const Link& link, const RoadNetwork&) {
  const auto [r1, c1] = grid_cell(g, link.from);
  const auto [r2, c2] = grid_cell(g, link.to);
  if (r1 == r2) return r1 % g.arterial_every == 0;
  return c1 == c2 && c1 % g.arterial_every == 0;
}

SynthResult generate_synthetic(const RoadNetwork& net, const GridSpec& grid, const SynthConfig& cfg) {
  if (!(cfg.interval > 0.0)) throw std::invalid_argument("generate_synthetic: interval must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::lognormal_distribution<double> spread(0.0, cfg.route_spread);

  const auto n_links = net.links().size();
  std::vector<double> free_speed(n_links), congestion(n_links, 0.0);
  for (std::size_t i = 0; i < n_links; ++i) {
    free_speed[i] = is_arterial(grid, net.link_at(i), net) ? cfg.arterial_speed : cfg.local_speed;
    if (cfg.congestion) congestion[i] = 0.6 * unit(rng);
  }
  const double peak = cfg.day_start + 0.5 * cfg.departure_window + 600.0;
  auto link_speed = [&](std::size_t li, double t) {
    const double tod = std::fmod(t - cfg.epoch, 86400.0);
    const double z = (tod - peak) / 1500.0;
    return free_speed[li] * (1.0 - congestion[li] * std::exp(-z * z));
  };

  const int n_nodes = grid.rows * grid.cols;
  std::uniform_int_distribution<int> pick_node(1, n_nodes);
  const int min_blocks = std::max(2, (grid.rows + grid.cols) / 2 - 2);

  SynthResult out;
  for (int v = 0; v < cfg.vehicles; ++v) {
    char name[16];
    std::snprintf(name, sizeof name, "v%03d", v + 1);
    const std::string vehicle = name;
    NodeId o = 0, d = 0;
    for (int tries = 0;; ++tries) {
      o = pick_node(rng);
      d = pick_node(rng);
      const auto [r1, c1] = grid_cell(grid, o);
      const auto [r2, c2] = grid_cell(grid, d);
      if (std::abs(r1 - r2) + std::abs(c1 - c2) >= min_blocks || tries >= cfg.max_retries) break;
    }
    const double preferred = cfg.day_start + cfg.departure_window * unit(rng);
    const double driver = 0.9 + 0.2 * unit(rng);
    std::vector<std::size_t> habit;
    int trips = 0;

    for (int day = 0; day < cfg.days; ++day) {
      const double depart =
          std::round(cfg.epoch + 86400.0 * day + preferred + cfg.departure_jitter * (2.0 * unit(rng) - 1.0));
      std::vector<std::size_t> route;
      if (!habit.empty() && unit(rng) < cfg.habit_strength) {
        route = habit;
      } else {
        for (int tries = 0; route.empty() && tries < cfg.max_retries; ++tries) {
          std::vector<double> cost(n_links);
          for (std::size_t i = 0; i < n_links; ++i) cost[i] = net.link_at(i).length / free_speed[i] * spread(rng);
          route = cheapest_route(net, o, d, cost);
        }
        if (route.empty()) continue;
        if (habit.empty()) habit = route;
      }

      const auto& first = net.link_at(route.front());
      const auto& last = net.link_at(route.back());
      double start = (0.05 + 0.9 * unit(rng)) * first.length;
      double finish = (0.05 + 0.9 * unit(rng)) * last.length;
      if (route.size() == 1 && finish < start) std::swap(start, finish);

      // Route as consecutive pieces of links, with cumulative start distances.
      std::vector<Leg> legs;
      double total = 0.0;
      for (std::size_t k = 0; k < route.size(); ++k) {
        const auto& l = net.link_at(route[k]);
        legs.push_back({route[k], total, k == 0 ? start : 0.0, k + 1 == route.size() ? finish : l.length});
        total += legs.back().to - legs.back().from;
      }
      auto leg_at = [&](double dist) {
        std::size_t k = 0;
        while (k + 1 < legs.size() && dist >= legs[k + 1].offset) ++k;
        return k;
      };
      auto target_speed = [&](double dist, double t) {
        return link_speed(legs[leg_at(dist)].link, t) * driver;
      };

      // Every edge along the route in driving order.
      std::vector<EdgeRef> sequence;
      std::vector<std::size_t> leg_first;
      for (const auto& leg : legs) {
        const auto& l = net.link_at(leg.link);
        leg_first.push_back(sequence.size());
        const int a = net.edge_index_at(l, leg.from), b = net.edge_index_at(l, leg.to);
        for (int e = a; e <= b; ++e) sequence.push_back({l.id, e});
      }

      // Speed varies linearly between probe times; each new knot speed is
      // the target speed where the vehicle would be at the old speed.
      std::vector<Probe> probes;
      MatchRecord truth;
      std::size_t prev_pos = 0;
      double dist = 0.0;
      double speed = target_speed(0.0, depart);
      for (long m = 0;; ++m) {
        const double tp = depart + static_cast<double>(m) * cfg.interval;
        const auto k = leg_at(dist);
        const auto& leg = legs[k];
        const auto& l = net.link_at(leg.link);
        const double s = leg.from + (dist - leg.offset);
        Point2d pos = net.point_on_link(l, s);
        if (cfg.position_noise > 0.0) pos += cfg.position_noise * Point2d(normal(rng), normal(rng));
        const auto ll = unproject_from_plane(pos, net.origin());
        Probe p;
        p.t = tp;
        p.lon = ll.x();
        p.lat = ll.y();
        p.speed = std::clamp(speed + cfg.speed_noise * normal(rng), 0.0, kMaxProbeSpeed - 1.0);
        p.bearing = normalize_degrees(l.direction + cfg.bearing_noise * normal(rng));
        probes.push_back(p);

        // The true edge is where the observed position falls on the true link.
        const double observed = std::clamp(project_onto_link(pos, l, net).link_position, leg.from, leg.to);
        const int e = net.edge_index_at(l, observed);
        const std::size_t pos_in_seq =
            std::max(prev_pos, leg_first[k] + static_cast<std::size_t>(e - net.edge_index_at(l, leg.from)));
        ProbeMatch pm;
        pm.t = tp;
        pm.matched = true;
        pm.edge = sequence[pos_in_seq];
        pm.point = net.point_on_link(l, observed);
        if (!truth.probes.empty())
          pm.path.assign(sequence.begin() + static_cast<long>(prev_pos), sequence.begin() + static_cast<long>(pos_in_seq) + 1);
        prev_pos = pos_in_seq;
        truth.probes.push_back(std::move(pm));

        const double next_speed = target_speed(std::min(total, dist + speed * cfg.interval), tp + cfg.interval);
        const double next = dist + 0.5 * (speed + next_speed) * cfg.interval;
        if (next > total) break;
        dist = next;
        speed = next_speed;
      }
      if (probes.size() < 2) continue;

      auto traj = make_trajectory(vehicle + "-" + std::to_string(trips++), vehicle, std::move(probes));
      auto shell = make_record_shell(traj);
      shell.probes = std::move(truth.probes);
      out.trajectories.push_back(std::move(traj));
      out.truth.push_back(std::move(shell));
    }
  }

  std::vector<std::size_t> order(out.trajectories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = out.trajectories[a];
    const auto& tb = out.trajectories[b];
    return ta.t0() != tb.t0() ? ta.t0() < tb.t0() : ta.id < tb.id;
  });
  SynthResult sorted;
  for (auto i : order) {
    sorted.trajectories.push_back(std::move(out.trajectories[i]));
    sorted.truth.push_back(std::move(out.truth[i]));
  }
  return sorted;
}

}  // namespace pcamm
