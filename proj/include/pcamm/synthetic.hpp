#pragma once

#include "pcamm/road_graph.hpp"
#include "pcamm/trajectory.hpp"

#include <cstdint>
#include <vector>

namespace pcamm {

/// Rectangular street grid with two-way links; every `arterial_every`-th
/// row and column is an arterial.
struct GridSpec {
  int rows = 8;
  int cols = 8;
  double spacing = 300.0;  // meters between adjacent intersections
  double lon = 117.65;     // south-west corner
  double lat = 24.51;
  int arterial_every = 3;
};

struct NetworkTables {
  std::vector<NodeRecord> nodes;
  std::vector<LinkRecord> links;
};

NetworkTables make_grid(const GridSpec& spec);
bool is_arterial(const GridSpec& spec, const Link& link, const RoadNetwork& net);

struct SynthConfig {
  int vehicles = 200;
  int days = 5;
  double habit_strength = 0.7;    // probability of repeating the vehicle's first route
  bool congestion = true;
  double interval = 15.0;         // probe step, seconds
  double position_noise = 0.0;    // sigma, meters
  double speed_noise = 0.0;       // sigma, m/s
  double bearing_noise = 0.0;     // sigma, degrees
  double arterial_speed = 14.0;   // free-flow, m/s
  double local_speed = 9.0;
  double route_spread = 0.35;     // lognormal sigma of the per-trip link cost perturbation
  double day_start = 7.0 * 3600;  // earliest preferred departure, seconds after midnight
  double departure_window = 3600.0;
  double departure_jitter = 120.0;  // uniform +- around the preferred departure
  double epoch = 1700006400.0;    // midnight of day 0
  int max_retries = 50;
  std::uint64_t seed = 1;
};

struct SynthResult {
  std::vector<Trajectory> trajectories;  // sorted by (t0, id)
  std::vector<MatchRecord> truth;        // same order, true edge and path per probe
};

/// Seeded commuter fleet: each vehicle drives between a fixed origin and
/// destination once a day, repeating its habitual route with probability
/// habit_strength and otherwise choosing a fresh route. Links slow down
/// around the morning peak when congestion is on.
SynthResult generate_synthetic(const RoadNetwork& net, const GridSpec& grid, const SynthConfig& config);

}  // namespace pcamm
