#pragma once

#include "pcamm/history.hpp"
#include "pcamm/path_search.hpp"
#include "pcamm/scoring.hpp"
#include "pcamm/traffic_state.hpp"
#include "pcamm/trajectory.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcamm {

struct MatchConfig {
  double search_radius = 170.0;  // R, meters
  double speed_coef = 0.1;       // lambda
  double neighbor_weight = 1.0;  // w_c
  GroupParams group;             // r_s, r_t, temporal mode
  FusionWeights weights = FusionWeights::calibrated_default();
  ScoreMask mask;
  std::optional<int> fixed_k;    // overrides the interval rule
};

/// Read-only state shared by every trajectory matched in one batch.
struct MatchContext {
  const HistoryStore* history = nullptr;
  const TrafficSnapshot* traffic = nullptr;
};

/// Per-trajectory inputs that stay fixed across its segments.
struct TrajectoryContext {
  GroupCounts counts;
  int k = 6;
};

struct SegmentResult {
  CandidatePath path;
  ScoreVector scores;
  double final_score = 0.0;
};

class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual std::string name() const = 0;
  virtual MatchRecord match(const Trajectory& traj, const MatchContext& ctx) const = 0;
};

/// Fuses kinematic, collaborative and traffic scores over K shortest
/// candidate paths inside the ellipse region of each probe pair.
class ScoreFusionMatcher final : public Matcher {
 public:
  ScoreFusionMatcher(const RoadNetwork& net, MatchConfig config) : net_(&net), config_(std::move(config)) {}

  std::string name() const override { return "score-fusion"; }
  const MatchConfig& config() const { return config_; }
  const RoadNetwork& network() const { return *net_; }

  /// Candidate edges of a trajectory's first probe (or of a restart probe).
  std::vector<CandidateEdge> match_first_probe(const Probe& p) const;

  TrajectoryContext trajectory_context(const Trajectory& traj, const MatchContext& ctx) const;

  /// Candidate paths between two probes in ranking order.
  std::vector<CandidatePath> candidate_paths(const Probe& prev, const Probe& cur,
                                             const std::vector<CandidateEdge>& carried,
                                             const std::vector<CandidateEdge>& end_candidates, int k) const;

  /// Score vectors of a candidate set. `shares` is the predicted link-share
  /// vector, or null when no prediction is available.
  std::vector<ScoreVector> score_candidates(std::span<const CandidatePath> paths, const Probe& prev, const Probe& cur,
                                            const GroupCounts& counts, const Eigen::VectorXd* shares) const;

  /// Weights in force for a segment: ablation mask applied, and the traffic
  /// weight redistributed when no prediction is available.
  FusionWeights effective_weights(bool have_prediction) const;

  /// Best path from the carried candidates to p_cur, or nullopt when no
  /// candidate path exists.
  std::optional<SegmentResult> match_segment(const Probe& prev, const Probe& cur,
                                             const std::vector<CandidateEdge>& carried, const TrajectoryContext& tctx,
                                             const MatchContext& ctx) const;

  MatchRecord match(const Trajectory& traj, const MatchContext& ctx) const override;

 private:
  const RoadNetwork* net_;
  MatchConfig config_;
};

/// Baseline: every probe snaps to its nearest legal edge and consecutive
/// edges are joined by the single shortest path.
class NearestEdgeMatcher final : public Matcher {
 public:
  NearestEdgeMatcher(const RoadNetwork& net, double search_radius) : net_(&net), radius_(search_radius) {}

  std::string name() const override { return "nearest-edge"; }
  MatchRecord match(const Trajectory& traj, const MatchContext& ctx) const override;

 private:
  const RoadNetwork* net_;
  double radius_;
};

struct FleetOptions {
  int jobs = 1;
  TrafficConfig traffic;
  PredictorKind predictor = PredictorKind::kNaive;
  const SgmnModel* model = nullptr;
};

struct FleetResult {
  std::vector<MatchRecord> records;  // in (t0, id) order
  std::vector<double> wall_seconds;  // per record
};

/// Matches trajectories in batches of one traffic interval (by start time).
/// Each batch reads frozen history and traffic snapshots; its records are
/// written to the stores only after the whole batch has finished.
FleetResult match_fleet(const Matcher& matcher, std::span<const Trajectory> trajectories, HistoryStore& history,
                        TrafficAggregator& traffic, const FleetOptions& options);

/// CSV `trajectory_id,probe_idx,timestamp,link_id,edge_idx,matched,path_edges`.
void write_match_header(std::ostream& out);
void write_match_rows(std::ostream& out, const MatchRecord& record);
/// Reads match rows back into records (probe timestamps, edges and paths only).
std::vector<MatchRecord> read_match_records(std::istream& in, const std::string& source = "matches");

/// One FeatureCollection: a LineString per matched segment and a Point per
/// matched probe, in WGS84 lon/lat.
void write_geojson(std::ostream& out, std::span<const MatchRecord> records, const RoadNetwork& net);

}  // namespace pcamm
