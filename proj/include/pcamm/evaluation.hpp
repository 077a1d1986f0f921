#pragma once

#include "pcamm/trajectory.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pcamm {

/// Percentage of probes whose matched edge equals the truth edge; unmatched
/// probes count as wrong, probes without a truth edge are skipped. Records
/// are aligned by trajectory id and probe timestamp; throws InputError when
/// a probe has no counterpart in the truth.
double accuracy_index(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth);

/// Mean over segments of the share of inferred edges lying on the true
/// path between the same two probes, as a percentage. Empty inferred paths
/// score zero.
double recall_index(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth);

/// Mean wall time per trajectory.
double cost_index(std::span<const double> wall_seconds, std::size_t n_trajectories);

struct EvalBreakdown {
  double interval = 0.0;  // seconds
  std::size_t trajectories = 0;
  double accuracy = 0.0;
  double recall = 0.0;
  std::optional<double> cost;
};

struct EvalReport {
  double accuracy = 0.0;  // percent
  double recall = 0.0;    // percent
  std::optional<double> cost;
  std::size_t trajectories = 0;
  std::vector<EvalBreakdown> per_interval;
  nlohmann::json config = nlohmann::json::object();
};

/// Indices overall and per probing interval (median gap of each record,
/// rounded to whole seconds). `wall_seconds` maps trajectory ids to times.
EvalReport evaluate(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth,
                    const std::unordered_map<std::string, double>* wall_seconds = nullptr);

nlohmann::json to_json(const EvalReport& report);

}  // namespace pcamm
