#pragma once

#include "pcamm/matcher.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace pcamm {

/// Shortest path between the nearest legal edges of each consecutive probe
/// pair of a dense trajectory. Entry i covers probes i-1 .. i; entry 0 and
/// unreachable pairs are nullopt.
std::vector<std::optional<CandidatePath>> ground_truth_paths(const Trajectory& traj, const RoadNetwork& net,
                                                             double search_radius);

/// Match record whose probes carry the ground-truth edges and paths.
MatchRecord ground_truth_record(const Trajectory& traj, const RoadNetwork& net, double search_radius);

/// Keeps the probes whose offset from t0 is a multiple of `keep_interval`.
/// Throws InputError unless keep_interval is a positive multiple of the
/// trajectory's probing interval.
Trajectory downsample(const Trajectory& traj, double keep_interval);

/// Fraction of the candidate's edges present in the truth path.
double path_accuracy(std::span<const EdgeRef> candidate, std::span<const EdgeRef> truth);

/// Concatenates consecutive segment paths, sharing junction edges once.
std::vector<EdgeRef> concatenate_paths(std::span<const std::vector<EdgeRef>> segments);

struct CalibrationSample {
  ScoreVector scores;
  double accuracy = 0.0;
};

/// Candidate score vectors and accuracies for every segment of the given
/// dense trajectories after downsampling to each interval. Ground-truth
/// records feed the history and traffic stores in time order, batched per
/// traffic interval like a fleet run.
std::vector<CalibrationSample> calibration_samples(const ScoreFusionMatcher& matcher,
                                                   std::span<const Trajectory> dense,
                                                   std::span<const double> intervals, const FleetOptions& options);

struct FitOptions {
  int max_epochs = 5000;
  int patience = 50;
  double tolerance = 1e-14;  // stop when the training loss improves less than this
  std::uint64_t seed = 11;   // shuffle before the split
};

struct FitResult {
  FusionWeights weights;  // raw fitted weights (bias carried along)
  FusionWeights rounded;  // one decimal, still summing to one
  bool degenerate = false;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double best_val_loss = 0.0;
  double test_loss = 0.0;
  int best_epoch = 0;
};

/// Fits accuracy ~ W . S + B with W on the simplex (softmax parametrized),
/// by full-batch gradient descent with backtracking, shuffled and split 6:2:2
/// and stopped on validation loss. Constant scores or targets give equal
/// weights. Throws EmptyResultError with fewer than 30 samples.
FitResult fit_weights(std::span<const CalibrationSample> samples, const FitOptions& options = {});

/// Rounds to one decimal by largest remainder so the result sums to one.
FusionWeights round_weights(const FusionWeights& w);

void write_samples(std::ostream& out, std::span<const CalibrationSample> samples);
std::vector<CalibrationSample> read_samples(std::istream& in, const std::string& source = "samples");
void write_weights(std::ostream& out, const FusionWeights& w);
FusionWeights read_weights(std::istream& in);

}  // namespace pcamm
