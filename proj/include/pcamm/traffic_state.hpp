#pragma once

#include "pcamm/road_graph.hpp"
#include "pcamm/trajectory.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcamm {

using IntervalIndex = std::int64_t;

struct TrafficConfig {
  double interval = 300.0;   // prediction update interval, seconds
  double lookback = 3600.0;  // recent window used by the predictors, seconds
  double decay = 0.8;        // geometric ratio of the temporal weights
  bool literal_init = false; // initialize filters with raw (unnormalized) eigenvalue powers

  int k_max() const;
};

/// Interval j covers [(j-1) * interval, j * interval).
IntervalIndex interval_index(double t, double interval);

/// Link shares for one interval; strictly positive, summing to one.
struct StateVector {
  IntervalIndex interval = 0;
  Eigen::VectorXd shares;
};

/// Counts matched probe locations per link (plus one per link) and normalizes.
StateVector state_from_counts(IntervalIndex j, const Eigen::VectorXd& counts);
StateVector aggregate_interval(std::span<const MatchRecord> records, IntervalIndex j, const RoadNetwork& net,
                               double interval);

/// gamma_k proportional to decay^(k-1), k = 1..k, normalized to sum to one.
Eigen::VectorXd decay_weights(int k, double decay);

/// Weighted mean of past states; history[0] is the most recent.
Eigen::VectorXd predict_naive(std::span<const Eigen::VectorXd> history, const Eigen::VectorXd& gamma);

/// Clips negative entries and renormalizes; uniform if nothing positive remains.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& x);

/// Spectral graph Markov predictor: sum_k gamma_k U diag(theta_k) U^T X_{j-k}
/// with learnable spectral filters theta_k and fixed temporal weights.
class SgmnModel {
 public:
  SgmnModel() = default;
  SgmnModel(const LaplacianSpectrum& spectrum, int k_max, double decay, bool literal_init = false);

  int k_max() const { return static_cast<int>(filters_.cols()); }
  Eigen::Index size() const { return filters_.rows(); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  /// Column k-1 holds the diagonal of the k-th filter.
  const Eigen::MatrixXd& filters() const { return filters_; }
  Eigen::MatrixXd& filters() { return filters_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  double decay() const { return decay_; }

  /// Raw linear prediction; history[0] is X_{j-1}. Uses the first
  /// min(k_max, history size) steps with renormalized temporal weights.
  Eigen::VectorXd forward_raw(std::span<const Eigen::VectorXd> history) const;
  /// forward_raw projected back to the simplex.
  Eigen::VectorXd forward(std::span<const Eigen::VectorXd> history) const;

  void save(std::ostream& out, const std::vector<LinkId>& link_ids) const;
  /// Reads a checkpoint and binds it to the given spectrum.
  static SgmnModel load(std::istream& in, const LaplacianSpectrum& spectrum, const std::vector<LinkId>& link_ids);

 private:
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd filters_;
  Eigen::VectorXd gamma_;
  double decay_ = 0.8;
};

/// Mean squared error over the samples whose targets are `targets` (indices
/// into `sequence`, each >= k_max).
double sgmn_loss(const SgmnModel& model, std::span<const Eigen::VectorXd> sequence,
                 std::span<const std::size_t> targets);
/// Gradient of sgmn_loss with respect to the filters (same shape as filters()).
Eigen::MatrixXd sgmn_gradient(const SgmnModel& model, std::span<const Eigen::VectorXd> sequence,
                              std::span<const std::size_t> targets);

enum class Optimizer { kConjugateGradient, kAdam };

struct TrainOptions {
  Optimizer optimizer = Optimizer::kConjugateGradient;
  int max_epochs = 2000;
  int batch_size = 64;          // Adam only
  double learning_rate = 1e-3;  // Adam only
  double min_learning_rate = 1e-5;
  int patience = 4;             // epochs without validation improvement
  std::uint64_t seed = 7;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch, full training split
  std::vector<double> val_loss;
  double best_val_loss = 0.0;
  double test_loss = 0.0;
  int best_epoch = 0;
  std::size_t train_samples = 0, val_samples = 0, test_samples = 0;
};

/// Fits the filters on consecutive state vectors split 6:2:2 in time order.
/// The model is left at the best-validation filters.
TrainResult sgmn_train(SgmnModel& model, std::span<const Eigen::VectorXd> sequence, const TrainOptions& options);

/// Per-interval matched-location counts accumulated from match records.
class TrafficAggregator {
 public:
  TrafficAggregator(const RoadNetwork& net, double interval) : net_(&net), interval_(interval) {}

  void add(const MatchRecord& record);
  std::optional<StateVector> state(IntervalIndex j) const;  // nullopt when no record touched j
  std::vector<StateVector> states() const;                  // contiguous from first to last interval
  double interval() const { return interval_; }
  const RoadNetwork& network() const { return *net_; }
  bool empty() const { return counts_.empty(); }

  void write_log(std::ostream& out) const;  // CSV interval_j,link_id,X

 private:
  const RoadNetwork* net_;
  double interval_;
  std::map<IntervalIndex, Eigen::VectorXd> counts_;
};

enum class PredictorKind { kNone, kNaive, kSgmn };
PredictorKind parse_predictor(const std::string& s);

/// Frozen view of the traffic state used by a match session: predictions
/// for interval j use the stored states of intervals j-1 .. j-k_max.
class TrafficSnapshot {
 public:
  TrafficSnapshot() = default;
  TrafficSnapshot(const TrafficAggregator& agg, const TrafficConfig& config, PredictorKind kind,
                  std::optional<SgmnModel> model = std::nullopt);

  TrafficSnapshot(const TrafficSnapshot&) = delete;
  TrafficSnapshot& operator=(const TrafficSnapshot&) = delete;

  /// Predicted shares (on the simplex) for the interval containing t, or
  /// nullopt when the predictor is disabled or has no history yet.
  std::optional<Eigen::VectorXd> predict_at(double t) const;

 private:
  PredictorKind kind_ = PredictorKind::kNone;
  TrafficConfig config_;
  std::map<IntervalIndex, Eigen::VectorXd> states_;
  std::optional<SgmnModel> model_;
  mutable std::mutex cache_mutex_;
  mutable std::map<IntervalIndex, std::optional<Eigen::VectorXd>> cache_;
};

}  // namespace pcamm
