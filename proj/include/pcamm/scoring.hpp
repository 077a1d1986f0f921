#pragma once

#include "pcamm/path_search.hpp"
#include "pcamm/trajectory.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace pcamm {

/// The three judge scores as fractions in [0, 1]; `to_percent` renders them.
struct ScoreVector {
  double p = 0.0;
  double c = 0.0;
  double a = 0.0;
};

inline double to_percent(double fraction) { return 100.0 * fraction; }

/// Which judges take part (ablation switches).
struct ScoreMask {
  bool p = true;
  bool c = true;
  bool a = true;
};

ScoreMask parse_score_mask(const std::string& s);  // e.g. "P", "P+C", "C+A", "P+C+A"

struct FusionWeights {
  double p = 1.0 / 3.0;
  double c = 1.0 / 3.0;
  double a = 1.0 / 3.0;
  double bias = 0.0;  // calibration only; not used when fusing

  static FusionWeights equal() { return {}; }
  static FusionWeights calibrated_default() { return {0.2, 0.5, 0.3, 0.0}; }

  /// Nonnegative and summing to one within 1e-9.
  bool valid() const;
  /// Zeroes the disabled judges and renormalizes; a disabled A judge's
  /// weight goes to P and C in proportion to their weights.
  FusionWeights restricted(const ScoreMask& mask) const;
};

/// exp(-lambda |(v_prev + v_cur)/2 - length/dt|).
template <typename Scalar>
Scalar speed_weight(Scalar v_prev, Scalar v_cur, Scalar path_length, Scalar dt, Scalar lambda) {
  return std::exp(-lambda * std::abs((v_prev + v_cur) / Scalar(2) - path_length / dt));
}

/// max(cos(inclination), 0).
template <typename Scalar>
Scalar bearing_weight(Scalar probe_bearing, Scalar link_direction) {
  const Scalar incl = bearing_inclination(probe_bearing, link_direction);
  if (incl >= Scalar(90)) return Scalar(0);
  return std::cos(deg2rad(incl));
}

/// Kinematic score of a candidate path between two probes (fraction).
double p_score(const CandidatePath& path, const Probe& prev, const Probe& cur, const RoadNetwork& net, double lambda);

/// Min-max normalization over a candidate set; all zeros when max == min.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Mean predicted link share over the links a path passes.
double mean_link_share(const CandidatePath& path, const Eigen::VectorXd& shares, const RoadNetwork& net);

/// Collaborative score from per-path weighted usage frequencies.
inline std::vector<double> c_scores(std::span<const double> frequencies) { return min_max_normalize(frequencies); }
/// Traffic score from per-path mean link shares.
inline std::vector<double> a_scores(std::span<const double> mean_shares) { return min_max_normalize(mean_shares); }

template <typename Scalar>
Scalar final_score(const ScoreVector& s, const FusionWeights& w) {
  return Scalar(w.p * s.p + w.c * s.c + w.a * s.a);
}

inline double final_score(const ScoreVector& s, const FusionWeights& w) { return final_score<double>(s, w); }

/// Index of the best-scoring path; ties (within 1e-12) go to the shorter
/// path, then the lexicographically smaller edge sequence.
std::optional<std::size_t> select_path(std::span<const CandidatePath> paths, std::span<const double> scores);

}  // namespace pcamm
