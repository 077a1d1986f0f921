#include "pcamm/scoring.hpp"

#include "pcamm/io.hpp"

#include <algorithm>
#include <stdexcept>

namespace pcamm {

ScoreMask parse_score_mask(const std::string& s) {
  ScoreMask m{false, false, false};
  for (const auto& part : split(s, '+')) {
    const auto t = trim(part);
    if (t == "P" || t == "p") m.p = true;
    else if (t == "C" || t == "c") m.c = true;
    else if (t == "A" || t == "a") m.a = true;
    else throw InputError("unknown score '" + t + "' (expected P, C, A joined by '+')");
  }
  if (!m.p && !m.c && !m.a) throw InputError("empty score mask");
  return m;
}

bool FusionWeights::valid() const {
  return p >= 0.0 && c >= 0.0 && a >= 0.0 && std::abs(p + c + a - 1.0) <= 1e-9;
}

FusionWeights FusionWeights::restricted(const ScoreMask& mask) const {
  FusionWeights w{mask.p ? p : 0.0, mask.c ? c : 0.0, mask.a ? a : 0.0, bias};
  double total = w.p + w.c + w.a;
  if (total <= 0.0) {
    const double n = double(mask.p) + double(mask.c) + double(mask.a);
    return {mask.p / n, mask.c / n, mask.a / n, bias};
  }
  w.p /= total;
  w.c /= total;
  w.a /= total;
  return w;
}

double p_score(const CandidatePath& path, const Probe& prev, const Probe& cur, const RoadNetwork& net, double lambda) {
  const double dt = cur.t - prev.t;
  if (!(dt > 0.0)) throw std::invalid_argument("p_score: non-positive probe interval");
  const Link& end_link = net.link(path.end.edge.link);
  return speed_weight(prev.speed, cur.speed, path.length, dt, lambda) * bearing_weight(cur.bearing, end_link.direction);
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) return out;
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

double mean_link_share(const CandidatePath& path, const Eigen::VectorXd& shares, const RoadNetwork& net) {
  if (path.links.empty()) throw std::invalid_argument("mean_link_share: path has no links");
  double sum = 0.0;
  for (LinkId id : path.links) sum += shares(static_cast<Eigen::Index>(net.link_index(id)));
  return sum / static_cast<double>(path.links.size());
}

std::optional<std::size_t> select_path(std::span<const CandidatePath> paths, std::span<const double> scores) {
  if (paths.size() != scores.size()) throw std::invalid_argument("select_path: size mismatch");
  if (paths.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < paths.size(); ++i) {
    const double d = scores[i] - scores[best];
    if (d > 1e-12) {
      best = i;
    } else if (d >= -1e-12) {
      if (paths[i].length < paths[best].length ||
          (paths[i].length == paths[best].length &&
           std::lexicographical_compare(paths[i].edges.begin(), paths[i].edges.end(), paths[best].edges.begin(),
                                        paths[best].edges.end())))
        best = i;
    }
  }
  return best;
}

}  // namespace pcamm
