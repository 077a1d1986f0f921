#include "pcamm/evaluation.hpp"

#include "pcamm/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace pcamm {

namespace {

class TruthIndex {
 public:
  explicit TruthIndex(std::span<const MatchRecord> truth) {
    for (const auto& r : truth) by_id_.emplace(r.trajectory_id, &r);
  }

  const MatchRecord& record(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InputError("evaluation: no truth for trajectory " + id);
    return *it->second;
  }

  static std::size_t probe_at(const MatchRecord& truth, double t) {
    const auto it = std::lower_bound(truth.probes.begin(), truth.probes.end(), t,
                                     [](const ProbeMatch& p, double x) { return p.t < x; });
    if (it == truth.probes.end() || std::abs(it->t - t) > 1e-6)
      throw InputError("evaluation: truth for " + truth.trajectory_id + " has no probe at t=" + std::to_string(t));
    return static_cast<std::size_t>(it - truth.probes.begin());
  }

 private:
  std::unordered_map<std::string, const MatchRecord*> by_id_;
};

struct Tally {
  std::size_t probes = 0, correct = 0, segments = 0;
  double overlap = 0.0;
};

void tally(const MatchRecord& m, const TruthIndex& index, Tally& t) {
  const auto& truth = index.record(m.trajectory_id);
  std::size_t prev_idx = 0;
  for (std::size_t i = 0; i < m.probes.size(); ++i) {
    const auto& pm = m.probes[i];
    const auto ti = TruthIndex::probe_at(truth, pm.t);
    const auto& tp = truth.probes[ti];
    if (tp.matched) {
      ++t.probes;
      if (pm.matched && pm.edge == tp.edge) ++t.correct;
    }
    if (i > 0) {
      std::vector<std::vector<EdgeRef>> pieces;
      bool complete = truth.probes[prev_idx].matched;
      for (auto k = prev_idx + 1; k <= ti && complete; ++k) {
        complete = !truth.probes[k].path.empty();
        pieces.push_back(truth.probes[k].path);
      }
      if (complete && ti > prev_idx) {
        const auto true_path = concatenate_paths(pieces);
        ++t.segments;
        if (!pm.path.empty()) t.overlap += path_accuracy(pm.path, true_path);
      }
    }
    prev_idx = ti;
  }
}

double percent(double num, double den) { return den > 0.0 ? 100.0 * num / den : 0.0; }

}  // namespace

double accuracy_index(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth) {
  const TruthIndex index(truth);
  Tally t;
  for (const auto& m : matched) tally(m, index, t);
  return percent(static_cast<double>(t.correct), static_cast<double>(t.probes));
}

double recall_index(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth) {
  const TruthIndex index(truth);
  Tally t;
  for (const auto& m : matched) tally(m, index, t);
  return percent(t.overlap, static_cast<double>(t.segments));
}

double cost_index(std::span<const double> wall_seconds, std::size_t n_trajectories) {
  if (n_trajectories == 0) throw std::invalid_argument("cost_index: no trajectories");
  double total = 0.0;
  for (double s : wall_seconds) total += s;
  return total / static_cast<double>(n_trajectories);
}

EvalReport evaluate(std::span<const MatchRecord> matched, std::span<const MatchRecord> truth,
                    const std::unordered_map<std::string, double>* wall_seconds) {
  const TruthIndex index(truth);
  struct Group {
    Tally tally;
    std::vector<double> times;
    std::size_t count = 0;
  };
  std::map<double, Group> groups;
  Group all;
  for (const auto& m : matched) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < m.probes.size(); ++i) gaps.push_back(m.probes[i].t - m.probes[i - 1].t);
    double interval = 0.0;
    if (!gaps.empty()) {
      std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
      interval = std::round(gaps[gaps.size() / 2]);
    }
    auto& g = groups[interval];
    tally(m, index, g.tally);
    tally(m, index, all.tally);
    ++g.count;
    ++all.count;
    if (wall_seconds) {
      auto it = wall_seconds->find(m.trajectory_id);
      if (it == wall_seconds->end()) throw InputError("evaluation: no timing for trajectory " + m.trajectory_id);
      g.times.push_back(it->second);
      all.times.push_back(it->second);
    }
  }

  auto fill = [&](const Group& g, double& acc, double& rec, std::optional<double>& cost) {
    acc = percent(static_cast<double>(g.tally.correct), static_cast<double>(g.tally.probes));
    rec = percent(g.tally.overlap, static_cast<double>(g.tally.segments));
    if (wall_seconds && g.count > 0) cost = cost_index(g.times, g.count);
  };
  EvalReport report;
  report.trajectories = all.count;
  fill(all, report.accuracy, report.recall, report.cost);
  for (const auto& [interval, g] : groups) {
    EvalBreakdown b;
    b.interval = interval;
    b.trajectories = g.count;
    fill(g, b.accuracy, b.recall, b.cost);
    report.per_interval.push_back(b);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  auto cost = [](const std::optional<double>& c) { return c ? json(*c) : json(nullptr); };
  json per = json::array();
  for (const auto& b : report.per_interval)
    per.push_back({{"interval_s", b.interval},
                   {"trajectories", b.trajectories},
                   {"accuracy_pct", b.accuracy},
                   {"recall_pct", b.recall},
                   {"cost_s", cost(b.cost)}});
  return {{"accuracy_pct", report.accuracy},
          {"recall_pct", report.recall},
          {"cost_s", cost(report.cost)},
          {"trajectories", report.trajectories},
          {"per_interval", per},
          {"config", report.config}};
}

}  // namespace pcamm
