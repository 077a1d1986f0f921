#include "pcamm/calibration.hpp"

#include "pcamm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_set>

namespace pcamm {

namespace {

std::optional<CandidateEdge> nearest_candidate(const Probe& p, const RoadNetwork& net, double radius) {
  auto c = find_candidate_edges(probe_position(p, net.origin()), p.bearing, net, radius);
  if (c.empty()) return std::nullopt;
  return c.front();
}

}  // namespace

std::vector<std::optional<CandidatePath>> ground_truth_paths(const Trajectory& traj, const RoadNetwork& net,
                                                             double search_radius) {
  const auto whole = SubGraph::whole(net);
  std::vector<std::optional<CandidatePath>> out(traj.probes.size());
  std::optional<CandidateEdge> prev;
  for (std::size_t i = 0; i < traj.probes.size(); ++i) {
    const auto cur = nearest_candidate(traj.probes[i], net, search_radius);
    if (i > 0 && prev && cur) {
      auto paths = k_shortest_paths(whole, {*prev}, {*cur}, 1);
      if (!paths.empty()) out[i] = std::move(paths.front());
    }
    prev = cur;
  }
  return out;
}

MatchRecord ground_truth_record(const Trajectory& traj, const RoadNetwork& net, double search_radius) {
  auto record = make_record_shell(traj);
  const auto paths = ground_truth_paths(traj, net, search_radius);
  for (std::size_t i = 0; i < traj.probes.size(); ++i) {
    auto& pm = record.probes[i];
    if (paths[i]) {
      pm.matched = true;
      pm.edge = paths[i]->end.edge;
      pm.point = paths[i]->end.point;
      pm.path = paths[i]->edges;
      if (i > 0 && !record.probes[i - 1].matched) {
        auto& prev = record.probes[i - 1];
        prev.matched = true;
        prev.edge = paths[i]->start.edge;
        prev.point = paths[i]->start.point;
      }
    }
  }
  return record;
}

Trajectory downsample(const Trajectory& traj, double keep_interval) {
  if (!(keep_interval > 0.0)) throw InputError("downsample: interval must be positive");
  if (traj.probes.size() < 2) return traj;
  const double ratio = keep_interval / traj.interval;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 || std::round(ratio) < 1.0)
    throw InputError("downsample: " + format_double(keep_interval) + " s is not a multiple of the " +
                     format_double(traj.interval) + " s probing interval of " + traj.id);
  std::vector<Probe> kept;
  for (const auto& p : traj.probes) {
    const double k = (p.t - traj.t0()) / keep_interval;
    if (std::abs(k - std::round(k)) <= 1e-6) kept.push_back(p);
  }
  auto out = make_trajectory(traj.id, traj.vehicle, std::move(kept), traj.finished);
  if (out.probes.size() < 2) out.interval = keep_interval;
  return out;
}

double path_accuracy(std::span<const EdgeRef> candidate, std::span<const EdgeRef> truth) {
  if (candidate.empty() || truth.empty()) throw std::invalid_argument("path_accuracy: empty path");
  const std::unordered_set<EdgeRef, EdgeRefHash> t(truth.begin(), truth.end());
  const auto hits = std::count_if(candidate.begin(), candidate.end(), [&](const EdgeRef& e) { return t.count(e) > 0; });
  return static_cast<double>(hits) / static_cast<double>(candidate.size());
}

std::vector<EdgeRef> concatenate_paths(std::span<const std::vector<EdgeRef>> segments) {
  std::vector<EdgeRef> out;
  for (const auto& s : segments) {
    auto first = s.begin();
    if (!out.empty() && first != s.end() && out.back() == *first) ++first;
    out.insert(out.end(), first, s.end());
  }
  return out;
}

std::vector<CalibrationSample> calibration_samples(const ScoreFusionMatcher& matcher,
                                                   std::span<const Trajectory> dense,
                                                   std::span<const double> intervals, const FleetOptions& options) {
  const auto& net = matcher.network();
  const double radius = matcher.config().search_radius;
  std::vector<std::size_t> order(dense.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dense[a].t0() != dense[b].t0() ? dense[a].t0() < dense[b].t0() : dense[a].id < dense[b].id;
  });

  HistoryStore history(net);
  TrafficAggregator traffic(net, options.traffic.interval);
  std::vector<MatchRecord> truth(dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) truth[i] = ground_truth_record(dense[i], net, radius);

  std::vector<std::vector<CalibrationSample>> per_traj(dense.size());
  auto samples_for = [&](const Trajectory& traj, const MatchRecord& gt, const MatchContext& ctx) {
    std::vector<CalibrationSample> out;
    for (double dt : intervals) {
      const auto ds = downsample(traj, dt);
      std::vector<std::size_t> dense_index;
      for (const auto& p : ds.probes) {
        const auto it = std::lower_bound(traj.probes.begin(), traj.probes.end(), p.t,
                                         [](const Probe& q, double t) { return q.t < t; });
        dense_index.push_back(static_cast<std::size_t>(it - traj.probes.begin()));
      }
      const auto tctx = matcher.trajectory_context(ds, ctx);
      for (std::size_t s = 1; s < ds.probes.size(); ++s) {
        const auto a = dense_index[s - 1], b = dense_index[s];
        std::vector<std::vector<EdgeRef>> pieces;
        bool complete = gt.probes[a].matched;
        for (auto k = a + 1; k <= b && complete; ++k) {
          complete = !gt.probes[k].path.empty();
          pieces.push_back(gt.probes[k].path);
        }
        if (!complete) continue;
        const auto truth_path = concatenate_paths(pieces);
        const auto start = nearest_candidate(traj.probes[a], net, radius);
        const auto& prev = ds.probes[s - 1];
        const auto& cur = ds.probes[s];
        const auto ends = matcher.match_first_probe(cur);
        if (!start || ends.empty()) continue;
        const auto paths = matcher.candidate_paths(prev, cur, {*start}, ends, tctx.k);
        std::optional<Eigen::VectorXd> shares;
        if (ctx.traffic) shares = ctx.traffic->predict_at(cur.t);
        const auto scores = matcher.score_candidates(paths, prev, cur, tctx.counts, shares ? &*shares : nullptr);
        for (std::size_t i = 0; i < paths.size(); ++i)
          out.push_back({scores[i], path_accuracy(paths[i].edges, truth_path)});
      }
    }
    return out;
  };

  std::size_t begin = 0;
  while (begin < order.size()) {
    const auto epoch = interval_index(dense[order[begin]].t0(), options.traffic.interval);
    std::size_t end = begin;
    while (end < order.size() && interval_index(dense[order[end]].t0(), options.traffic.interval) == epoch) ++end;

    std::optional<SgmnModel> model;
    if (options.model) model = *options.model;
    const TrafficSnapshot snapshot(traffic, options.traffic, options.predictor, std::move(model));
    const MatchContext ctx{&history, &snapshot};
    std::atomic<std::size_t> next{begin};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++) per_traj[order[i]] = samples_for(dense[order[i]], truth[order[i]], ctx);
    };
    if (options.jobs <= 1 || end - begin == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (int j = 0; j < std::min<int>(options.jobs, static_cast<int>(end - begin)); ++j) pool.emplace_back(worker);
    }
    for (std::size_t i = begin; i < end; ++i) {
      if (dense[order[i]].finished) history.record_match(truth[order[i]]);
      traffic.add(truth[order[i]]);
    }
    begin = end;
  }

  std::vector<CalibrationSample> out;
  for (auto i : order) out.insert(out.end(), per_traj[i].begin(), per_traj[i].end());
  return out;
}

// ---------------------------------------------------------------------------
// weight fitting

namespace {

struct LinearModel {
  std::array<double, 3> phi{0.0, 0.0, 0.0};
  double bias = 0.0;

  std::array<double, 3> weights() const {
    const double m = std::max({phi[0], phi[1], phi[2]});
    std::array<double, 3> w{};
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (w[i] = std::exp(phi[i] - m));
    for (auto& x : w) x /= s;
    return w;
  }
};

std::array<double, 3> as_array(const ScoreVector& s) { return {s.p, s.c, s.a}; }

double mse(const LinearModel& m, std::span<const CalibrationSample> data) {
  if (data.empty()) return 0.0;
  const auto w = m.weights();
  double total = 0.0;
  for (const auto& d : data) {
    const auto s = as_array(d.scores);
    const double r = w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + m.bias - d.accuracy;
    total += r * r;
  }
  return total / static_cast<double>(data.size());
}

/// Gradient with respect to (phi, bias).
std::array<double, 4> mse_gradient(const LinearModel& m, std::span<const CalibrationSample> data) {
  const auto w = m.weights();
  std::array<double, 3> gw{};
  double gb = 0.0;
  for (const auto& d : data) {
    const auto s = as_array(d.scores);
    const double r = w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + m.bias - d.accuracy;
    for (int i = 0; i < 3; ++i) gw[i] += r * s[i];
    gb += r;
  }
  const double scale = 2.0 / static_cast<double>(data.size());
  const double dot = w[0] * gw[0] + w[1] * gw[1] + w[2] * gw[2];
  std::array<double, 4> g{};
  for (int i = 0; i < 3; ++i) g[i] = scale * w[i] * (gw[i] - dot);  // softmax chain rule
  g[3] = scale * gb;
  return g;
}

FusionWeights to_weights(const LinearModel& m) {
  const auto w = m.weights();
  return {w[0], w[1], w[2], m.bias};
}

}  // namespace

FusionWeights round_weights(const FusionWeights& w) {
  const std::array<double, 3> raw{w.p * 10.0, w.c * 10.0, w.a * 10.0};
  std::array<int, 3> units{};
  std::array<double, 3> rem{};
  int total = 0;
  for (int i = 0; i < 3; ++i) {
    units[i] = static_cast<int>(std::floor(raw[i] + 1e-9));
    rem[i] = raw[i] - units[i];
    total += units[i];
  }
  std::array<int, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; total < 10 && k < 3; ++k, ++total) ++units[idx[k]];
  return {units[0] / 10.0, units[1] / 10.0, units[2] / 10.0, w.bias};
}

FitResult fit_weights(std::span<const CalibrationSample> samples, const FitOptions& options) {
  if (samples.size() < 30)
    throw EmptyResultError("fit_weights: need at least 30 samples, got " + std::to_string(samples.size()));
  FitResult res;

  auto constant = [&](auto get) {
    const double first = get(samples.front());
    return std::all_of(samples.begin(), samples.end(), [&](const auto& s) { return std::abs(get(s) - first) <= 1e-12; });
  };
  const bool flat_scores = constant([](const CalibrationSample& s) { return s.scores.p; }) &&
                           constant([](const CalibrationSample& s) { return s.scores.c; }) &&
                           constant([](const CalibrationSample& s) { return s.scores.a; });
  const bool flat_targets = constant([](const CalibrationSample& s) { return s.accuracy; });
  if (flat_scores || flat_targets) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.accuracy;
    res.degenerate = true;
    res.weights = FusionWeights::equal();
    res.weights.bias = mean / static_cast<double>(samples.size());
    res.rounded = round_weights(res.weights);
    return res;
  }

  std::vector<CalibrationSample> shuffled(samples.begin(), samples.end());
  std::mt19937_64 rng(options.seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n = shuffled.size();
  const std::size_t n_train = n * 6 / 10, n_val = n * 2 / 10;
  const auto all = std::span<const CalibrationSample>(shuffled);
  const auto train = all.subspan(0, n_train);
  const auto val = all.subspan(n_train, n_val);
  const auto test = all.subspan(n_train + n_val);

  LinearModel model, best;
  double loss = mse(model, train);
  res.best_val_loss = mse(model, val);
  double step = 1.0;
  int stale = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto g = mse_gradient(model, train);
    const double g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3];
    if (g2 <= 1e-30) break;
    LinearModel trial;
    double trial_loss = loss;
    step = std::min(step * 2.0, 1e6);
    for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
      trial = model;
      for (int i = 0; i < 3; ++i) trial.phi[i] -= step * g[i];
      trial.bias -= step * g[3];
      trial_loss = mse(trial, train);
      if (trial_loss <= loss - 1e-4 * step * g2) break;
    }
    if (!(trial_loss <= loss)) break;
    const double improvement = loss - trial_loss;
    model = trial;
    loss = trial_loss;
    res.train_loss.push_back(loss);
    const double v = mse(model, val);
    res.val_loss.push_back(v);
    if (v < res.best_val_loss) {
      res.best_val_loss = v;
      res.best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
    if (improvement < options.tolerance) break;
  }
  res.weights = to_weights(best);
  res.rounded = round_weights(res.weights);
  res.test_loss = mse(best, test);
  return res;
}

// ---------------------------------------------------------------------------
// files

void write_samples(std::ostream& out, std::span<const CalibrationSample> samples) {
  out << "S_P,S_C,S_A,Y\n";
  for (const auto& s : samples)
    out << format_double(s.scores.p) << ',' << format_double(s.scores.c) << ',' << format_double(s.scores.a) << ','
        << format_double(s.accuracy) << '\n';
}

std::vector<CalibrationSample> read_samples(std::istream& in, const std::string& source) {
  const auto table = read_csv(in, {"S_P", "S_C", "S_A", "Y"}, source);
  std::vector<CalibrationSample> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto ctx = source + ":" + std::to_string(table.line_numbers[r]);
    if (row.size() < 4) throw InputError(ctx + ": expected 4 fields");
    CalibrationSample s{{parse_double(row[0], ctx), parse_double(row[1], ctx), parse_double(row[2], ctx)},
                        parse_double(row[3], ctx)};
    for (double v : {s.scores.p, s.scores.c, s.scores.a, s.accuracy})
      if (v < 0.0 || v > 1.0) throw InputError(ctx + ": scores and Y must lie in [0, 1]");
    out.push_back(s);
  }
  return out;
}

void write_weights(std::ostream& out, const FusionWeights& w) {
  out << nlohmann::json{{"wp", w.p}, {"wc", w.c}, {"wa", w.a}, {"bias", w.bias}}.dump(1) << '\n';
}

FusionWeights read_weights(std::istream& in) {
  try {
    nlohmann::json j;
    in >> j;
    FusionWeights w{j.at("wp").get<double>(), j.at("wc").get<double>(), j.at("wa").get<double>(),
                    j.value("bias", 0.0)};
    if (!w.valid()) throw InputError("weights file: weights must be nonnegative and sum to 1");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("weights file: ") + e.what());
  }
}

}  // namespace pcamm
