// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "oracles.hpp"
#include "pcamm/calibration.hpp"
#include "pcamm/evaluation.hpp"
#include "pcamm/matcher.hpp"
#include "pcamm/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

using namespace pcamm;
using namespace pcamm::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << "  (" << o.detail << ")" << std::endl;
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome k_shortest_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int mismatches = 0, compared = 0;
  for (int round = 0; round < 50; ++round) {
    const int n = std::uniform_int_distribution<int>(4, 12)(rng);
    NetBuilder b;
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    for (int i = 0; i < n; ++i) b.node(u(rng), u(rng));
    std::uniform_int_distribution<int> pick(1, n), units(1, 6);
    std::set<std::pair<int, int>> used;
    const int n_links = std::min(n * (n - 1), n * 3);
    while (static_cast<int>(b.links().size()) < n_links) {
      const int x = pick(rng), y = pick(rng);
      if (x == y || !used.insert({x, y}).second) continue;
      b.link(x, y, 50.0 * units(rng));
    }
    const auto net = b.build();
    std::uniform_int_distribution<std::size_t> any_link(0, net.links().size() - 1);
    auto random_candidate = [&] {
      const Link& l = net.link_at(any_link(rng));
      std::uniform_int_distribution<int> step(0, static_cast<int>(l.length / 10.0) - 1);
      return candidate_at(net, l.id, 10.0 * step(rng) + 5.0);
    };
    std::vector<CandidateEdge> starts{random_candidate()}, ends{random_candidate()};
    if (round % 3 == 0) starts.push_back(random_candidate());
    if (round % 4 == 0) ends.push_back(random_candidate());
    if (starts.size() == 2 && starts[0].edge.link == starts[1].edge.link) starts.pop_back();
    if (ends.size() == 2 && ends[0].edge.link == ends[1].edge.link) ends.pop_back();
    const int k = std::uniform_int_distribution<int>(1, 12)(rng);
    const auto got = k_shortest_paths(SubGraph::whole(net), starts, ends, k);
    const auto want = brute_force(net, starts, ends, k);
    ++compared;
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].length == want[i].length && got[i].link_count() == want[i].links && got[i].edges == want[i].edges;
    if (!same) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, fmt("%d/%d graphs identical, %.2f s", compared - mismatches, compared, secs)};
}

Outcome formula_conformance() {
  NetBuilder b;
  const auto n1 = b.node(0, 0), n2 = b.node(300, 0), n3 = b.node(600, 0);
  b.link(n1, n2, 300.0, 0.0);
  b.link(n2, n3, 300.0, 0.0);
  const auto net = b.build();
  CandidatePath path;
  path.links = {1, 2};
  path.start.edge = {1, 1};
  path.end.edge = {2, 1};
  path.length = 540.0;
  Probe prev, cur;
  prev.speed = 8;
  cur.t = 60;
  cur.speed = 12;
  cur.bearing = 60;

  int bad = 0, total = 0;
  auto check = [&](double got, double want) {
    ++total;
    if (!(std::abs(got - want) <= 1e-9)) ++bad;
  };
  check(speed_weight(10.0, 10.0, 600.0, 60.0, 0.1), 1.0);
  check(speed_weight(8.0, 12.0, 540.0, 60.0, 0.1), std::exp(-0.1));
  check(speed_weight(100.0, 100.0, 0.0, 60.0, 0.1), std::exp(-10.0));
  check(bearing_weight(0.0, 0.0), 1.0);
  check(bearing_weight(90.0, 0.0), 0.0);
  check(bearing_weight(60.0, 0.0), 0.5);
  check(p_score(path, prev, cur, net, 0.1), std::exp(-0.1) * 0.5);
  cur.bearing = 0;
  prev.speed = cur.speed = 9;
  check(p_score(path, prev, cur, net, 0.1), 1.0);
  cur.bearing = 100;
  check(p_score(path, prev, cur, net, 0.1), 0.0);
  const auto c = c_scores(std::vector<double>{1.0, 2.0, 5.0});
  check(c[1], 0.25);
  check(c[2], 1.0);
  for (double v : c_scores(std::vector<double>{2.0, 2.0})) check(v, 0.0);
  Eigen::VectorXd x(2);
  x << 0.02, 0.04;
  check(mean_link_share(path, x, net), 0.03);
  for (double v : a_scores(std::vector<double>{0.03, 0.03})) check(v, 0.0);
  check(final_score({0.3, 0.6, 0.9}, FusionWeights::equal()), 0.6);
  check(final_score({0.5, 1.0, 0.0}, FusionWeights::calibrated_default()), 0.6);
  check(final_score({1.0, 1.0, 1.0}, FusionWeights{0.1, 0.6, 0.3}), 1.0);
  return {bad == 0, fmt("%d/%d values within 1e-9", total - bad, total)};
}

Outcome sgmn_gradient_check() {
  const auto net = random_network(8, 31);
  SgmnModel m(net.spectrum(), 3, 0.8);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (auto& v : m.filters().reshaped()) v = n01(rng);
  std::vector<Eigen::VectorXd> seq;
  for (int i = 0; i < 12; ++i) seq.push_back(random_simplex(8, rng));
  std::vector<std::size_t> targets;
  for (std::size_t t = 3; t < seq.size(); ++t) targets.push_back(t);
  const Eigen::MatrixXd g = sgmn_gradient(m, seq, targets);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
      const double h = 1e-5, base = m.filters()(i, k);
      m.filters()(i, k) = base + h;
      const double up = dense_loss(m, seq, targets);
      m.filters()(i, k) = base - h;
      const double down = dense_loss(m, seq, targets);
      m.filters()(i, k) = base;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(i, k)) / std::max(std::abs(fd), 1e-8));
    }
  }
  return {worst < 1e-5, fmt("max relative error %.2e over %d entries", worst, static_cast<int>(g.size()))};
}

Outcome sgmn_planted_recovery() {
  const auto net = random_network(10, 41);
  std::mt19937_64 rng(10);
  SgmnModel truth(net.spectrum(), 3, 0.8);
  std::uniform_real_distribution<double> u(0.9, 1.0);
  for (auto& v : truth.filters().reshaped()) v = u(rng);
  std::vector<Eigen::VectorXd> seq;
  for (int i = 0; i < 3; ++i) seq.push_back(random_simplex(10, rng));
  while (seq.size() < 120) {
    std::vector<Eigen::VectorXd> hist(seq.rbegin(), seq.rbegin() + 3);
    seq.push_back(truth.forward_raw(hist));
  }
  SgmnModel model(net.spectrum(), 3, 0.8);
  TrainOptions opt;
  opt.max_epochs = 2000;
  const auto res = sgmn_train(model, seq, opt);
  bool monotone = true;
  for (std::size_t e = 1; e < res.train_loss.size(); ++e)
    monotone = monotone && res.train_loss[e] <= res.train_loss[e - 1] + 1e-12;
  return {res.best_val_loss < 1e-6 && monotone && res.train_loss.size() <= 2000,
          fmt("validation MSE %.2e after %zu epochs, training loss %s", res.best_val_loss, res.train_loss.size(),
              monotone ? "non-increasing" : "increased")};
}

Outcome weight_recovery() {
  const auto res = fit_weights(planted(500, {0.2, 0.5, 0.3}, 0.0, 0.01, 77));
  const auto& w = res.weights;
  const bool close = std::abs(w.p - 0.2) <= 0.05 && std::abs(w.c - 0.5) <= 0.05 && std::abs(w.a - 0.3) <= 0.05;
  return {close && w.valid(), fmt("W = [%.3f, %.3f, %.3f]", w.p, w.c, w.a)};
}

Outcome simplex_fuzz() {
  const auto net = random_network(25, 17);
  std::mt19937_64 rng(99);
  TrafficAggregator agg(net, 300.0);
  std::uniform_int_distribution<std::size_t> any(0, net.links().size() - 1);
  std::uniform_real_distribution<double> when(0.0, 1000 * 300.0);
  std::poisson_distribution<int> burst(20);
  for (int r = 0; r < 3000; ++r) {
    MatchRecord rec;
    for (int i = burst(rng); i > 0; --i) {
      ProbeMatch pm;
      pm.t = when(rng);
      pm.matched = true;
      pm.edge = {net.link_at(any(rng)).id, 1};
      rec.probes.push_back(pm);
    }
    agg.add(rec);
  }
  const auto states = agg.states();
  const auto gamma = decay_weights(12, 0.8);
  std::vector<Eigen::VectorXd> history;
  std::size_t checked = 0, bad = 0;
  auto check = [&](const Eigen::VectorXd& v) {
    ++checked;
    if (!(v.minCoeff() > 0.0) || std::abs(v.sum() - 1.0) > 1e-9) ++bad;
  };
  for (const auto& s : states) {
    check(s.shares);
    history.insert(history.begin(), s.shares);
    if (history.size() > 12) history.pop_back();
    check(predict_naive(history, gamma));
  }
  return {bad == 0 && states.size() == 1000,
          fmt("%zu intervals, %zu vectors checked, %zu violations", states.size(), checked, bad)};
}

// ---------------------------------------------------------------------------
// desk-scale experiments

struct Fleet {
  GridSpec grid;
  RoadNetwork net;
  SynthResult data;
};

Fleet make_fleet(std::uint64_t seed) {
  GridSpec grid;  // 8 x 8
  const auto t = make_grid(grid);
  auto net = load_network(t.nodes, t.links, 50.0);
  SynthConfig c;  // 200 vehicles, habit 0.7, congestion on, 15 s, noise free
  c.seed = seed;
  auto data = generate_synthetic(net, grid, c);
  return {grid, std::move(net), std::move(data)};
}

std::vector<Trajectory> downsample_all(const std::vector<Trajectory>& dense, double dt) {
  std::vector<Trajectory> out;
  for (const auto& t : dense) {
    auto d = downsample(t, dt);
    if (d.probes.size() >= 2) out.push_back(std::move(d));
  }
  return out;
}

double fleet_accuracy(const RoadNetwork& net, const MatchConfig& cfg, const std::vector<Trajectory>& trajs,
                      const std::vector<MatchRecord>& truth) {
  HistoryStore history(net);
  TrafficAggregator traffic(net, 300.0);
  const auto res = match_fleet(ScoreFusionMatcher(net, cfg), trajs, history, traffic, {});
  return accuracy_index(res.records, truth);
}

FusionWeights calibrate_weights(double& secs) {
  const auto t0 = Clock::now();
  auto fleet = make_fleet(1000);
  const ScoreFusionMatcher matcher(fleet.net, {});
  const std::vector<double> intervals{30, 60, 120, 180, 240, 300};
  const auto samples = calibration_samples(matcher, fleet.data.trajectories, intervals, {});
  const auto fit = fit_weights(samples);
  secs = seconds_since(t0);
  return fit.weights;
}

struct Ablation {
  double dt;
  std::vector<double> p, pca;
};

Outcome ablation(const std::vector<Ablation>& runs, double secs) {
  bool pass = secs < 300.0;
  std::string detail;
  for (const auto& r : runs) {
    int wins = 0;
    double gain = 0.0;
    for (std::size_t i = 0; i < r.p.size(); ++i) {
      wins += r.pca[i] >= r.p[i];
      gain += r.pca[i] - r.p[i];
    }
    gain /= static_cast<double>(r.p.size());
    const bool ok = wins >= 8 && (r.dt != 240.0 || gain > 0.0);
    pass = pass && ok;
    detail += fmt("dt=%gs: P+C+A>=P in %d/%zu, mean gain %+.2f pp; ", r.dt, wins, r.p.size(), gain);
  }
  detail += fmt("%.0f s total", secs);
  return {pass, detail};
}

Outcome degradation(const std::vector<Ablation>& runs) {
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double a60 = mean(runs.front().pca), a240 = mean(runs.back().pca);
  return {a240 <= a60 + 1.0, fmt("P+C+A mean accuracy %.2f%% at 60 s, %.2f%% at 240 s", a60, a240)};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcamm_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = PCAMM_CLI;
  auto sh = [](const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); };
  if (sh(cli + " synth --out-dir " + dir.string() + " --vehicles 60 --days 3 --noise 5 --interval 30 --seed 9") != 0)
    return {false, "synth failed"};
  const std::string common = cli + " match --nodes " + (dir / "nodes.csv").string() + " --links " +
                             (dir / "links.csv").string() + " --probes " + (dir / "probes.csv").string();
  if (sh(common + " -o " + (dir / "a.csv").string()) != 0 || sh(common + " -o " + (dir / "b.csv").string()) != 0 ||
      sh(common + " --jobs 4 -o " + (dir / "c.csv").string()) != 0)
    return {false, "match failed"};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto a = slurp(dir / "a.csv"), b = slurp(dir / "b.csv"), c = slurp(dir / "c.csv");
  fs::remove_all(dir);
  return {!a.empty() && a == b && a == c,
          fmt("%zu bytes; repeat run %s, --jobs 4 run %s", a.size(), a == b ? "identical" : "differs",
              a == c ? "identical" : "differs")};
}

Outcome round_trip() {
  auto fleet = make_fleet(7);
  const ScoreFusionMatcher matcher(fleet.net, {});
  std::vector<MatchRecord> records;
  for (const auto& t : fleet.data.trajectories) records.push_back(matcher.match(t, {}));
  const double acc = accuracy_index(records, fleet.data.truth);
  const double rec = recall_index(records, fleet.data.truth);
  return {acc == 100.0 && rec == 100.0,
          fmt("%zu trajectories at 15 s, fresh stores per trajectory: accuracy %.3f%%, recall %.3f%%", records.size(),
              acc, rec)};
}

}  // namespace

int main() {
  report(1, "k-shortest oracle equivalence", k_shortest_oracle());
  report(2, "formula conformance", formula_conformance());
  report(3, "SGMN gradient check", sgmn_gradient_check());
  report(4, "SGMN planted-model recovery", sgmn_planted_recovery());
  report(5, "weight-calibration recovery", weight_recovery());
  report(6, "simplex invariants", simplex_fuzz());

  const auto t0 = Clock::now();
  double calib_secs = 0.0;
  MatchConfig full;
  full.weights = calibrate_weights(calib_secs);
  MatchConfig p_only = full;
  p_only.mask = parse_score_mask("P");
  std::vector<Ablation> runs{{60, {}, {}}, {120, {}, {}}, {240, {}, {}}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto fleet = make_fleet(seed);
    for (auto& r : runs) {
      const auto trajs = downsample_all(fleet.data.trajectories, r.dt);
      r.p.push_back(fleet_accuracy(fleet.net, p_only, trajs, fleet.data.truth));
      r.pca.push_back(fleet_accuracy(fleet.net, full, trajs, fleet.data.truth));
    }
  }
  auto outcome7 = ablation(runs, seconds_since(t0));
  outcome7.detail += fmt("; calibrated W = [%.3f, %.3f, %.3f] in %.0f s", full.weights.p, full.weights.c,
                         full.weights.a, calib_secs);
  report(7, "desk-scale ablation", outcome7);
  report(8, "monotone degradation", degradation(runs));
  report(9, "determinism", determinism());
  report(10, "end-to-end round trip", round_trip());
  return failures == 0 ? 0 : 1;
}
