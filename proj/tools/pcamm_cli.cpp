// pcamm: command line driver for the map matcher and its experiment tooling.

#include "pcamm/calibration.hpp"
#include "pcamm/evaluation.hpp"
#include "pcamm/io.hpp"
#include "pcamm/matcher.hpp"
#include "pcamm/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace {

using nlohmann::json;
using namespace pcamm;

/// Reads a JSON object as CLI11 config items. Nested objects address the
/// subcommand of the same name; top-level scalars go to the invoked one.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const auto* opt : app->get_options()) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      if (opt->count() > 0)
        j[opt->get_lnames().front()] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      else if (default_also && !opt->get_default_str().empty())
        j[opt->get_lnames().front()] = opt->get_default_str();
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw InputError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw InputError("config file: top level must be an object");
    std::vector<std::string> active;
    for (const auto* sub : root_->get_subcommands()) active.push_back(sub->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else {
        items.push_back(item(active, key, value));
      }
    }
    return items;
  }

 private:
  static CLI::ConfigItem item(std::vector<std::string> parents, std::string name, const json& value) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    std::replace(name.begin(), name.end(), '_', '-');
    it.name = std::move(name);
    auto render = [](const json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
      if (v.is_number() || v.is_null()) return v.dump();
      throw InputError("config file: unsupported value " + v.dump());
    };
    if (value.is_array())
      for (const auto& v : value) it.inputs.push_back(render(v));
    else
      it.inputs.push_back(render(value));
    return it;
  }

  const CLI::App* root_;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

struct NetworkArgs {
  std::string nodes, links;
  double split = 50.0;

  void add(CLI::App* app, bool required = true) {
    app->add_option("--nodes", nodes, "node table CSV (node_id,lon,lat)")->required(required);
    app->add_option("--links", links, "link table CSV (link_id,from_node,to_node[,length_m,bearing_deg])")
        ->required(required);
    app->add_option("--split", split, "edge length delta, meters")->capture_default_str()->check(CLI::PositiveNumber);
  }
  RoadNetwork load() const {
    if (nodes.empty() || links.empty()) throw InputError("--nodes and --links are required");
    return read_network(nodes, links, split);
  }
};

struct MatchArgs {
  MatchConfig config;
  std::string weights = "calibrated";
  bool rounded = false;
  std::string scores = "P+C+A";
  std::string temporal_mode = "time-of-day";
  int k = 0;
  int jobs = 1;
  std::string predictor = "naive";
  std::string model;
  TrafficConfig traffic;
  double trip_gap = 600.0;

  void add(CLI::App* app) {
    app->add_option("--search-radius", config.search_radius, "candidate radius R, meters")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--speed-coef", config.speed_coef, "speed coefficient lambda")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--spatial-radius", config.group.spatial_radius, "collaboration radius r_s, meters")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app->add_option("--temporal-radius", config.group.temporal_radius, "collaboration radius r_t, seconds")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app->add_option("--neighbor-weight", config.neighbor_weight, "neighbour weight w_c")
        ->capture_default_str()
        ->check(CLI::IsMember({0.0, 1.0}));
    app->add_option("--temporal-mode", temporal_mode, "absolute|time-of-day")
        ->capture_default_str()
        ->check(CLI::IsMember({"absolute", "time-of-day"}));
    app->add_option("--k", k, "fixed number of candidate paths (default: interval rule)")->check(CLI::PositiveNumber);
    app->add_option("--weights", weights, "calibrated|equal|<weights.json>")->capture_default_str();
    app->add_flag("--rounded-weights", rounded, "round weights to one decimal");
    app->add_option("--scores", scores, "enabled judges, e.g. P, P+C, P+C+A")->capture_default_str();
    app->add_option("--traffic-interval", traffic.interval, "prediction update interval, seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--lookback", traffic.lookback, "predictor history window, seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--decay", traffic.decay, "temporal weight ratio")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    app->add_option("--predictor", predictor, "none|naive|sgmn")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "naive", "sgmn"}));
    app->add_option("--model", model, "SGMN checkpoint (with --predictor sgmn)");
    app->add_option("--jobs", jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--trip-gap", trip_gap, "split a vehicle's probes into trips at larger gaps, seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  MatchConfig build() const {
    MatchConfig c = config;
    c.group.temporal_mode = parse_temporal_mode(temporal_mode);
    c.mask = parse_score_mask(scores);
    if (k > 0) c.fixed_k = k;
    if (weights == "calibrated") {
      c.weights = FusionWeights::calibrated_default();
    } else if (weights == "equal") {
      c.weights = FusionWeights::equal();
    } else {
      auto in = open_in(weights);
      c.weights = read_weights(in);
    }
    if (rounded) c.weights = round_weights(c.weights);
    return c;
  }

  FleetOptions fleet(const SgmnModel* loaded) const {
    FleetOptions o;
    o.jobs = jobs;
    o.traffic = traffic;
    o.predictor = parse_predictor(predictor);
    o.model = loaded;
    return o;
  }

  std::optional<SgmnModel> load_model(const RoadNetwork& net) const {
    if (predictor != "sgmn") return std::nullopt;
    if (model.empty()) throw InputError("--predictor sgmn requires --model");
    auto in = open_in(model);
    std::vector<LinkId> ids;
    for (const auto& l : net.links()) ids.push_back(l.id);
    return SgmnModel::load(in, net.spectrum(), ids);
  }
};

int run_synth(const GridSpec& grid, const SynthConfig& cfg, const std::string& dir) {
  const auto tables = make_grid(grid);
  const auto net = load_network(tables.nodes, tables.links, 50.0);
  const auto syn = generate_synthetic(net, grid, cfg);
  if (syn.trajectories.empty()) throw EmptyResultError("synth: no trajectory generated");
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  {
    auto out = open_out((d / "nodes.csv").string());
    write_nodes(out, net);
  }
  {
    auto out = open_out((d / "links.csv").string());
    write_links(out, net);
  }
  {
    auto out = open_out((d / "probes.csv").string());
    write_probes_header(out);
    for (const auto& t : syn.trajectories) write_probes(out, t);
  }
  {
    auto out = open_out((d / "truth.csv").string());
    write_match_header(out);
    for (const auto& r : syn.truth) write_match_rows(out, r);
  }
  std::cout << json{{"trajectories", syn.trajectories.size()}, {"links", net.links().size()}, {"dir", dir}}.dump()
            << '\n';
  return 0;
}

struct MatchOutputs {
  std::string out, geojson, timings, history_in, history_out, traffic_log;
  std::string matcher = "score-fusion";
};

int run_match(const NetworkArgs& na, const MatchArgs& ma, const std::string& probes, const MatchOutputs& mo) {
  const auto net = na.load();
  const auto trajectories = read_trajectories(probes, ma.trip_gap);
  if (trajectories.empty()) throw EmptyResultError("match: no trajectories in " + probes);

  std::unique_ptr<Matcher> matcher;
  if (mo.matcher == "nearest")
    matcher = std::make_unique<NearestEdgeMatcher>(net, ma.config.search_radius);
  else
    matcher = std::make_unique<ScoreFusionMatcher>(net, ma.build());

  HistoryStore history(net);
  if (!mo.history_in.empty()) {
    auto in = open_in(mo.history_in);
    history.load_log(in);
  }
  TrafficAggregator traffic(net, ma.traffic.interval);
  const auto model = ma.load_model(net);
  const auto result = match_fleet(*matcher, trajectories, history, traffic, ma.fleet(model ? &*model : nullptr));

  std::size_t matched = 0;
  for (const auto& r : result.records)
    for (const auto& p : r.probes) matched += p.matched ? 1 : 0;
  if (matched == 0) throw EmptyResultError("match: no probe could be matched");

  auto write_rows = [&](std::ostream& out) {
    write_match_header(out);
    for (const auto& r : result.records) write_match_rows(out, r);
  };
  if (mo.out.empty() || mo.out == "-") {
    write_rows(std::cout);
  } else {
    auto out = open_out(mo.out);
    write_rows(out);
  }
  if (!mo.geojson.empty()) {
    auto out = open_out(mo.geojson);
    write_geojson(out, result.records, net);
  }
  if (!mo.timings.empty()) {
    auto out = open_out(mo.timings);
    out << "trajectory_id,wall_seconds\n";
    for (std::size_t i = 0; i < result.records.size(); ++i)
      out << result.records[i].trajectory_id << ',' << format_double(result.wall_seconds[i]) << '\n';
  }
  if (!mo.history_out.empty()) {
    auto out = open_out(mo.history_out);
    history.write_log(out);
  }
  if (!mo.traffic_log.empty()) {
    auto out = open_out(mo.traffic_log);
    traffic.write_log(out);
  }
  return 0;
}

int run_downsample(const std::string& probes, double interval, double trip_gap, const std::string& out_path) {
  const auto trajectories = read_trajectories(probes, trip_gap);
  if (trajectories.empty()) throw EmptyResultError("downsample: no trajectories in " + probes);
  auto emit = [&](std::ostream& out) {
    write_probes_header(out);
    for (const auto& t : trajectories) write_probes(out, downsample(t, interval));
  };
  if (out_path.empty() || out_path == "-") {
    emit(std::cout);
  } else {
    auto out = open_out(out_path);
    emit(out);
  }
  return 0;
}

struct CalibrateArgs {
  std::string probes, samples_in, samples_out, out;
  std::vector<double> intervals{30, 60, 120, 180, 240, 300};
  FitOptions fit;
};

int run_calibrate(const NetworkArgs& na, const MatchArgs& ma, const CalibrateArgs& ca) {
  std::vector<CalibrationSample> samples;
  if (!ca.samples_in.empty()) {
    auto in = open_in(ca.samples_in);
    samples = read_samples(in, ca.samples_in);
  } else {
    if (ca.probes.empty()) throw InputError("calibrate: --probes or --samples is required");
    const auto net = na.load();
    const auto dense = read_trajectories(ca.probes, ma.trip_gap);
    if (dense.empty()) throw EmptyResultError("calibrate: no trajectories in " + ca.probes);
    const ScoreFusionMatcher matcher(net, ma.build());
    const auto model = ma.load_model(net);
    samples = calibration_samples(matcher, dense, ca.intervals, ma.fleet(model ? &*model : nullptr));
  }
  if (!ca.samples_out.empty()) {
    auto out = open_out(ca.samples_out);
    write_samples(out, samples);
  }
  const auto fit = fit_weights(samples, ca.fit);
  if (!ca.out.empty()) {
    auto out = open_out(ca.out);
    write_weights(out, fit.weights);
  }
  auto w = [](const FusionWeights& f) { return json{{"wp", f.p}, {"wc", f.c}, {"wa", f.a}, {"bias", f.bias}}; };
  std::cout << json{{"samples", samples.size()},
                    {"weights", w(fit.weights)},
                    {"rounded", w(fit.rounded)},
                    {"degenerate", fit.degenerate},
                    {"best_epoch", fit.best_epoch},
                    {"best_val_loss", fit.best_val_loss},
                    {"test_loss", fit.test_loss}}
                   .dump(2)
            << '\n';
  return 0;
}

struct TrainArgs {
  std::string matches, out;
  std::string optimizer = "cg";
  TrainOptions train;
  TrafficConfig traffic;
};

int run_train(const NetworkArgs& na, const TrainArgs& ta) {
  const auto net = na.load();
  auto in = open_in(ta.matches);
  const auto records = read_match_records(in, ta.matches);
  TrafficAggregator agg(net, ta.traffic.interval);
  for (const auto& r : records) agg.add(r);
  std::vector<Eigen::VectorXd> sequence;
  for (const auto& s : agg.states()) sequence.push_back(s.shares);
  const auto k = static_cast<std::size_t>(ta.traffic.k_max());
  if (sequence.size() < k + 2)
    throw EmptyResultError("train-predictor: " + std::to_string(sequence.size()) + " intervals, need at least " +
                           std::to_string(k + 2));

  SgmnModel model(net.spectrum(), ta.traffic.k_max(), ta.traffic.decay, ta.traffic.literal_init);
  auto opts = ta.train;
  opts.optimizer = ta.optimizer == "adam" ? Optimizer::kAdam : Optimizer::kConjugateGradient;
  const auto result = sgmn_train(model, sequence, opts);

  std::vector<LinkId> ids;
  for (const auto& l : net.links()) ids.push_back(l.id);
  auto out = open_out(ta.out);
  model.save(out, ids);
  std::cout << json{{"intervals", sequence.size()},
                    {"k_max", model.k_max()},
                    {"epochs", result.train_loss.size()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_mse", result.best_val_loss},
                    {"test_mse", result.test_loss}}
                   .dump(2)
            << '\n';
  return 0;
}

std::unordered_map<std::string, double> read_timings(const std::string& path) {
  const auto table = read_csv_file(path, {"trajectory_id", "wall_seconds"});
  std::unordered_map<std::string, double> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    out[table.rows[i][0]] = parse_double(table.rows[i][1], path + ":" + std::to_string(table.line_numbers[i]));
  return out;
}

int run_evaluate(const std::string& matches, const std::string& truth, const std::string& timings) {
  auto min = open_in(matches);
  const auto matched = read_match_records(min, matches);
  auto tin = open_in(truth);
  const auto truth_records = read_match_records(tin, truth);
  if (matched.empty()) throw EmptyResultError("evaluate: no matched trajectories in " + matches);
  std::optional<std::unordered_map<std::string, double>> times;
  if (!timings.empty()) times = read_timings(timings);
  auto report = evaluate(matched, truth_records, times ? &*times : nullptr);
  report.config = {{"matches", matches}, {"truth", truth}};
  if (!timings.empty()) report.config["timings"] = timings;
  std::cout << to_json(report).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcamm: map matching with kinematic, collaborative and traffic scores"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file with option values; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic grid network, commuter fleet and truth");
  GridSpec grid;
  SynthConfig sc;
  std::string synth_dir;
  bool no_congestion = false;
  synth->add_option("--out-dir", synth_dir, "output directory")->required();
  synth->add_option("--rows", grid.rows)->capture_default_str()->check(CLI::Range(2, 1000));
  synth->add_option("--cols", grid.cols)->capture_default_str()->check(CLI::Range(2, 1000));
  synth->add_option("--spacing", grid.spacing, "meters")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--arterial-every", grid.arterial_every)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--vehicles", sc.vehicles)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--days", sc.days)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--habit", sc.habit_strength, "route repeat probability")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--no-congestion", no_congestion);
  synth->add_option("--interval", sc.interval, "probe step, seconds")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--noise", sc.position_noise, "position sigma, meters")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--speed-noise", sc.speed_noise, "m/s")->capture_default_str()->check(CLI::NonNegativeNumber);
  synth->add_option("--bearing-noise", sc.bearing_noise, "degrees")->capture_default_str()->check(CLI::NonNegativeNumber);
  synth->add_option("--arterial-speed", sc.arterial_speed)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--local-speed", sc.local_speed)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--seed", sc.seed)->capture_default_str();

  // match
  auto* match = app.add_subcommand("match", "match probe trajectories to the road network");
  NetworkArgs match_net;
  MatchArgs match_args;
  MatchOutputs match_out;
  std::string match_probes;
  match_net.add(match);
  match_args.add(match);
  match->add_option("--probes", match_probes, "probe CSV")->required();
  match->add_option("-o,--out", match_out.out, "match CSV (default stdout)");
  match->add_option("--geojson", match_out.geojson, "GeoJSON of matched paths and probes");
  match->add_option("--timings", match_out.timings, "per-trajectory wall time CSV");
  match->add_option("--history-in", match_out.history_in, "history log to start from");
  match->add_option("--history-out", match_out.history_out, "history log after matching");
  match->add_option("--traffic-log", match_out.traffic_log, "traffic state CSV after matching");
  match->add_option("--matcher", match_out.matcher, "score-fusion|nearest")
      ->capture_default_str()
      ->check(CLI::IsMember({"score-fusion", "nearest"}));

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "fit fusion weights on downsampled dense trajectories");
  NetworkArgs cal_net;
  MatchArgs cal_args;
  CalibrateArgs cal;
  cal_net.add(calibrate, false);
  cal_args.add(calibrate);
  calibrate->add_option("--probes", cal.probes, "dense probe CSV");
  calibrate->add_option("--samples", cal.samples_in, "read samples instead of generating them");
  calibrate->add_option("--samples-out", cal.samples_out, "write the generated samples");
  calibrate->add_option("--intervals", cal.intervals, "downsampling intervals, seconds")->capture_default_str();
  calibrate->add_option("-o,--out", cal.out, "weights JSON");
  calibrate->add_option("--max-epochs", cal.fit.max_epochs)->capture_default_str()->check(CLI::PositiveNumber);
  calibrate->add_option("--patience", cal.fit.patience)->capture_default_str()->check(CLI::PositiveNumber);

  // train-predictor
  auto* train = app.add_subcommand("train-predictor", "train the spectral traffic predictor on matched records");
  NetworkArgs train_net;
  TrainArgs ta;
  train_net.add(train);
  train->add_option("--matches", ta.matches, "match CSV")->required();
  train->add_option("-o,--out", ta.out, "model checkpoint JSON")->required();
  train->add_option("--traffic-interval", ta.traffic.interval)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lookback", ta.traffic.lookback)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--decay", ta.traffic.decay)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  train->add_flag("--literal-init", ta.traffic.literal_init, "initialize filters with raw eigenvalue powers");
  train->add_option("--optimizer", ta.optimizer, "cg|adam")->capture_default_str()->check(CLI::IsMember({"cg", "adam"}));
  train->add_option("--epochs", ta.train.max_epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch-size", ta.train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.train.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--min-lr", ta.train.min_learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--patience", ta.train.patience)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--seed", ta.train.seed)->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "accuracy, recall and cost of matches against truth (JSON)");
  std::string eval_matches, eval_truth, eval_timings;
  eval->add_option("--matches", eval_matches, "match CSV")->required();
  eval->add_option("--truth", eval_truth, "truth match CSV")->required();
  eval->add_option("--timings", eval_timings, "per-trajectory wall time CSV");

  // downsample
  auto* down = app.add_subcommand("downsample", "keep probes on a coarser time grid");
  std::string down_probes, down_out;
  double down_interval = 60.0, down_gap = 600.0;
  down->add_option("--probes", down_probes, "probe CSV")->required();
  down->add_option("--interval", down_interval, "seconds")->capture_default_str()->check(CLI::PositiveNumber);
  down->add_option("--trip-gap", down_gap)->capture_default_str()->check(CLI::PositiveNumber);
  down->add_option("-o,--out", down_out, "probe CSV (default stdout)");

  try {
    app.parse(argc, argv);
    sc.congestion = !no_congestion;
    if (*synth) return run_synth(grid, sc, synth_dir);
    if (*match) return run_match(match_net, match_args, match_probes, match_out);
    if (*calibrate) return run_calibrate(cal_net, cal_args, cal);
    if (*train) return run_train(train_net, ta);
    if (*eval) return run_evaluate(eval_matches, eval_truth, eval_timings);
    if (*down) return run_downsample(down_probes, down_interval, down_gap, down_out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const EmptyResultError& e) {
    std::cerr << "empty result: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
