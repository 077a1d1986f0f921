#include "pcamm/traffic_state.hpp"

#include "pcamm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace pcamm {

int TrafficConfig::k_max() const {
  if (!(interval > 0.0)) throw std::invalid_argument("traffic interval must be positive");
  return std::max(1, static_cast<int>(std::ceil(lookback / interval - 1e-9)));
}

IntervalIndex interval_index(double t, double interval) {
  return static_cast<IntervalIndex>(std::floor(t / interval)) + 1;
}

StateVector state_from_counts(IntervalIndex j, const Eigen::VectorXd& counts) {
  Eigen::VectorXd x = counts.array() + 1.0;
  x /= x.sum();
  return {j, x};
}

StateVector aggregate_interval(std::span<const MatchRecord> records, IntervalIndex j, const RoadNetwork& net,
                               double interval) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.links().size()));
  for (const auto& r : records)
    for (const auto& pm : r.probes)
      if (pm.matched && interval_index(pm.t, interval) == j)
        counts(static_cast<Eigen::Index>(net.link_index(pm.edge.link))) += 1.0;
  return state_from_counts(j, counts);
}

Eigen::VectorXd decay_weights(int k, double decay) {
  if (k < 1) throw std::invalid_argument("decay_weights: k must be >= 1");
  Eigen::VectorXd g(k);
  double w = 1.0;
  for (int i = 0; i < k; ++i, w *= decay) g(i) = w;
  return g / g.sum();
}

Eigen::VectorXd predict_naive(std::span<const Eigen::VectorXd> history, const Eigen::VectorXd& gamma) {
  if (history.empty()) throw std::invalid_argument("predict_naive: empty history");
  const auto k = std::min<Eigen::Index>(gamma.size(), static_cast<Eigen::Index>(history.size()));
  const double norm = gamma.head(k).sum();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(history[0].size());
  for (Eigen::Index i = 0; i < k; ++i) out += (gamma(i) / norm) * history[static_cast<std::size_t>(i)];
  return out;
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x.cwiseMax(0.0);
  const double s = y.sum();
  if (!(s > 0.0)) return Eigen::VectorXd::Constant(x.size(), 1.0 / static_cast<double>(x.size()));
  return y / s;
}

// ---------------------------------------------------------------------------
// SGMN

SgmnModel::SgmnModel(const LaplacianSpectrum& spectrum, int k_max, double decay, bool literal_init)
    : basis_(spectrum.eigenvectors), gamma_(decay_weights(k_max, decay)), decay_(decay) {
  const Eigen::VectorXd& lambda = literal_init ? spectrum.eigenvalues : spectrum.normalized;
  filters_.resize(lambda.size(), k_max);
  Eigen::VectorXd power = Eigen::VectorXd::Ones(lambda.size());
  for (int k = 0; k < k_max; ++k) {
    power = power.cwiseProduct(lambda);
    filters_.col(k) = power;
  }
}

Eigen::VectorXd SgmnModel::forward_raw(std::span<const Eigen::VectorXd> history) const {
  if (history.empty()) throw std::invalid_argument("sgmn_forward: empty history");
  const auto k = std::min<Eigen::Index>(filters_.cols(), static_cast<Eigen::Index>(history.size()));
  const double norm = gamma_.head(k).sum();
  Eigen::VectorXd spectral = Eigen::VectorXd::Zero(filters_.rows());
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& x = history[static_cast<std::size_t>(i)];
    if (x.size() != basis_.rows()) throw std::invalid_argument("sgmn_forward: dimension mismatch");
    spectral += (gamma_(i) / norm) * filters_.col(i).cwiseProduct(basis_.transpose() * x);
  }
  return basis_ * spectral;
}

Eigen::VectorXd SgmnModel::forward(std::span<const Eigen::VectorXd> history) const {
  return project_to_simplex(forward_raw(history));
}

void SgmnModel::save(std::ostream& out, const std::vector<LinkId>& link_ids) const {
  nlohmann::json j;
  j["format"] = "pcamm-sgmn";
  j["version"] = 1;
  j["num_links"] = filters_.rows();
  j["k_max"] = filters_.cols();
  j["decay"] = decay_;
  j["gamma"] = std::vector<double>(gamma_.data(), gamma_.data() + gamma_.size());
  j["link_ids"] = link_ids;
  auto filters = nlohmann::json::array();
  for (Eigen::Index k = 0; k < filters_.cols(); ++k) {
    const Eigen::VectorXd col = filters_.col(k);
    filters.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  j["filters"] = filters;
  out << j.dump(1) << '\n';
}

SgmnModel SgmnModel::load(std::istream& in, const LaplacianSpectrum& spectrum, const std::vector<LinkId>& link_ids) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "pcamm-sgmn" || j.at("version") != 1) throw InputError("model checkpoint: unknown format");
    const auto n = j.at("num_links").get<Eigen::Index>();
    const auto k = j.at("k_max").get<int>();
    if (n != spectrum.eigenvectors.rows()) throw InputError("model checkpoint: link count does not match network");
    if (j.at("link_ids").get<std::vector<LinkId>>() != link_ids)
      throw InputError("model checkpoint: link ids do not match network");
    SgmnModel m;
    m.basis_ = spectrum.eigenvectors;
    m.decay_ = j.at("decay").get<double>();
    const auto gamma = j.at("gamma").get<std::vector<double>>();
    const auto filters = j.at("filters").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(gamma.size()) != k || static_cast<int>(filters.size()) != k)
      throw InputError("model checkpoint: k_max inconsistent");
    m.gamma_ = Eigen::Map<const Eigen::VectorXd>(gamma.data(), k);
    m.filters_.resize(n, k);
    for (int c = 0; c < k; ++c) {
      if (static_cast<Eigen::Index>(filters[static_cast<std::size_t>(c)].size()) != n)
        throw InputError("model checkpoint: filter length mismatch");
      m.filters_.col(c) = Eigen::Map<const Eigen::VectorXd>(filters[static_cast<std::size_t>(c)].data(), n);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model checkpoint: ") + e.what());
  }
}

namespace {

/// Training works in the eigenbasis: with Z = U^T X the residual of a
/// sample is U (sum_k gamma_k theta_k .* Z_{j-k} - Z_j), and U is orthogonal.
struct SpectralData {
  Eigen::MatrixXd z;  // column i = U^T sequence[i]

  SpectralData(const SgmnModel& m, std::span<const Eigen::VectorXd> seq) : z(m.size(), seq.size()) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i].size() != m.size()) throw std::invalid_argument("sgmn: dimension mismatch");
      z.col(static_cast<Eigen::Index>(i)) = m.basis().transpose() * seq[i];
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& filters, const Eigen::VectorXd& gamma, std::size_t target) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(z.rows());
    for (Eigen::Index k = 0; k < filters.cols(); ++k)
      y += gamma(k) * filters.col(k).cwiseProduct(z.col(static_cast<Eigen::Index>(target) - k - 1));
    return y;
  }

  double loss(const Eigen::MatrixXd& filters, const Eigen::VectorXd& gamma, std::span<const std::size_t> t) const {
    if (t.empty()) return 0.0;
    double total = 0.0;
    for (auto s : t) total += (predict(filters, gamma, s) - z.col(static_cast<Eigen::Index>(s))).squaredNorm();
    return total / (static_cast<double>(z.rows()) * static_cast<double>(t.size()));
  }

  Eigen::MatrixXd gradient(const Eigen::MatrixXd& filters, const Eigen::VectorXd& gamma,
                           std::span<const std::size_t> t) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(filters.rows(), filters.cols());
    if (t.empty()) return g;
    for (auto s : t) {
      const Eigen::VectorXd r = predict(filters, gamma, s) - z.col(static_cast<Eigen::Index>(s));
      for (Eigen::Index k = 0; k < filters.cols(); ++k)
        g.col(k) += gamma(k) * r.cwiseProduct(z.col(static_cast<Eigen::Index>(s) - k - 1));
    }
    return g * (2.0 / (static_cast<double>(z.rows()) * static_cast<double>(t.size())));
  }

  /// Minimizer of the (quadratic) loss along `dir` from `filters`.
  double line_minimum(const Eigen::MatrixXd& filters, const Eigen::MatrixXd& dir, const Eigen::VectorXd& gamma,
                      std::span<const std::size_t> t) const {
    double num = 0.0, den = 0.0;
    for (auto s : t) {
      const Eigen::VectorXd r = predict(filters, gamma, s) - z.col(static_cast<Eigen::Index>(s));
      const Eigen::VectorXd q = predict(dir, gamma, s);
      num += r.dot(q);
      den += q.squaredNorm();
    }
    return den > 0.0 ? -num / den : 0.0;
  }
};

void check_targets(const SgmnModel& m, std::size_t n, std::span<const std::size_t> targets) {
  for (auto t : targets)
    if (t < static_cast<std::size_t>(m.k_max()) || t >= n) throw std::invalid_argument("sgmn: target index out of range");
}

}  // namespace

double sgmn_loss(const SgmnModel& model, std::span<const Eigen::VectorXd> sequence,
                 std::span<const std::size_t> targets) {
  check_targets(model, sequence.size(), targets);
  return SpectralData(model, sequence).loss(model.filters(), model.gamma(), targets);
}

Eigen::MatrixXd sgmn_gradient(const SgmnModel& model, std::span<const Eigen::VectorXd> sequence,
                              std::span<const std::size_t> targets) {
  check_targets(model, sequence.size(), targets);
  return SpectralData(model, sequence).gradient(model.filters(), model.gamma(), targets);
}

TrainResult sgmn_train(SgmnModel& model, std::span<const Eigen::VectorXd> sequence, const TrainOptions& options) {
  const auto k = static_cast<std::size_t>(model.k_max());
  if (sequence.size() < k + 2) throw std::invalid_argument("sgmn_train: need at least k_max + 2 intervals");
  const std::size_t samples = sequence.size() - k;
  TrainResult res;
  res.train_samples = std::max<std::size_t>(1, samples * 6 / 10);
  res.val_samples = std::max<std::size_t>(1, samples * 2 / 10);
  if (res.train_samples + res.val_samples > samples) res.train_samples = samples - res.val_samples;
  res.test_samples = samples - res.train_samples - res.val_samples;

  std::vector<std::size_t> train(res.train_samples), val(res.val_samples), test(res.test_samples);
  std::iota(train.begin(), train.end(), k);
  std::iota(val.begin(), val.end(), k + res.train_samples);
  std::iota(test.begin(), test.end(), k + res.train_samples + res.val_samples);

  const SpectralData data(model, sequence);
  const Eigen::VectorXd gamma = model.gamma();
  Eigen::MatrixXd theta = model.filters();
  Eigen::MatrixXd best = theta;
  res.best_val_loss = data.loss(theta, gamma, val);
  int stale = 0;

  if (options.optimizer == Optimizer::kConjugateGradient) {
    Eigen::MatrixXd grad = data.gradient(theta, gamma, train);
    Eigen::MatrixXd dir = -grad;
    const auto restart_every = theta.size();
    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
      if (grad.squaredNorm() <= 1e-300) break;
      if ((dir.array() * grad.array()).sum() >= 0.0) dir = -grad;
      const double alpha = data.line_minimum(theta, dir, gamma, train);
      theta += alpha * dir;
      const Eigen::MatrixXd next = data.gradient(theta, gamma, train);
      // Polak-Ribiere with non-negativity, restarted every n iterations.
      double beta = std::max(0.0, (next.array() * (next - grad).array()).sum() / grad.squaredNorm());
      if (epoch % restart_every == 0) beta = 0.0;
      dir = -next + beta * dir;
      grad = next;

      res.train_loss.push_back(data.loss(theta, gamma, train));
      const double v = data.loss(theta, gamma, val);
      res.val_loss.push_back(v);
      if (v < res.best_val_loss) {
        res.best_val_loss = v;
        res.best_epoch = epoch;
        best = theta;
        stale = 0;
      } else if (++stale >= std::max(options.patience, 25)) {
        break;
      }
    }
  } else {
    std::mt19937_64 rng(options.seed);
    Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    Eigen::MatrixXd m2 = m1;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double lr = options.learning_rate;
    long step = 0;
    std::vector<std::size_t> order = train;
    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(options.batch_size)) {
        const auto e = std::min(order.size(), b + static_cast<std::size_t>(options.batch_size));
        const Eigen::MatrixXd g = data.gradient(theta, gamma, std::span(order).subspan(b, e - b));
        ++step;
        m1 = b1 * m1 + (1 - b1) * g;
        m2 = b2 * m2 + (1 - b2) * g.cwiseProduct(g);
        const double c1 = 1 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1 - std::pow(b2, static_cast<double>(step));
        theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
      }
      res.train_loss.push_back(data.loss(theta, gamma, train));
      const double v = data.loss(theta, gamma, val);
      res.val_loss.push_back(v);
      if (v < res.best_val_loss) {
        res.best_val_loss = v;
        res.best_epoch = epoch;
        best = theta;
        stale = 0;
      } else if (++stale >= options.patience) {
        stale = 0;
        lr /= 10.0;
        if (lr < options.min_learning_rate * (1.0 - 1e-9)) break;
      }
    }
  }
  model.filters() = best;
  res.test_loss = data.loss(best, gamma, test);
  return res;
}

// ---------------------------------------------------------------------------
// aggregation and snapshots

void TrafficAggregator::add(const MatchRecord& record) {
  const auto n = static_cast<Eigen::Index>(net_->links().size());
  for (const auto& pm : record.probes) {
    if (!pm.matched) continue;
    auto [it, inserted] = counts_.try_emplace(interval_index(pm.t, interval_), Eigen::VectorXd());
    if (inserted) it->second = Eigen::VectorXd::Zero(n);
    it->second(static_cast<Eigen::Index>(net_->link_index(pm.edge.link))) += 1.0;
  }
}

std::optional<StateVector> TrafficAggregator::state(IntervalIndex j) const {
  auto it = counts_.find(j);
  if (it == counts_.end()) return std::nullopt;
  return state_from_counts(j, it->second);
}

std::vector<StateVector> TrafficAggregator::states() const {
  std::vector<StateVector> out;
  if (counts_.empty()) return out;
  const auto n = static_cast<Eigen::Index>(net_->links().size());
  for (IntervalIndex j = counts_.begin()->first; j <= counts_.rbegin()->first; ++j) {
    auto it = counts_.find(j);
    out.push_back(state_from_counts(j, it == counts_.end() ? Eigen::VectorXd::Zero(n) : it->second));
  }
  return out;
}

void TrafficAggregator::write_log(std::ostream& out) const {
  out << "interval_j,link_id,X\n";
  for (const auto& s : states())
    for (const auto& l : net_->links())
      out << s.interval << ',' << l.id << ',' << format_double(s.shares(static_cast<Eigen::Index>(l.dense_index)))
          << '\n';
}

PredictorKind parse_predictor(const std::string& s) {
  if (s == "none") return PredictorKind::kNone;
  if (s == "naive") return PredictorKind::kNaive;
  if (s == "sgmn") return PredictorKind::kSgmn;
  throw InputError("unknown predictor '" + s + "' (none|naive|sgmn)");
}

TrafficSnapshot::TrafficSnapshot(const TrafficAggregator& agg, const TrafficConfig& config, PredictorKind kind,
                                 std::optional<SgmnModel> model)
    : kind_(kind), config_(config), model_(std::move(model)) {
  if (kind_ == PredictorKind::kSgmn && !model_) throw std::invalid_argument("SGMN predictor requires a model");
  for (const auto& s : agg.states()) states_[s.interval] = s.shares;
}

std::optional<Eigen::VectorXd> TrafficSnapshot::predict_at(double t) const {
  if (kind_ == PredictorKind::kNone || states_.empty()) return std::nullopt;
  const IntervalIndex j = interval_index(t, config_.interval);
  std::lock_guard lock(cache_mutex_);
  if (auto it = cache_.find(j); it != cache_.end()) return it->second;

  const int k_max = kind_ == PredictorKind::kSgmn ? model_->k_max() : config_.k_max();
  const IntervalIndex first = states_.begin()->first;
  const auto n = states_.begin()->second.size();
  std::vector<Eigen::VectorXd> history;
  for (int k = 1; k <= k_max && j - k >= first; ++k) {
    auto it = states_.find(j - k);
    history.push_back(it != states_.end() ? it->second
                                          : Eigen::VectorXd(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))));
  }
  std::optional<Eigen::VectorXd> out;
  if (!history.empty()) {
    out = kind_ == PredictorKind::kSgmn ? model_->forward(history)
                                        : predict_naive(history, decay_weights(k_max, config_.decay));
  }
  cache_[j] = out;
  return out;
}

}  // namespace pcamm
