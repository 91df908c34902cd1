#include "transpar/discrepancy.hpp"

#include "transpar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace transpar::discrepancy {

namespace {

constexpr std::uint64_t kProbeInit = 11;
constexpr std::uint64_t kProbeSplit = 12;
constexpr std::uint64_t kProbeEpoch = 13;

Matrix glorot(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
  return w;
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

std::string to_string(FeatureSource source) {
  return source == FeatureSource::FrozenInit ? "frozen_init" : "raw_input";
}

FeatureSource parse_feature_source(const std::string& name) {
  if (name == "frozen_init") return FeatureSource::FrozenInit;
  if (name == "raw_input") return FeatureSource::RawInput;
  throw ConfigError("unknown feature_source '" + name + "'");
}

Matrix DomainProbe::logits(const Matrix& features) const {
  Matrix x = features;
  if (mean.size() == x.cols()) x = ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  Matrix h = diff::relu_value(diff::affine_value(x, w1, b1));
  return diff::affine_value(h, w2, b2);
}

std::vector<int> DomainProbe::predict(const Matrix& features) const {
  const Matrix z = logits(features);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int raw = z(i, 0) > 0.0 ? 1 : 0;
    out[static_cast<std::size_t>(i)] = complemented ? 1 - raw : raw;
  }
  return out;
}

ClampedError clamp_probe_error(double raw_err) {
  if (raw_err > 0.5) return {1.0 - raw_err, true};
  return {raw_err, false};
}

Matrix frozen_features(const model::Network& net, const Matrix& x, FeatureSource source) {
  if (source == FeatureSource::RawInput) return x;
  return net.features(x);
}

ProbeResult train_probe(const Matrix& source_features, const Matrix& target_features,
                        const ProbeConfig& config, std::uint64_t seed) {
  if (source_features.rows() == 0 || target_features.rows() == 0) {
    throw ConfigError("train_probe: feature sets must be nonempty");
  }
  if (source_features.cols() != target_features.cols()) {
    throw ConfigError("train_probe: feature dimension mismatch");
  }
  if (config.epochs < 0 || config.batch_size == 0 || config.hidden < 1) {
    throw ConfigError("train_probe: invalid probe configuration");
  }

  const Eigen::Index n = source_features.rows() + target_features.rows();
  Matrix all(n, source_features.cols());
  all << source_features, target_features;
  std::vector<int> domain(static_cast<std::size_t>(n), 0);
  std::fill_n(domain.begin(), source_features.rows(), 1);

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(data::derive_seed(seed, kProbeSplit));
  std::shuffle(order.begin(), order.end(), split_rng);
  const std::size_t n_train = order.size() * 4 / 5;
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> held_rows(order.begin() + n_train, order.end());

  const Matrix raw = all;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  if (config.standardize) {
    const Matrix train = gather_rows(all, train_rows);
    mean = train.colwise().mean();
    const Matrix centered = train.rowwise() - mean;
    scale = (centered.array().square().colwise().sum() / static_cast<double>(train.rows()))
                .sqrt()
                .matrix();
    for (Eigen::Index k = 0; k < scale.size(); ++k) {
      if (scale(k) < 1e-12) scale(k) = 1.0;  // constant (e.g. dead ReLU) columns pass through
    }
    all = ((all.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }

  const int dim = static_cast<int>(all.cols());
  std::mt19937_64 init_rng(data::derive_seed(seed, kProbeInit));
  std::vector<Matrix> params{glorot(dim, config.hidden, init_rng), Matrix::Zero(1, config.hidden),
                             glorot(config.hidden, 1, init_rng), Matrix::Zero(1, 1)};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_rows;
    std::mt19937_64 epoch_rng(
        data::derive_seed(seed, kProbeEpoch + static_cast<std::uint64_t>(epoch) * 16));
    std::shuffle(epoch_order.begin(), epoch_order.end(), epoch_rng);
    for (std::size_t start = 0; start < epoch_order.size(); start += config.batch_size) {
      const std::size_t end = std::min(epoch_order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(epoch_order.data() + start, end - start);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(domain[r]);

      diff::Tape tape;
      std::vector<diff::NodeId> leaves;
      for (const auto& p : params) leaves.push_back(tape.leaf(p));
      const diff::NodeId x = tape.constant(gather_rows(all, rows));
      const diff::NodeId h = diff::relu(tape, diff::affine(tape, x, leaves[0], leaves[1]));
      const diff::NodeId z = diff::affine(tape, h, leaves[2], leaves[3]);
      tape.backward(diff::bce_with_logit(tape, z, labels));
      for (std::size_t k = 0; k < params.size(); ++k) {
        params[k] -= config.learning_rate * tape.grad(leaves[k]);
      }
    }
  }

  ProbeResult result;
  result.probe = DomainProbe{mean, scale, params[0], params[1], params[2], params[3], false};
  const Matrix held = gather_rows(raw, held_rows);
  const std::vector<int> predicted = result.probe.predict(held);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < held_rows.size(); ++i) {
    if (predicted[i] != domain[held_rows[i]]) ++wrong;
  }
  result.raw_err =
      held_rows.empty() ? 0.5 : static_cast<double>(wrong) / static_cast<double>(held_rows.size());
  const ClampedError clamped = clamp_probe_error(result.raw_err);
  result.err = clamped.err;
  result.probe.complemented = clamped.complemented;
  return result;
}

double proxy_a_distance(double err) {
  if (!(err >= 0.0 && err <= 0.5)) {
    throw ConfigError("proxy_a_distance: err must lie in [0, 0.5]");
  }
  return 1.0 - 2.0 * err;
}

double transfer_ratio(double d_a, double floor_m) {
  if (!(floor_m > 0.0 && floor_m < 1.0)) throw ConfigError("transfer_ratio: M must lie in (0,1)");
  const double s = 1.0 / (1.0 + std::exp(-d_a));
  return std::max(floor_m, 1.0 - s * s);
}

TransferRatioEstimate estimate_from_error(double err, double floor_m, int e_prime,
                                          std::uint64_t probe_seed, FeatureSource source) {
  TransferRatioEstimate e;
  e.err = err;
  e.d_a = proxy_a_distance(err);
  e.tau = transfer_ratio(e.d_a, floor_m);
  e.m = floor_m;
  e.e_prime = e_prime;
  e.probe_seed = probe_seed;
  e.feature_source = source;
  return e;
}

nlohmann::ordered_json to_json(const TransferRatioEstimate& e) {
  nlohmann::ordered_json j;
  j["err"] = e.err;
  j["d_A"] = e.d_a;
  j["tau"] = e.tau;
  j["M"] = e.m;
  j["E_prime"] = e.e_prime;
  j["probe_seed"] = e.probe_seed;
  j["feature_source"] = to_string(e.feature_source);
  return j;
}

TransferRatioEstimate ratio_from_json(const nlohmann::json& j) {
  try {
    TransferRatioEstimate e;
    e.err = j.at("err").get<double>();
    e.d_a = j.at("d_A").get<double>();
    e.tau = j.at("tau").get<double>();
    e.m = j.at("M").get<double>();
    e.e_prime = j.at("E_prime").get<int>();
    e.probe_seed = j.at("probe_seed").get<std::uint64_t>();
    e.feature_source = parse_feature_source(j.at("feature_source").get<std::string>());
    if (!(e.tau > 0.0 && e.tau <= 1.0)) throw ConfigError("ratio: tau must lie in (0, 1]");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("ratio file: ") + ex.what());
  }
}

void write_ratio(const TransferRatioEstimate& estimate, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write ratio file '" + path + "'");
  out << to_json(estimate).dump(2) << '\n';
}

TransferRatioEstimate read_ratio(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read ratio file '" + path + "'");
  try {
    return ratio_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError(std::string("ratio file: ") + ex.what());
  }
}

}  // namespace transpar::discrepancy
