#pragma once

// Domain probe, proxy A-distance and the transfer ratio derived from it.

#include "transpar/model.hpp"

#include <cstdint>
#include <string>

#include <json.hpp>

namespace transpar::discrepancy {

using diff::Matrix;

enum class FeatureSource { FrozenInit, RawInput };

std::string to_string(FeatureSource source);
FeatureSource parse_feature_source(const std::string& name);

struct ProbeConfig {
  int epochs = 10;  // E'
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  int hidden = 16;
  // z-score probe inputs with probe-train statistics, so the measured error does not
  // depend on the scale of the feature space.
  bool standardize = true;
};

/// Two fully connected layers (in -> hidden -> 1) scoring P(source).
struct DomainProbe {
  Eigen::RowVectorXd mean;  // input shift/scale; empty means identity
  Eigen::RowVectorXd scale;
  Matrix w1, b1, w2, b2;
  /// Set when the held-out error exceeded 0.5 and the decision was flipped.
  bool complemented = false;

  [[nodiscard]] Matrix logits(const Matrix& features) const;
  /// 1 = source, 0 = target, after complementation.
  [[nodiscard]] std::vector<int> predict(const Matrix& features) const;
};

struct ClampedError {
  double err;
  bool complemented;
};

/// Errors above 0.5 are replaced by 1 - err (the complemented probe).
ClampedError clamp_probe_error(double raw_err);

struct ProbeResult {
  DomainProbe probe;
  double err = 0.5;      // clamped held-out error
  double raw_err = 0.5;  // held-out error before complementation
};

/// F(x) of the untrained network, or x itself for RawInput. Never mutates `net`.
Matrix frozen_features(const model::Network& net, const Matrix& x, FeatureSource source);

/// Labels source rows 1 and target rows 0, takes a seeded 80/20 split of the
/// union, trains with BCE and plain SGD for config.epochs epochs and reports
/// the held-out misclassification rate.
ProbeResult train_probe(const Matrix& source_features, const Matrix& target_features,
                        const ProbeConfig& config, std::uint64_t seed);

/// 1 - 2 err. Throws ConfigError outside err in [0, 0.5].
double proxy_a_distance(double err);

/// max(M, 1 - sigmoid(d_A)^2).
double transfer_ratio(double d_a, double floor_m);

struct TransferRatioEstimate {
  double err = 0.5;
  double d_a = 0.0;
  double tau = 0.75;
  double m = 0.1;
  int e_prime = 10;
  std::uint64_t probe_seed = 0;
  FeatureSource feature_source = FeatureSource::FrozenInit;
};

TransferRatioEstimate estimate_from_error(double err, double floor_m, int e_prime,
                                          std::uint64_t probe_seed, FeatureSource source);

nlohmann::ordered_json to_json(const TransferRatioEstimate& estimate);
TransferRatioEstimate ratio_from_json(const nlohmann::json& j);
void write_ratio(const TransferRatioEstimate& estimate, const std::string& path);
TransferRatioEstimate read_ratio(const std::string& path);

}  // namespace transpar::discrepancy
