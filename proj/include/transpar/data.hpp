#pragma once

// Synthetic source/target datasets under named distribution shifts.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace transpar::data {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Domain { Target = 0, Source = 1 };
enum class Split { Train, Test };
enum class ShiftKind { TwoMoonsRotation, GaussianTranslation, TargetLabelShift };

std::string to_string(ShiftKind kind);
/// Accepts both the JSON names (two_moons_rotation) and the CLI names (two-moons-rot).
ShiftKind parse_shift_kind(const std::string& name);
std::string to_string(Split split);

struct ShiftScenario {
  ShiftKind kind = ShiftKind::TwoMoonsRotation;
  double theta_deg = 30.0;                     // two_moons_rotation
  Eigen::Vector2d translation{2.0, 0.0};       // gaussian_translation
  std::vector<double> target_proportions{0.5, 0.5};  // target_label_shift
  double noise = 0.1;
  std::size_t n_source = 1000;
  std::size_t n_target = 1000;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  [[nodiscard]] int classes() const { return 2; }
};

/// One domain, one split. Labels are always stored but every read through
/// labels() or label() is counted, so training code can prove it never looked
/// at target labels.
class DomainDataset {
 public:
  DomainDataset() = default;
  DomainDataset(Matrix x, std::vector<int> y, Domain domain, Split split, ShiftScenario scenario,
                std::uint64_t seed);

  [[nodiscard]] const Matrix& features() const { return x_; }
  Matrix& mutable_features() { return x_; }
  [[nodiscard]] const std::vector<int>& labels() const;
  [[nodiscard]] int label(std::size_t i) const;
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
  [[nodiscard]] bool empty() const { return size() == 0; }
  [[nodiscard]] Domain domain() const { return domain_; }
  [[nodiscard]] int domain_flag() const { return static_cast<int>(domain_); }
  [[nodiscard]] Split split() const { return split_; }
  [[nodiscard]] const ShiftScenario& scenario() const { return scenario_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::size_t label_reads() const { return label_reads_; }

 private:
  Matrix x_;
  std::vector<int> y_;
  Domain domain_ = Domain::Source;
  Split split_ = Split::Train;
  ShiftScenario scenario_;
  std::uint64_t seed_ = 0;
  mutable std::size_t label_reads_ = 0;
};

struct DomainSplits {
  DomainDataset train;
  DomainDataset test;
};

struct GeneratedData {
  DomainSplits source;
  DomainSplits target;
};

/// Deterministic in (scenario, seed). For covariate-shift scenarios the
/// target is the shifted image of the same underlying draws as the source,
/// so zero shift yields sample-for-sample identical domains.
GeneratedData generate(const ShiftScenario& scenario, std::uint64_t seed);

/// Per-feature affine map fitted on one dataset.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;

  static Standardizer fit(const Matrix& x);
  [[nodiscard]] Matrix apply(const Matrix& x) const;
};

/// Fits on the source training split only and applies to every split.
Standardizer standardize(GeneratedData& data);

struct Batch {
  Matrix x;
  std::vector<int> y;  // empty for target batches
  std::vector<int> d;
  std::vector<std::size_t> indices;
};

/// Single-consumer iterator over one seeded shuffle of a dataset. The last
/// partial batch is included. Target batches carry no labels.
class BatchIterator {
 public:
  BatchIterator(const DomainDataset& dataset, std::size_t batch_size, std::uint64_t epoch_seed);

  std::optional<Batch> next();
  [[nodiscard]] std::size_t batch_count() const;

 private:
  const DomainDataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

BatchIterator batches(const DomainDataset& dataset, std::size_t batch_size,
                      std::uint64_t epoch_seed);

/// Mixes a base seed with a stream tag (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace transpar::data
