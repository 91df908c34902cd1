#include "transpar/data.hpp"

#include "transpar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace transpar::data {

namespace {

constexpr std::uint64_t kSharedDraws = 1;
constexpr std::uint64_t kTargetDraws = 2;
constexpr std::uint64_t kSplit = 3;

struct RawDomain {
  Matrix x;
  std::vector<int> y;
};

// Exact per-class counts from proportions (largest remainder, ties to lower class).
std::vector<std::size_t> quota_counts(const std::vector<double>& proportions, std::size_t n) {
  std::vector<std::size_t> counts(proportions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    const double exact = proportions[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[remainders[r].second];
  return counts;
}

RawDomain draw_moons(const std::vector<std::size_t>& counts, double noise, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  RawDomain out{Matrix(static_cast<Eigen::Index>(n), 2), {}};
  out.y.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      const double t = angle(rng);
      double px = 0.0;
      double py = 0.0;
      if (k == 0) {
        px = std::cos(t);
        py = std::sin(t);
      } else {
        px = 1.0 - std::cos(t);
        py = 0.5 - std::sin(t);
      }
      const double nx = jitter(rng);
      const double ny = jitter(rng);
      out.x(row, 0) = px + noise * nx;
      out.x(row, 1) = py + noise * ny;
      out.y.push_back(static_cast<int>(k));
    }
  }
  return out;
}

RawDomain draw_blobs(const std::vector<std::size_t>& counts, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 1.0);
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  RawDomain out{Matrix(static_cast<Eigen::Index>(n), 2), {}};
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double center = k == 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      const double nx = jitter(rng);
      const double ny = jitter(rng);
      out.x(row, 0) = center + stddev * nx;
      out.x(row, 1) = stddev * ny;
      out.y.push_back(static_cast<int>(k));
    }
  }
  return out;
}

std::vector<std::size_t> balanced_counts(std::size_t n) { return {n / 2, n - n / 2}; }

DomainSplits split_domain(const RawDomain& raw, Domain domain, const ShiftScenario& scenario,
                          std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(raw.x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, kSplit));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = n * 4 / 5;
  auto take = [&](std::size_t begin, std::size_t end, Split split) {
    Matrix x(static_cast<Eigen::Index>(end - begin), raw.x.cols());
    std::vector<int> y;
    y.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      x.row(static_cast<Eigen::Index>(i - begin)) = raw.x.row(static_cast<Eigen::Index>(order[i]));
      y.push_back(raw.y[order[i]]);
    }
    return DomainDataset(std::move(x), std::move(y), domain, split, scenario, seed);
  };
  return DomainSplits{take(0, n_train, Split::Train), take(n_train, n, Split::Test)};
}

}  // namespace

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::TwoMoonsRotation: return "two_moons_rotation";
    case ShiftKind::GaussianTranslation: return "gaussian_translation";
    case ShiftKind::TargetLabelShift: return "target_label_shift";
  }
  return "unknown";
}

ShiftKind parse_shift_kind(const std::string& name) {
  if (name == "two_moons_rotation" || name == "two-moons-rot") return ShiftKind::TwoMoonsRotation;
  if (name == "gaussian_translation" || name == "gauss-trans") return ShiftKind::GaussianTranslation;
  if (name == "target_label_shift" || name == "label-shift") return ShiftKind::TargetLabelShift;
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

void ShiftScenario::validate() const {
  if (!(theta_deg >= 0.0 && theta_deg < 180.0)) {
    throw ConfigError("scenario: theta must lie in [0, 180)");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("scenario: noise must be >= 0");
  if (n_source < 10 || n_target < 10) throw ConfigError("scenario: counts must be >= 10");
  if (!translation.allFinite()) throw ConfigError("scenario: translation must be finite");
  if (static_cast<int>(target_proportions.size()) != classes()) {
    throw ConfigError("scenario: need one target proportion per class");
  }
  double total = 0.0;
  for (double p : target_proportions) {
    if (!(p >= 0.0)) throw ConfigError("scenario: proportions must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("scenario: proportions must sum to 1");
}

DomainDataset::DomainDataset(Matrix x, std::vector<int> y, Domain domain, Split split,
                             ShiftScenario scenario, std::uint64_t seed)
    : x_(std::move(x)),
      y_(std::move(y)),
      domain_(domain),
      split_(split),
      scenario_(std::move(scenario)),
      seed_(seed) {
  if (static_cast<std::size_t>(x_.rows()) != y_.size()) {
    throw ConfigError("dataset: feature rows and labels differ in length");
  }
}

const std::vector<int>& DomainDataset::labels() const {
  ++label_reads_;
  return y_;
}

int DomainDataset::label(std::size_t i) const {
  ++label_reads_;
  return y_.at(i);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GeneratedData generate(const ShiftScenario& scenario, std::uint64_t seed) {
  scenario.validate();

  RawDomain source;
  RawDomain target;
  switch (scenario.kind) {
    case ShiftKind::TwoMoonsRotation: {
      std::mt19937_64 src_rng(derive_seed(seed, kSharedDraws));
      source = draw_moons(balanced_counts(scenario.n_source), scenario.noise, src_rng);
      std::mt19937_64 tgt_rng(derive_seed(seed, kSharedDraws));
      target = draw_moons(balanced_counts(scenario.n_target), scenario.noise, tgt_rng);
      const double theta = scenario.theta_deg * std::numbers::pi / 180.0;
      Eigen::Matrix2d rotation;
      rotation << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
      // Row vectors: x' = x R^T. Zero rotation leaves the draws untouched.
      if (scenario.theta_deg != 0.0) target.x = target.x * rotation.transpose();
      break;
    }
    case ShiftKind::GaussianTranslation: {
      std::mt19937_64 src_rng(derive_seed(seed, kSharedDraws));
      source = draw_blobs(balanced_counts(scenario.n_source), scenario.noise, src_rng);
      std::mt19937_64 tgt_rng(derive_seed(seed, kSharedDraws));
      target = draw_blobs(balanced_counts(scenario.n_target), scenario.noise, tgt_rng);
      target.x.rowwise() += scenario.translation.transpose();
      break;
    }
    case ShiftKind::TargetLabelShift: {
      std::mt19937_64 src_rng(derive_seed(seed, kSharedDraws));
      source = draw_moons(balanced_counts(scenario.n_source), scenario.noise, src_rng);
      std::mt19937_64 tgt_rng(derive_seed(seed, kTargetDraws));
      target = draw_moons(quota_counts(scenario.target_proportions, scenario.n_target),
                          scenario.noise, tgt_rng);
      break;
    }
  }

  return GeneratedData{split_domain(source, Domain::Source, scenario, seed),
                       split_domain(target, Domain::Target, scenario, seed)};
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw ConfigError("standardize: source training split is empty");
  Standardizer s;
  s.mean = x.colwise().mean();
  s.stddev = ((x.rowwise() - s.mean).array().square().colwise().sum() /
              static_cast<double>(x.rows()))
                 .sqrt()
                 .matrix();
  for (Eigen::Index j = 0; j < s.stddev.size(); ++j) {
    if (s.stddev(j) < 1e-12) s.stddev(j) += 1e-8;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw ConfigError("standardize: feature count mismatch");
  Matrix out = x.rowwise() - mean;
  out.array().rowwise() /= stddev.array();
  return out;
}

Standardizer standardize(GeneratedData& data) {
  Standardizer s = Standardizer::fit(data.source.train.features());
  for (DomainDataset* d : {&data.source.train, &data.source.test, &data.target.train,
                           &data.target.test}) {
    d->mutable_features() = s.apply(d->features());
  }
  return s;
}

BatchIterator::BatchIterator(const DomainDataset& dataset, std::size_t batch_size,
                             std::uint64_t epoch_seed)
    : dataset_(&dataset), batch_size_(batch_size), order_(dataset.size()) {
  if (batch_size == 0) throw ConfigError("batches: batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch batch;
  const Matrix& x = dataset_->features();
  batch.x.resize(static_cast<Eigen::Index>(end - cursor_), x.cols());
  const bool with_labels = dataset_->domain() == Domain::Source;
  const std::vector<int>* y = with_labels ? &dataset_->labels() : nullptr;
  for (std::size_t i = cursor_; i < end; ++i) {
    const std::size_t idx = order_[i];
    batch.x.row(static_cast<Eigen::Index>(i - cursor_)) = x.row(static_cast<Eigen::Index>(idx));
    batch.indices.push_back(idx);
    batch.d.push_back(dataset_->domain_flag());
    if (y != nullptr) batch.y.push_back((*y)[idx]);
  }
  cursor_ = end;
  return batch;
}

BatchIterator batches(const DomainDataset& dataset, std::size_t batch_size,
                      std::uint64_t epoch_seed) {
  return BatchIterator(dataset, batch_size, epoch_seed);
}

}  // namespace transpar::data
