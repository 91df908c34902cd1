#pragma once

// Transferable-parameter optimizer: per-iteration importance scoring,
// per-module top-k partitioning and the two update rules.

#include "transpar/errors.hpp"
#include "transpar/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <string>

namespace transpar::optim {

using model::ModuleRole;
using model::ParameterRegistry;

enum class Criterion { Both, WeightOnly, GradOnly };
enum class MaskMode { Iterative, OneShotStart, OneShotLast };

std::string to_string(Criterion criterion);
std::string to_string(MaskMode mode);
Criterion parse_criterion(const std::string& name);
MaskMode parse_mask_mode(const std::string& name);

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// T_i = |g_i w_i| (Both), |w_i| (WeightOnly) or |g_i| (GradOnly).
template <typename W, typename G>
Eigen::VectorXd importance(const Eigen::MatrixBase<W>& weights, const Eigen::MatrixBase<G>& grads,
                           Criterion criterion);

/// Number of transferable scalars of a module with m scalars:
/// floor(tau m) for F and C, and for D floor((1 - tau) m) when it is trained
/// adversarially. Clamped to [1, m].
std::size_t partition_count(std::size_t m, double tau, ModuleRole role, bool adversarial);

/// Flags the m_t largest scores; equal scores go to the lower index.
Mask partition(const Eigen::VectorXd& scores, std::size_t m_t);

/// w - eta (g + lambda sgn(w)), sgn(0) = 0.
template <typename W, typename G>
typename W::PlainObject positive_update(const Eigen::MatrixBase<W>& w,
                                        const Eigen::MatrixBase<G>& g, double eta, double lambda) {
  return w - eta * (g + lambda * w.cwiseSign());
}
double positive_update(double w, double g, double eta, double lambda);

/// sgn(w) max(0, |w| - eta lambda): gradient-free decay that stops at zero.
template <typename W>
typename W::PlainObject negative_update(const Eigen::MatrixBase<W>& w, double eta, double lambda) {
  const double step = eta * lambda;
  return ((w.array().abs() - step).max(0.0) * w.array().sign()).matrix();
}
double negative_update(double w, double eta, double lambda);

struct UpdateConfig {
  double eta = 0.01;
  double lambda = 0.002;
  Criterion criterion = Criterion::Both;
  MaskMode mode = MaskMode::Iterative;

  void validate() const;
};

struct PartitionSpec {
  std::array<std::size_t, 3> m{};
  std::array<std::size_t, 3> m_t{};
  double tau = 1.0;
  bool adversarial = true;

  /// Counts from the registry via partition_count. `force_full` sets m_t = m
  /// for every role, which reduces the optimizer to plain SGD.
  static PartitionSpec from(const ParameterRegistry& registry, double tau, bool adversarial,
                            bool force_full = false);
  [[nodiscard]] std::size_t total(ModuleRole role) const { return m[idx(role)]; }
  [[nodiscard]] std::size_t transferable(ModuleRole role) const { return m_t[idx(role)]; }
  static std::size_t idx(ModuleRole role) { return static_cast<std::size_t>(role); }
};

struct PartitionMask {
  ModuleRole role = ModuleRole::FeatureExtractor;
  Mask transferable;
  std::size_t iteration = 0;
  MaskMode mode = MaskMode::Iterative;

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(transferable.count());
  }
};

using RoleSet = std::array<bool, 3>;
inline constexpr RoleSet kAllScope{true, true, true};

struct StepRecord {
  std::size_t iteration = 0;
  /// Masks used this step; empty for roles updated with plain SGD.
  std::array<std::optional<PartitionMask>, 3> masks;
  /// Mean |w| over each role's untransferable set after the update (0 if empty).
  std::array<double, 3> untransferable_mean_abs{};
};

/// Plain SGD with signed weight decay on every trainable scalar.
void sgd_step(ParameterRegistry& registry, double eta, double lambda);

/// One optimizer step over all three roles. Roles outside `scope` use plain
/// SGD. Iterative recomputes masks every call, OneShotStart freezes the first
/// masks, OneShotLast trains with plain SGD and zeroes the untransferable
/// weights of the last step's masks in finalize().
class TransparOptimizer {
 public:
  TransparOptimizer(UpdateConfig config, PartitionSpec spec, RoleSet scope = kAllScope);

  StepRecord step(ParameterRegistry& registry);
  /// Only acts in OneShotLast mode; returns the record of the zeroing.
  std::optional<StepRecord> finalize(ParameterRegistry& registry);

  [[nodiscard]] const UpdateConfig& config() const { return config_; }
  [[nodiscard]] const PartitionSpec& spec() const { return spec_; }
  [[nodiscard]] const RoleSet& scope() const { return scope_; }
  [[nodiscard]] std::size_t iterations() const { return iteration_; }

 private:
  UpdateConfig config_;
  PartitionSpec spec_;
  RoleSet scope_;
  std::size_t iteration_ = 0;
  std::array<std::optional<PartitionMask>, 3> frozen_;
  std::array<Eigen::VectorXd, 3> last_scores_;
};

template <typename W, typename G>
Eigen::VectorXd importance(const Eigen::MatrixBase<W>& weights, const Eigen::MatrixBase<G>& grads,
                           Criterion criterion) {
  if (weights.size() != grads.size()) {
    throw ConfigError("importance: weights and gradients differ in length");
  }
  switch (criterion) {
    case Criterion::WeightOnly: return weights.cwiseAbs();
    case Criterion::GradOnly: return grads.cwiseAbs();
    case Criterion::Both: break;
  }
  return weights.cwiseProduct(grads).cwiseAbs();
}

}  // namespace transpar::optim
