#include "transpar/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace transpar::optim {

namespace {

double mean_abs_untransferable(const Eigen::VectorXd& w, const Mask& mask) {
  double total = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!mask(i)) {
      total += std::abs(w(i));
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericFailure(std::string("optimizer: non-finite ") + what);
}

}  // namespace

std::string to_string(Criterion criterion) {
  switch (criterion) {
    case Criterion::Both: return "both";
    case Criterion::WeightOnly: return "weight_only";
    case Criterion::GradOnly: return "grad_only";
  }
  return "unknown";
}

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::Iterative: return "iterative";
    case MaskMode::OneShotStart: return "one_shot_start";
    case MaskMode::OneShotLast: return "one_shot_last";
  }
  return "unknown";
}

Criterion parse_criterion(const std::string& name) {
  if (name == "both") return Criterion::Both;
  if (name == "weight_only") return Criterion::WeightOnly;
  if (name == "grad_only") return Criterion::GradOnly;
  throw ConfigError("unknown criterion '" + name + "'");
}

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "iterative") return MaskMode::Iterative;
  if (name == "one_shot_start") return MaskMode::OneShotStart;
  if (name == "one_shot_last") return MaskMode::OneShotLast;
  throw ConfigError("unknown mode '" + name + "'");
}

std::size_t partition_count(std::size_t m, double tau, ModuleRole role, bool adversarial) {
  if (m == 0) throw ConfigError("partition_count: module has no parameters");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("partition_count: tau must lie in (0, 1]");
  const double ratio =
      (role == ModuleRole::DomainDiscriminator && adversarial) ? 1.0 - tau : tau;
  const double raw = std::floor(ratio * static_cast<double>(m));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 0.0)), 1, m);
}

Mask partition(const Eigen::VectorXd& scores, std::size_t m_t) {
  const auto m = static_cast<std::size_t>(scores.size());
  if (m_t < 1 || m_t > m) throw ConfigError("partition: m_t must lie in [1, m]");
  require_finite(scores, "importance score");
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto better = [&scores](Eigen::Index a, Eigen::Index b) {
    return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m_t - 1),
                   order.end(), better);
  Mask mask = Mask::Constant(static_cast<Eigen::Index>(m), false);
  for (std::size_t k = 0; k < m_t; ++k) mask(order[k]) = true;
  return mask;
}

double positive_update(double w, double g, double eta, double lambda) {
  const double sgn = static_cast<double>((w > 0.0) - (w < 0.0));
  return w - eta * (g + lambda * sgn);
}

double negative_update(double w, double eta, double lambda) {
  const double sgn = static_cast<double>((w > 0.0) - (w < 0.0));
  return std::max(std::abs(w) - eta * lambda, 0.0) * sgn;
}

void UpdateConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("update: eta must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("update: lambda must be >= 0");
}

PartitionSpec PartitionSpec::from(const ParameterRegistry& registry, double tau, bool adversarial,
                                  bool force_full) {
  PartitionSpec spec;
  spec.tau = tau;
  spec.adversarial = adversarial;
  for (ModuleRole role : model::kAllRoles) {
    const std::size_t m = registry.count(role);
    spec.m[idx(role)] = m;
    spec.m_t[idx(role)] = force_full ? m : partition_count(m, tau, role, adversarial);
  }
  return spec;
}

void sgd_step(ParameterRegistry& registry, double eta, double lambda) {
  for (ModuleRole role : model::kAllRoles) {
    const Eigen::VectorXd w = registry.weights(role);
    const Eigen::VectorXd g = registry.gradients(role);
    require_finite(g, "gradient");
    registry.assign(role, positive_update(w, g, eta, lambda));
  }
}

TransparOptimizer::TransparOptimizer(UpdateConfig config, PartitionSpec spec, RoleSet scope)
    : config_(config), spec_(spec), scope_(scope) {
  config_.validate();
}

StepRecord TransparOptimizer::step(ParameterRegistry& registry) {
  ++iteration_;
  StepRecord record;
  record.iteration = iteration_;

  for (ModuleRole role : model::kAllRoles) {
    const std::size_t r = PartitionSpec::idx(role);
    const Eigen::VectorXd w = registry.weights(role);
    const Eigen::VectorXd g = registry.gradients(role);
    require_finite(g, "gradient");

    if (!scope_[r] || config_.mode == MaskMode::OneShotLast) {
      if (scope_[r]) last_scores_[r] = importance(w, g, config_.criterion);
      registry.assign(role, positive_update(w, g, config_.eta, config_.lambda));
      continue;
    }

    PartitionMask mask;
    if (config_.mode == MaskMode::OneShotStart && frozen_[r]) {
      mask = *frozen_[r];
    } else {
      mask.role = role;
      mask.mode = config_.mode;
      mask.iteration = iteration_;
      mask.transferable = partition(importance(w, g, config_.criterion), spec_.m_t[r]);
      if (config_.mode == MaskMode::OneShotStart) frozen_[r] = mask;
    }

    const Eigen::VectorXd updated =
        mask.transferable.select(positive_update(w, g, config_.eta, config_.lambda),
                                 negative_update(w, config_.eta, config_.lambda));
    registry.assign(role, updated);
    record.untransferable_mean_abs[r] = mean_abs_untransferable(updated, mask.transferable);
    record.masks[r] = std::move(mask);
  }
  return record;
}

std::optional<StepRecord> TransparOptimizer::finalize(ParameterRegistry& registry) {
  if (config_.mode != MaskMode::OneShotLast || iteration_ == 0) return std::nullopt;
  StepRecord record;
  record.iteration = iteration_;
  for (ModuleRole role : model::kAllRoles) {
    const std::size_t r = PartitionSpec::idx(role);
    if (!scope_[r]) continue;
    PartitionMask mask{role, partition(last_scores_[r], spec_.m_t[r]), iteration_,
                       MaskMode::OneShotLast};
    const Eigen::VectorXd w = registry.weights(role);
    const Eigen::VectorXd zeroed = mask.transferable.select(w, Eigen::VectorXd::Zero(w.size()));
    registry.assign(role, zeroed);
    record.untransferable_mean_abs[r] = 0.0;
    record.masks[r] = std::move(mask);
  }
  return record;
}

}  // namespace transpar::optim
