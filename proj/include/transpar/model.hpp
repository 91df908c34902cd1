#pragma once

// Three-module UDA network: feature extractor F, source hypothesis C and a
// domain discriminator D placed behind gradient reversal.

#include "transpar/data.hpp"
#include "transpar/diffcore.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace transpar::model {

using diff::Matrix;

enum class ModuleRole { FeatureExtractor = 0, SourceHypothesis = 1, DomainDiscriminator = 2 };

inline constexpr std::array<ModuleRole, 3> kAllRoles{
    ModuleRole::FeatureExtractor, ModuleRole::SourceHypothesis, ModuleRole::DomainDiscriminator};

std::string to_string(ModuleRole role);
/// Short tag used in scopes and report columns: FE, SH, DD.
std::string short_name(ModuleRole role);
ModuleRole parse_role(const std::string& name);

struct NetworkConfig {
  int input_dim = 2;
  int hidden = 64;
  int classes = 2;
  int disc_hidden = 16;

  void validate() const;
};

struct Parameter {
  std::string name;
  ModuleRole role;
  Matrix value;
  Matrix grad;
};

class Network {
 public:
  Network() = default;
  Network(NetworkConfig config, std::vector<Parameter> params, std::uint64_t init_seed);

  [[nodiscard]] const NetworkConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t init_seed() const { return init_seed_; }
  [[nodiscard]] std::span<const Parameter> parameters() const { return params_; }
  [[nodiscard]] std::span<Parameter> parameters() { return params_; }
  [[nodiscard]] const Parameter& parameter(const std::string& name) const;

  /// F(x): relu(relu(x W1 + b1) W2 + b2).
  [[nodiscard]] Matrix features(const Matrix& x) const;
  /// C(F(x)).
  [[nodiscard]] Matrix class_logits(const Matrix& x) const;
  /// D(z) on already-extracted features.
  [[nodiscard]] Matrix domain_logits(const Matrix& features) const;

 private:
  NetworkConfig config_;
  std::vector<Parameter> params_;
  std::uint64_t init_seed_ = 0;
};

/// Glorot-uniform weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
Network init_network(const NetworkConfig& config, std::uint64_t seed);

/// Argmax of C(F(x)) per row; ties go to the lower class index.
std::vector<int> predict(const Network& net, const Matrix& x);
std::vector<int> argmax_rows(const Matrix& logits);

struct LossWeights {
  double alpha = 0.0;     // entropy weight; 0 drops the term from the objective
  double beta = 1.0;      // gradient-reversal coefficient
  bool domain = true;     // include L_d (false for source-only training)
};

struct UdaOutputs {
  Matrix source_class_logits;
  Matrix target_class_logits;
  Matrix domain_logits;  // source rows first, then target rows
  double loss_src = 0.0;
  double loss_ent = 0.0;
  double loss_dom = 0.0;  // 0 when the domain branch is disabled
  double total = 0.0;     // loss_src + alpha * loss_ent + loss_dom (when enabled)
};

/// Node handles for a UDA forward pass recorded on a tape.
struct UdaGraph {
  diff::NodeId loss_src;
  diff::NodeId loss_ent;
  std::optional<diff::NodeId> loss_dom;
  diff::NodeId total;
  diff::NodeId source_logits;
  diff::NodeId target_logits;
  std::optional<diff::NodeId> domain_logits;
};

/// Records the UDA objective on `tape` using `leaves`, one node per network
/// parameter in registry order.
UdaGraph record_uda(diff::Tape& tape, std::span<const diff::NodeId> leaves,
                    const NetworkConfig& config, const Matrix& source_x,
                    std::span<const int> source_y, const Matrix& target_x,
                    const LossWeights& weights);

/// Forward + backward for one pair of batches; leaves each parameter's grad
/// holding d(total)/d(param) with gradient reversal applied between F and D.
UdaOutputs forward_uda(Network& net, const data::Batch& source, const data::Batch& target,
                       const LossWeights& weights);

struct RegistryEntry {
  std::size_t param_id;  // index into Network::parameters()
  ModuleRole role;
  std::string tensor_name;
  std::size_t flat_index;
};

/// Stable role-tagged enumeration of every trainable scalar, with gather and
/// scatter of per-role flat weight and gradient vectors.
class ParameterRegistry {
 public:
  explicit ParameterRegistry(Network& net);

  [[nodiscard]] const std::vector<RegistryEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t count(ModuleRole role) const;
  [[nodiscard]] std::size_t total() const { return entries_.size(); }

  [[nodiscard]] Eigen::VectorXd weights(ModuleRole role) const;
  [[nodiscard]] Eigen::VectorXd gradients(ModuleRole role) const;
  void assign(ModuleRole role, const Eigen::VectorXd& weights);

  [[nodiscard]] Network& network() { return *net_; }

 private:
  Network* net_;
  std::vector<RegistryEntry> entries_;
  std::array<std::vector<std::size_t>, 3> params_by_role_;
};

inline ParameterRegistry registry(Network& net) { return ParameterRegistry(net); }

}  // namespace transpar::model
