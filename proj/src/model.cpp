#include "transpar/model.hpp"

#include "transpar/errors.hpp"

#include <cmath>
#include <random>

namespace transpar::model {

namespace {

// Parameter order is fixed: F.W1 F.b1 F.W2 F.b2 C.W C.b D.W1 D.b1 D.W2 D.b2.
enum ParamIndex : std::size_t { kFW1, kFb1, kFW2, kFb2, kCW, kCb, kDW1, kDb1, kDW2, kDb2, kCount };

const Matrix& value(const std::vector<Parameter>& params, std::size_t i) { return params[i].value; }

}  // namespace

std::string to_string(ModuleRole role) {
  switch (role) {
    case ModuleRole::FeatureExtractor: return "FeatureExtractor";
    case ModuleRole::SourceHypothesis: return "SourceHypothesis";
    case ModuleRole::DomainDiscriminator: return "DomainDiscriminator";
  }
  return "unknown";
}

std::string short_name(ModuleRole role) {
  switch (role) {
    case ModuleRole::FeatureExtractor: return "FE";
    case ModuleRole::SourceHypothesis: return "SH";
    case ModuleRole::DomainDiscriminator: return "DD";
  }
  return "??";
}

ModuleRole parse_role(const std::string& name) {
  for (ModuleRole role : kAllRoles) {
    if (name == to_string(role) || name == short_name(role)) return role;
  }
  throw ConfigError("unknown module role '" + name + "'");
}

void NetworkConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || classes < 1 || disc_hidden < 1) {
    throw ConfigError("network: all dimensions must be >= 1");
  }
}

Network::Network(NetworkConfig config, std::vector<Parameter> params, std::uint64_t init_seed)
    : config_(config), params_(std::move(params)), init_seed_(init_seed) {
  config_.validate();
  if (params_.size() != kCount) throw ConfigError("network: expected 10 parameter tensors");
  const std::array<std::pair<Eigen::Index, Eigen::Index>, kCount> shapes{{
      {config_.input_dim, config_.hidden},
      {1, config_.hidden},
      {config_.hidden, config_.hidden},
      {1, config_.hidden},
      {config_.hidden, config_.classes},
      {1, config_.classes},
      {config_.hidden, config_.disc_hidden},
      {1, config_.disc_hidden},
      {config_.disc_hidden, 1},
      {1, 1},
  }};
  for (std::size_t i = 0; i < kCount; ++i) {
    if (params_[i].value.rows() != shapes[i].first || params_[i].value.cols() != shapes[i].second) {
      throw ConfigError("network: tensor '" + params_[i].name + "' has shape " +
                        std::to_string(params_[i].value.rows()) + "x" +
                        std::to_string(params_[i].value.cols()) + ", expected " +
                        std::to_string(shapes[i].first) + "x" + std::to_string(shapes[i].second));
    }
    params_[i].grad = Matrix::Zero(shapes[i].first, shapes[i].second);
  }
}

const Parameter& Network::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("network: no parameter named '" + name + "'");
}

Matrix Network::features(const Matrix& x) const {
  if (x.cols() != config_.input_dim) throw ConfigError("network: input dimension mismatch");
  Matrix h = diff::relu_value(diff::affine_value(x, value(params_, kFW1), value(params_, kFb1)));
  return diff::relu_value(diff::affine_value(h, value(params_, kFW2), value(params_, kFb2)));
}

Matrix Network::class_logits(const Matrix& x) const {
  return diff::affine_value(features(x), value(params_, kCW), value(params_, kCb));
}

Matrix Network::domain_logits(const Matrix& feats) const {
  Matrix h =
      diff::relu_value(diff::affine_value(feats, value(params_, kDW1), value(params_, kDb1)));
  return diff::affine_value(h, value(params_, kDW2), value(params_, kDb2));
}

Network init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<Parameter> params;
  auto layer = [&](const std::string& prefix, ModuleRole role, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    params.push_back({prefix + ".weight", role, std::move(w), {}});
    params.push_back({prefix + ".bias", role, Matrix::Zero(1, fan_out), {}});
  };
  layer("F.fc1", ModuleRole::FeatureExtractor, config.input_dim, config.hidden);
  layer("F.fc2", ModuleRole::FeatureExtractor, config.hidden, config.hidden);
  layer("C.fc", ModuleRole::SourceHypothesis, config.hidden, config.classes);
  layer("D.fc1", ModuleRole::DomainDiscriminator, config.hidden, config.disc_hidden);
  layer("D.fc2", ModuleRole::DomainDiscriminator, config.disc_hidden, 1);
  return Network(config, std::move(params), seed);
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(i, k) > logits(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Network& net, const Matrix& x) {
  return argmax_rows(net.class_logits(x));
}

UdaGraph record_uda(diff::Tape& tape, std::span<const diff::NodeId> leaves,
                    const NetworkConfig& config, const Matrix& source_x,
                    std::span<const int> source_y, const Matrix& target_x,
                    const LossWeights& weights) {
  using namespace diff;
  if (leaves.size() != kCount) throw ConfigError("record_uda: expected 10 parameter leaves");
  if (source_x.rows() == 0 || target_x.rows() == 0) {
    throw ConfigError("forward_uda: batches must be nonempty");
  }
  if (source_x.cols() != config.input_dim || target_x.cols() != config.input_dim) {
    throw ConfigError("forward_uda: input dimension mismatch");
  }

  auto extract = [&](NodeId x) {
    NodeId h = relu(tape, affine(tape, x, leaves[kFW1], leaves[kFb1]));
    return relu(tape, affine(tape, h, leaves[kFW2], leaves[kFb2]));
  };
  const NodeId fs = extract(tape.constant(source_x));
  const NodeId ft = extract(tape.constant(target_x));

  UdaGraph g;
  g.source_logits = affine(tape, fs, leaves[kCW], leaves[kCb]);
  g.target_logits = affine(tape, ft, leaves[kCW], leaves[kCb]);
  g.loss_src = softmax_cross_entropy(tape, g.source_logits, source_y);
  g.loss_ent = entropy_loss(tape, g.target_logits);
  g.total = g.loss_src;
  if (weights.alpha != 0.0) g.total = add(tape, g.total, scale(tape, g.loss_ent, weights.alpha));

  if (weights.domain) {
    const NodeId reversed = gradient_reversal(tape, concat_rows(tape, fs, ft), weights.beta);
    const NodeId hd = relu(tape, affine(tape, reversed, leaves[kDW1], leaves[kDb1]));
    g.domain_logits = affine(tape, hd, leaves[kDW2], leaves[kDb2]);
    std::vector<int> domain_labels(static_cast<std::size_t>(source_x.rows()), 1);
    domain_labels.resize(domain_labels.size() + static_cast<std::size_t>(target_x.rows()), 0);
    g.loss_dom = bce_with_logit(tape, *g.domain_logits, domain_labels);
    g.total = add(tape, g.total, *g.loss_dom);
  }
  return g;
}

UdaOutputs forward_uda(Network& net, const data::Batch& source, const data::Batch& target,
                       const LossWeights& weights) {
  diff::Tape tape;
  std::vector<diff::NodeId> leaves;
  leaves.reserve(net.parameters().size());
  for (const auto& p : net.parameters()) leaves.push_back(tape.leaf(p.value));

  const UdaGraph g = record_uda(tape, leaves, net.config(), source.x, source.y, target.x, weights);
  tape.backward(g.total);

  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad = tape.grad(leaves[i]);

  UdaOutputs out;
  out.source_class_logits = tape.value(g.source_logits);
  out.target_class_logits = tape.value(g.target_logits);
  if (g.domain_logits) out.domain_logits = tape.value(*g.domain_logits);
  out.loss_src = tape.scalar(g.loss_src);
  out.loss_ent = tape.scalar(g.loss_ent);
  out.loss_dom = g.loss_dom ? tape.scalar(*g.loss_dom) : 0.0;
  out.total = tape.scalar(g.total);
  return out;
}

ParameterRegistry::ParameterRegistry(Network& net) : net_(&net) {
  const auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    params_by_role_[static_cast<std::size_t>(params[p].role)].push_back(p);
  }
  // Role-major order so each role's flat vector is contiguous in entries().
  for (ModuleRole role : kAllRoles) {
    for (std::size_t p : params_by_role_[static_cast<std::size_t>(role)]) {
      for (Eigen::Index k = 0; k < params[p].value.size(); ++k) {
        entries_.push_back({p, role, params[p].name, static_cast<std::size_t>(k)});
      }
    }
  }
}

std::size_t ParameterRegistry::count(ModuleRole role) const {
  std::size_t n = 0;
  for (std::size_t p : params_by_role_[static_cast<std::size_t>(role)]) {
    n += static_cast<std::size_t>(net_->parameters()[p].value.size());
  }
  return n;
}

Eigen::VectorXd ParameterRegistry::weights(ModuleRole role) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(count(role)));
  Eigen::Index offset = 0;
  for (std::size_t p : params_by_role_[static_cast<std::size_t>(role)]) {
    const Matrix& v = net_->parameters()[p].value;
    out.segment(offset, v.size()) = v.reshaped<Eigen::RowMajor>();
    offset += v.size();
  }
  return out;
}

Eigen::VectorXd ParameterRegistry::gradients(ModuleRole role) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(count(role)));
  Eigen::Index offset = 0;
  for (std::size_t p : params_by_role_[static_cast<std::size_t>(role)]) {
    const Matrix& g = net_->parameters()[p].grad;
    out.segment(offset, g.size()) = g.reshaped<Eigen::RowMajor>();
    offset += g.size();
  }
  return out;
}

void ParameterRegistry::assign(ModuleRole role, const Eigen::VectorXd& weights) {
  if (static_cast<std::size_t>(weights.size()) != count(role)) {
    throw ConfigError("registry: weight vector length mismatch for " + to_string(role));
  }
  if (!weights.allFinite()) throw NumericFailure("registry: non-finite weight update");
  Eigen::Index offset = 0;
  for (std::size_t p : params_by_role_[static_cast<std::size_t>(role)]) {
    Matrix& v = net_->parameters()[p].value;
    v.reshaped<Eigen::RowMajor>() = weights.segment(offset, v.size());
    offset += v.size();
  }
}

}  // namespace transpar::model
