#include "transpar/diffcore.hpp"

#include "transpar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace transpar::diff {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Affine: return "affine";
    case Op::Relu: return "relu";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::Entropy: return "entropy_loss";
    case Op::BceWithLogit: return "bce_with_logit";
    case Op::GradientReversal: return "gradient_reversal";
    case Op::Add: return "add";
    case Op::Scale: return "scale";
    case Op::Mul: return "mul";
    case Op::Sum: return "sum";
    case Op::ConcatRows: return "concat_rows";
  }
  return "unknown";
}

void require_finite(const Matrix& m, Op op, const char* what) {
  if (!m.allFinite()) {
    throw NumericFailure(std::string("non-finite ") + what + " in " + op_name(op));
  }
}

TensorNode make_node(Op op, std::vector<std::size_t> parents, Matrix value) {
  TensorNode node;
  node.op = op;
  node.parents = std::move(parents);
  node.value = std::move(value);
  return node;
}

void check_labels(std::span<const int> labels, Eigen::Index rows, int classes, const char* op) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ConfigError(std::string(op) + ": label count " + std::to_string(labels.size()) +
                      " does not match " + std::to_string(rows) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      throw ConfigError(std::string(op) + ": label " + std::to_string(label) +
                        " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Matrix affine_value(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  Matrix out = x * weight;
  out.rowwise() += bias.row(0);
  return out;
}

Matrix relu_value(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double shift = logits.row(i).maxCoeff();
    const double lse = shift + std::log((logits.row(i).array() - shift).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.size() != 1) throw ConfigError("scalar(): node is not 1x1");
  return v(0, 0);
}

NodeId Tape::push(TensorNode node) {
  for (std::size_t parent : node.parents) {
    if (parent >= nodes_.size()) throw ConfigError("tape: parent id refers to a later node");
  }
  require_finite(node.value, node.op, "value");
  node.id = nodes_.size();
  node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::leaf(Matrix value) {
  NodeId id = push(make_node(Op::Leaf, {}, std::move(value)));
  leaf_ids_.push_back(id.index);
  return id;
}

NodeId Tape::constant(Matrix value) { return push(make_node(Op::Constant, {}, std::move(value))); }

void Tape::zero_grad() {
  for (auto& node : nodes_) node.grad.setZero();
}

void Tape::backward(NodeId root) {
  if (root.index >= nodes_.size()) throw ConfigError("backward: unknown root");
  if (nodes_[root.index].value.size() != 1) {
    throw ConfigError("backward: root must be a scalar");
  }
  zero_grad();
  nodes_[root.index].grad(0, 0) = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    propagate(nodes_[i]);
  }
  for (const auto& node : nodes_) require_finite(node.grad, node.op, "gradient");
}

void Tape::propagate(const TensorNode& node) {
  const Matrix& g = node.grad;
  auto parent = [&](std::size_t k) -> TensorNode& { return nodes_[node.parents[k]]; };

  switch (node.op) {
    case Op::Leaf:
    case Op::Constant:
      break;
    case Op::Affine: {
      TensorNode& x = parent(0);
      TensorNode& w = parent(1);
      TensorNode& b = parent(2);
      x.grad.noalias() += g * w.value.transpose();
      w.grad.noalias() += x.value.transpose() * g;
      b.grad.row(0) += g.colwise().sum();
      break;
    }
    case Op::Relu: {
      TensorNode& x = parent(0);
      x.grad.array() += (x.value.array() > 0.0).select(g.array(), 0.0);
      break;
    }
    case Op::SoftmaxCrossEntropy: {
      // d/dlogits = (softmax - onehot) / n
      TensorNode& logits = parent(0);
      const double n = static_cast<double>(logits.rows());
      Matrix delta = node.cache;
      for (Eigen::Index i = 0; i < delta.rows(); ++i) delta(i, node.labels[i]) -= 1.0;
      logits.grad += (g(0, 0) / n) * delta;
      break;
    }
    case Op::Entropy: {
      // dH/dz_j = -p_j (log p_j + H) per row, averaged over rows.
      TensorNode& logits = parent(0);
      const double n = static_cast<double>(logits.rows());
      const Matrix& p = node.cache;
      const Matrix& logp = node.cache2;
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double h = -(p.row(i).array() * logp.row(i).array()).sum();
        logits.grad.row(i).array() +=
            (g(0, 0) / n) * (-(p.row(i).array() * (logp.row(i).array() + h)));
      }
      break;
    }
    case Op::BceWithLogit: {
      TensorNode& logit = parent(0);
      const double n = static_cast<double>(logit.rows());
      for (Eigen::Index i = 0; i < logit.rows(); ++i) {
        logit.grad(i, 0) += (g(0, 0) / n) * (node.cache(i, 0) - node.labels[i]);
      }
      break;
    }
    case Op::GradientReversal:
      parent(0).grad += (-node.coeff) * g;
      break;
    case Op::Add:
      parent(0).grad += g;
      parent(1).grad += g;
      break;
    case Op::Scale:
      parent(0).grad += node.coeff * g;
      break;
    case Op::Mul: {
      TensorNode& a = parent(0);
      TensorNode& b = parent(1);
      a.grad.array() += g.array() * b.value.array();
      b.grad.array() += g.array() * a.value.array();
      break;
    }
    case Op::Sum:
      parent(0).grad.array() += g(0, 0);
      break;
    case Op::ConcatRows: {
      TensorNode& top = parent(0);
      TensorNode& bottom = parent(1);
      top.grad += g.topRows(top.rows());
      bottom.grad += g.bottomRows(bottom.rows());
      break;
    }
  }
}

NodeId affine(Tape& tape, NodeId x, NodeId weight, NodeId bias) {
  const Matrix& xv = tape.value(x);
  const Matrix& wv = tape.value(weight);
  const Matrix& bv = tape.value(bias);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ConfigError("affine: shape mismatch x[" + std::to_string(xv.rows()) + "x" +
                      std::to_string(xv.cols()) + "] W[" + std::to_string(wv.rows()) + "x" +
                      std::to_string(wv.cols()) + "] b[" + std::to_string(bv.rows()) + "x" +
                      std::to_string(bv.cols()) + "]");
  }
  return tape.push(make_node(Op::Affine, {x.index, weight.index, bias.index},
                             affine_value(xv, wv, bv)));
}

NodeId relu(Tape& tape, NodeId x) {
  return tape.push(make_node(Op::Relu, {x.index}, relu_value(tape.value(x))));
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::span<const int> labels) {
  const Matrix& z = tape.value(logits);
  check_labels(labels, z.rows(), static_cast<int>(z.cols()), "softmax_cross_entropy");
  if (z.rows() == 0) throw ConfigError("softmax_cross_entropy: empty batch");
  Matrix logp = log_softmax_rows(z);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) total -= logp(i, labels[i]);
  TensorNode node = make_node(Op::SoftmaxCrossEntropy, {logits.index},
                              Matrix::Constant(1, 1, total / static_cast<double>(z.rows())));
  node.labels.assign(labels.begin(), labels.end());
  node.cache = logp.array().exp().matrix();
  return tape.push(std::move(node));
}

NodeId entropy_loss(Tape& tape, NodeId logits) {
  const Matrix& z = tape.value(logits);
  if (z.rows() == 0) throw ConfigError("entropy_loss: empty batch");
  Matrix logp = log_softmax_rows(z);
  Matrix p = logp.array().exp().matrix();
  // p * log p with log p taken from log-softmax is finite, and tends to 0 as p -> 0.
  const double total = -(p.array() * logp.array()).sum();
  TensorNode node = make_node(Op::Entropy, {logits.index},
                              Matrix::Constant(1, 1, total / static_cast<double>(z.rows())));
  node.cache = std::move(p);
  node.cache2 = std::move(logp);
  return tape.push(std::move(node));
}

NodeId bce_with_logit(Tape& tape, NodeId logit, std::span<const int> labels) {
  const Matrix& z = tape.value(logit);
  if (z.cols() != 1) throw ConfigError("bce_with_logit: logit must be a column");
  check_labels(labels, z.rows(), 2, "bce_with_logit");
  if (z.rows() == 0) throw ConfigError("bce_with_logit: empty batch");
  double total = 0.0;
  Matrix prob(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    // -[d log s(z) + (1-d) log(1-s(z))] = softplus(z) - d z
    total += softplus(z(i, 0)) - labels[i] * z(i, 0);
    prob(i, 0) = sigmoid(z(i, 0));
  }
  TensorNode node = make_node(Op::BceWithLogit, {logit.index},
                              Matrix::Constant(1, 1, total / static_cast<double>(z.rows())));
  node.labels.assign(labels.begin(), labels.end());
  node.cache = std::move(prob);
  return tape.push(std::move(node));
}

NodeId gradient_reversal(Tape& tape, NodeId x, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("gradient_reversal: beta must be nonnegative");
  TensorNode node = make_node(Op::GradientReversal, {x.index}, tape.value(x));
  node.coeff = beta;
  return tape.push(std::move(node));
}

NodeId add(Tape& tape, NodeId a, NodeId b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ConfigError("add: shape mismatch");
  return tape.push(make_node(Op::Add, {a.index, b.index}, av + bv));
}

NodeId scale(Tape& tape, NodeId a, double factor) {
  TensorNode node = make_node(Op::Scale, {a.index}, factor * tape.value(a));
  node.coeff = factor;
  return tape.push(std::move(node));
}

NodeId mul(Tape& tape, NodeId a, NodeId b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ConfigError("mul: shape mismatch");
  return tape.push(make_node(Op::Mul, {a.index, b.index}, av.cwiseProduct(bv)));
}

NodeId sum(Tape& tape, NodeId a) {
  return tape.push(make_node(Op::Sum, {a.index}, Matrix::Constant(1, 1, tape.value(a).sum())));
}

NodeId concat_rows(Tape& tape, NodeId top, NodeId bottom) {
  const Matrix& t = tape.value(top);
  const Matrix& b = tape.value(bottom);
  if (t.cols() != b.cols()) throw ConfigError("concat_rows: column mismatch");
  Matrix out(t.rows() + b.rows(), t.cols());
  out << t, b;
  return tape.push(make_node(Op::ConcatRows, {top.index, bottom.index}, std::move(out)));
}

namespace {

double evaluate_loss(const LossFn& loss, std::span<const Matrix> params) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(tape.leaf(p));
  return tape.scalar(loss(tape, ids));
}

}  // namespace

double finite_difference_check(const LossFn& loss, std::vector<Matrix> params, double eps) {
  return finite_difference_check(
      loss, std::move(params), eps,
      [&loss](std::span<const Matrix> p, std::size_t) { return evaluate_loss(loss, p); });
}

double finite_difference_check(const LossFn& loss, std::vector<Matrix> params, double eps,
                               const ObjectiveFn& objective) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_check: eps must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<NodeId> ids;
    for (const auto& p : params) ids.push_back(tape.leaf(p));
    tape.backward(loss(tape, ids));
    for (NodeId id : ids) analytic.push_back(tape.grad(id));
  }

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index k = 0; k < params[t].size(); ++k) {
      double& w = params[t].data()[k];
      const double saved = w;
      w = saved + eps;
      const double up = objective(params, t);
      w = saved - eps;
      const double down = objective(params, t);
      w = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace transpar::diff
