#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// double matrices. Scalars are 1x1, vectors are 1xN.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace transpar::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node on a Tape. Only meaningful for the tape that created it.
struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  Leaf,
  Constant,
  Affine,
  Relu,
  SoftmaxCrossEntropy,
  Entropy,
  BceWithLogit,
  GradientReversal,
  Add,
  Scale,
  Mul,
  Sum,
  ConcatRows,
};

struct TensorNode {
  std::size_t id = 0;
  Op op = Op::Constant;
  std::vector<std::size_t> parents;
  Matrix value;
  Matrix grad;
  // Op-specific payload: class or domain labels, a scalar coefficient, and a
  // forward-pass cache (softmax probabilities, log-probabilities).
  std::vector<int> labels;
  double coeff = 0.0;
  Matrix cache;
  Matrix cache2;

  [[nodiscard]] Eigen::Index rows() const { return value.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value.cols(); }
};

/// Append-only record of one forward pass. Creation order is topological.
/// Not thread-safe; distinct tapes are independent.
class Tape {
 public:
  /// Trainable input. Its id is recorded in leaf_ids().
  NodeId leaf(Matrix value);
  /// Non-trainable input (data). Gradients still flow into it.
  NodeId constant(Matrix value);

  [[nodiscard]] const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
  [[nodiscard]] const Matrix& grad(NodeId id) const { return nodes_.at(id.index).grad; }
  [[nodiscard]] double scalar(NodeId id) const;
  [[nodiscard]] const TensorNode& node(NodeId id) const { return nodes_.at(id.index); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::span<const std::size_t> leaf_ids() const { return leaf_ids_; }

  /// Zeroes every gradient, seeds d(root)/d(root) = 1 and propagates in
  /// reverse creation order. Throws ConfigError for a non-scalar root and
  /// NumericFailure when a gradient becomes non-finite.
  void backward(NodeId root);
  void zero_grad();

  // Used by the primitive free functions below.
  NodeId push(TensorNode node);
  TensorNode& mutable_node(NodeId id) { return nodes_.at(id.index); }

 private:
  void propagate(const TensorNode& node);

  std::vector<TensorNode> nodes_;
  std::vector<std::size_t> leaf_ids_;
};

/// x[n,d] * W[d,h] + b[1,h] broadcast over rows.
NodeId affine(Tape& tape, NodeId x, NodeId weight, NodeId bias);
/// Elementwise max(0, x); subgradient at 0 is 0.
NodeId relu(Tape& tape, NodeId x);
/// Mean over rows of -log softmax(logits)[label].
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::span<const int> labels);
/// Mean over rows of the Shannon entropy of softmax(logits).
NodeId entropy_loss(Tape& tape, NodeId logits);
/// Mean binary cross-entropy of an [n,1] logit column against {0,1} labels.
NodeId bce_with_logit(Tape& tape, NodeId logit, std::span<const int> labels);
/// Identity forward; backward multiplies the upstream gradient by -beta.
NodeId gradient_reversal(Tape& tape, NodeId x, double beta);
NodeId add(Tape& tape, NodeId a, NodeId b);
NodeId scale(Tape& tape, NodeId a, double factor);
NodeId mul(Tape& tape, NodeId a, NodeId b);
NodeId sum(Tape& tape, NodeId a);
NodeId concat_rows(Tape& tape, NodeId top, NodeId bottom);

/// Builds a scalar loss from leaves created on `tape` for each parameter tensor.
using LossFn = std::function<NodeId(Tape& tape, std::span<const NodeId> params)>;
/// Scalar objective whose central difference is compared against the analytic
/// gradient of parameter tensor `tensor_index`. Lets callers check graphs whose
/// gradients are not those of a single scalar (gradient reversal).
using ObjectiveFn =
    std::function<double(std::span<const Matrix> params, std::size_t tensor_index)>;

/// Worst relative error between reverse-mode gradients of `loss` and central
/// differences (L(w+eps) - L(w-eps)) / (2 eps), over every parameter scalar.
/// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const LossFn& loss, std::vector<Matrix> params, double eps);
double finite_difference_check(const LossFn& loss, std::vector<Matrix> params, double eps,
                               const ObjectiveFn& objective);

// Plain (tape-free) evaluations shared with inference paths so that both
// routes do identical arithmetic.
Matrix affine_value(const Matrix& x, const Matrix& weight, const Matrix& bias);
Matrix relu_value(const Matrix& x);
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace transpar::diff
