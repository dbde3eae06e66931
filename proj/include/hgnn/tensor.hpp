#pragma once

// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations build new
// nodes that remember their parents and a closure that pushes the incoming
// gradient back to them. backward() walks the graph in reverse topological
// order. All arithmetic is float64.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a precondition of an operation is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_string(Index rows, Index cols);

class Tensor {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Receives d(loss)/d(this) and accumulates into parents' pass buffers.
    std::function<void(const Matrix&)> backward_fn;
    Matrix pass_grad;  // scratch buffer for the running backward pass
  };

  Tensor();
  explicit Tensor(Matrix values, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor constant(Index rows, Index cols, double value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward_fn; }

  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers and initializers. Do not resize.
  Matrix& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() > 0; }
  /// Accumulated gradient; zero-filled when no backward pass reached it yet.
  Matrix grad() const;
  void zero_grad();

  double item() const;
  double operator()(Index r, Index c) const { return node_->value(r, c); }

  /// Backpropagates from a 1x1 tensor. Leaves accumulate across calls;
  /// intermediate nodes keep the gradient of the most recent pass.
  void backward() const;

  /// Same storage, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. `fn` receives the output gradient and must call
// accumulate() for each parent that requires a gradient.
Tensor make_op(Matrix value, std::vector<Tensor> parents,
               std::function<void(const Matrix&)> fn);

/// Adds `delta` into the running backward-pass buffer of `t` (no-op when t
/// does not require a gradient).
void accumulate(const Tensor& t, const Matrix& delta);

enum class ActivationKind { relu, leaky_relu, elu, tanh, softplus, gelu, identity };

/// The six activations exposed to the search space (identity is internal).
inline constexpr ActivationKind kSearchActivations[] = {
    ActivationKind::relu, ActivationKind::leaky_relu, ActivationKind::elu,
    ActivationKind::tanh, ActivationKind::softplus,  ActivationKind::gelu};

inline constexpr double kLeakyReluSlope = 0.01;
inline constexpr double kEluAlpha = 1.0;

std::string to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

/// Scalar forward value of an activation.
double activation_value(ActivationKind kind, double x);
/// Scalar derivative. relu and leaky_relu use the negative-branch slope at 0.
double activation_derivative(ActivationKind kind, double x);

enum class ReduceMode { sum, mean, max };

std::string to_string(ReduceMode mode);
ReduceMode reduce_mode_from_string(const std::string& name);

// ---- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x (n x c) + bias (1 x c) broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// Elementwise product with a constant matrix (masks, dropout).
Tensor mul_constant(const Tensor& x, const Matrix& mask);
Tensor apply_activation(const Tensor& x, ActivationKind kind);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
/// Row i of the result is row index[i] of x, or zeros when index[i] < 0.
Tensor gather_rows(const Tensor& x, std::span<const int> index);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// One output row per group; groups must be dense from 0 and non-empty.
/// max routes the gradient to the first arg-max row.
Tensor rowwise_reduce(const Tensor& x, ReduceMode mode, std::span<const int> groups);

/// A constant linear operator with its transpose cached for backward.
struct LinearOperator {
  std::shared_ptr<const SparseMatrix> forward;
  std::shared_ptr<const SparseMatrix> transpose;
  static LinearOperator from(SparseMatrix m);
  Matrix dense() const { return Matrix(*forward); }
};

/// y = S x for a constant sparse S.
Tensor propagate(const LinearOperator& op, const Tensor& x);

/// out[t] = elementwise max over incoming edges (s -> t) of x[s]; targets
/// without incoming edges get zeros. Ties route to the first edge.
Tensor edge_max(const Tensor& x, std::span<const int> source, std::span<const int> target,
                Index num_nodes);

/// Batch normalization using the statistics of the rows of x. Writes the
/// batch mean and biased variance to the optional outputs.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        Matrix* batch_mean = nullptr, Matrix* batch_var = nullptr);
/// Batch normalization with frozen statistics.
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Matrix& running_mean, const Matrix& running_var, double eps);

}  // namespace hgnn
