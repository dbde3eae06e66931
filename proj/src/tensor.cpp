#include "hgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace hgnn {

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << "(" << rows << "x" << cols << ")";
  return os.str();
}

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix values, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::constant(Index rows, Index cols, double value) {
  return Tensor(Matrix::Constant(rows, cols, value));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r == 0 ? 0 : static_cast<Index>(rows.begin()->size());
  Matrix m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw DimensionError("ragged initializer rows");
    }
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return Tensor(std::move(m), requires_grad);
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(rows(), cols()));
  }
  return node_->value(0, 0);
}

Tensor Tensor::detach() const { return Tensor(node_->value, false); }

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("backward() requires a scalar (1x1) loss, got " +
                        shape_string(rows(), cols()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->pass_grad = Matrix::Zero(n->value.rows(), n->value.cols());
  node_->pass_grad(0, 0) = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(n->pass_grad);
  }
  for (Node* n : order) {
    if (!n->backward_fn && n->grad.size() == n->pass_grad.size()) {
      n->grad += n->pass_grad;
    } else {
      n->grad = std::move(n->pass_grad);
    }
    n->pass_grad.resize(0, 0);
  }
}

Tensor make_op(Matrix value, std::vector<Tensor> parents, std::function<void(const Matrix&)> fn) {
  Tensor out(std::move(value));
  auto& node = *out.node();
  for (const auto& p : parents) {
    node.requires_grad = node.requires_grad || p.requires_grad();
  }
  if (node.requires_grad) {
    node.parents.reserve(parents.size());
    for (const auto& p : parents) node.parents.push_back(p.node());
    node.backward_fn = std::move(fn);
  }
  return out;
}

void accumulate(const Tensor& t, const Matrix& delta) {
  if (!t.requires_grad()) return;
  t.node()->pass_grad += delta;
}

// ---- activations ----------------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::elu: return "elu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::gelu: return "gelu";
    case ActivationKind::identity: return "identity";
  }
  return "?";
}

ActivationKind activation_from_string(const std::string& name) {
  for (auto k : {ActivationKind::relu, ActivationKind::leaky_relu, ActivationKind::elu,
                 ActivationKind::tanh, ActivationKind::softplus, ActivationKind::gelu,
                 ActivationKind::identity}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown activation '" + name + "'");
}

double activation_value(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::relu: return x > 0 ? x : 0.0;
    case ActivationKind::leaky_relu: return x > 0 ? x : kLeakyReluSlope * x;
    case ActivationKind::elu: return x > 0 ? x : kEluAlpha * std::expm1(x);
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::softplus:
      return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case ActivationKind::gelu:
      return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    case ActivationKind::identity: return x;
  }
  return x;
}

double activation_derivative(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::relu: return x > 0 ? 1.0 : 0.0;
    case ActivationKind::leaky_relu: return x > 0 ? 1.0 : kLeakyReluSlope;
    case ActivationKind::elu: return x > 0 ? 1.0 : kEluAlpha * std::exp(x);
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::softplus:
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case ActivationKind::gelu: {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

std::string to_string(ReduceMode mode) {
  switch (mode) {
    case ReduceMode::sum: return "add";
    case ReduceMode::mean: return "mean";
    case ReduceMode::max: return "max";
  }
  return "?";
}

ReduceMode reduce_mode_from_string(const std::string& name) {
  if (name == "add" || name == "sum") return ReduceMode::sum;
  if (name == "mean") return ReduceMode::mean;
  if (name == "max") return ReduceMode::max;
  throw std::invalid_argument("unknown reduction '" + name + "'");
}

// ---- operations -----------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_string(a.rows(), a.cols()) + " x " +
                         shape_string(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) accumulate(b, a.value().transpose() * g);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
    accumulate(a, g);
    if (b.requires_grad()) accumulate(b, -g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) accumulate(b, g.cwiseProduct(a.value()));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_op(a.value() * factor, {a}, [a, factor](const Matrix& g) {
    accumulate(a, g * factor);
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bias.rows(), bias.cols()) +
                         " does not broadcast over " + shape_string(x.rows(), x.cols()));
  }
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, bias}, [x, bias](const Matrix& g) {
    accumulate(x, g);
    if (bias.requires_grad()) accumulate(bias, g.colwise().sum());
  });
}

Tensor mul_constant(const Tensor& x, const Matrix& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw DimensionError("mul_constant: mask " + shape_string(mask.rows(), mask.cols()) +
                         " vs " + shape_string(x.rows(), x.cols()));
  }
  return make_op(x.value().cwiseProduct(mask), {x}, [x, mask](const Matrix& g) {
    accumulate(x, g.cwiseProduct(mask));
  });
}

Tensor apply_activation(const Tensor& x, ActivationKind kind) {
  if (kind == ActivationKind::identity) return x;
  Matrix out = x.value().unaryExpr([kind](double v) { return activation_value(kind, v); });
  return make_op(std::move(out), {x}, [x, kind](const Matrix& g) {
    Matrix d = x.value().unaryExpr([kind](double v) { return activation_derivative(kind, v); });
    accumulate(x, g.cwiseProduct(d));
  });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(rows, cols) + " vs " +
                           shape_string(p.rows(), p.cols()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_op(std::move(out), parents, [parents](const Matrix& g) {
    Index off = 0;
    for (const auto& p : parents) {
      if (p.requires_grad()) accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> index) {
  std::vector<int> idx(index.begin(), index.end());
  Matrix out = Matrix::Zero(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                          std::to_string(x.rows()) + " rows");
    }
    if (idx[i] >= 0) out.row(static_cast<Index>(i)) = x.value().row(idx[i]);
  }
  return make_op(std::move(out), {x}, [x, idx = std::move(idx)](const Matrix& g) {
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) d.row(idx[i]) += g.row(static_cast<Index>(i));
    }
    accumulate(x, d);
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), {x}, [x](const Matrix& g) {
    accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor rowwise_reduce(const Tensor& x, ReduceMode mode, std::span<const int> groups) {
  if (static_cast<Index>(groups.size()) != x.rows()) {
    throw ContractError("rowwise_reduce: " + std::to_string(groups.size()) +
                        " group ids for " + std::to_string(x.rows()) + " rows");
  }
  int n_groups = 0;
  for (int g : groups) {
    if (g < 0) throw ContractError("rowwise_reduce: negative group id");
    n_groups = std::max(n_groups, g + 1);
  }
  std::vector<int> counts(static_cast<std::size_t>(n_groups), 0);
  for (int g : groups) ++counts[static_cast<std::size_t>(g)];
  for (int c = 0; c < n_groups; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw ContractError("rowwise_reduce: group " + std::to_string(c) + " is empty");
    }
  }
  std::vector<int> grp(groups.begin(), groups.end());
  const Index cols = x.cols();
  const auto& v = x.value();

  if (mode == ReduceMode::max) {
    Matrix out(n_groups, cols);
    // argmax[g * cols + c] = row index of the winner
    std::vector<Index> argmax(static_cast<std::size_t>(n_groups * cols), -1);
    for (Index r = 0; r < x.rows(); ++r) {
      const int g = grp[static_cast<std::size_t>(r)];
      for (Index c = 0; c < cols; ++c) {
        auto& slot = argmax[static_cast<std::size_t>(g * cols + c)];
        if (slot < 0 || v(r, c) > out(g, c)) {
          slot = r;
          out(g, c) = v(r, c);
        }
      }
    }
    return make_op(std::move(out), {x}, [x, argmax = std::move(argmax), n_groups,
                                         cols](const Matrix& g) {
      Matrix d = Matrix::Zero(x.rows(), cols);
      for (Index gi = 0; gi < n_groups; ++gi) {
        for (Index c = 0; c < cols; ++c) d(argmax[static_cast<std::size_t>(gi * cols + c)], c) += g(gi, c);
      }
      accumulate(x, d);
    });
  }

  Matrix out = Matrix::Zero(n_groups, cols);
  for (Index r = 0; r < x.rows(); ++r) out.row(grp[static_cast<std::size_t>(r)]) += v.row(r);
  std::vector<double> factor(static_cast<std::size_t>(n_groups), 1.0);
  if (mode == ReduceMode::mean) {
    for (int g = 0; g < n_groups; ++g) {
      factor[static_cast<std::size_t>(g)] = 1.0 / counts[static_cast<std::size_t>(g)];
      out.row(g) *= factor[static_cast<std::size_t>(g)];
    }
  }
  return make_op(std::move(out), {x}, [x, grp = std::move(grp), factor = std::move(factor)](
                                          const Matrix& g) {
    Matrix d(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      const auto gi = static_cast<std::size_t>(grp[static_cast<std::size_t>(r)]);
      d.row(r) = g.row(static_cast<Index>(gi)) * factor[gi];
    }
    accumulate(x, d);
  });
}

LinearOperator LinearOperator::from(SparseMatrix m) {
  LinearOperator op;
  op.transpose = std::make_shared<const SparseMatrix>(m.transpose());
  op.forward = std::make_shared<const SparseMatrix>(std::move(m));
  return op;
}

Tensor propagate(const LinearOperator& op, const Tensor& x) {
  if (op.forward->cols() != x.rows()) {
    throw DimensionError("propagate: operator " +
                         shape_string(op.forward->rows(), op.forward->cols()) + " vs input " +
                         shape_string(x.rows(), x.cols()));
  }
  Matrix out = (*op.forward) * x.value();
  auto transpose = op.transpose;
  return make_op(std::move(out), {x}, [x, transpose](const Matrix& g) {
    accumulate(x, (*transpose) * g);
  });
}

Tensor edge_max(const Tensor& x, std::span<const int> source, std::span<const int> target,
                Index num_nodes) {
  if (source.size() != target.size()) throw ContractError("edge_max: edge list size mismatch");
  const Index cols = x.cols();
  Matrix out = Matrix::Zero(num_nodes, cols);
  std::vector<Index> winner(static_cast<std::size_t>(num_nodes * cols), -1);
  const auto& v = x.value();
  for (std::size_t e = 0; e < source.size(); ++e) {
    const int s = source[e];
    const int t = target[e];
    if (s < 0 || t < 0 || s >= x.rows() || t >= num_nodes) {
      throw ContractError("edge_max: edge index out of range");
    }
    for (Index c = 0; c < cols; ++c) {
      auto& w = winner[static_cast<std::size_t>(t * cols + c)];
      if (w < 0 || v(s, c) > out(t, c)) {
        w = s;
        out(t, c) = v(s, c);
      }
    }
  }
  return make_op(std::move(out), {x}, [x, winner = std::move(winner), num_nodes,
                                       cols](const Matrix& g) {
    Matrix d = Matrix::Zero(x.rows(), cols);
    for (Index t = 0; t < num_nodes; ++t) {
      for (Index c = 0; c < cols; ++c) {
        const Index s = winner[static_cast<std::size_t>(t * cols + c)];
        if (s >= 0) d(s, c) += g(t, c);
      }
    }
    accumulate(x, d);
  });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        Matrix* batch_mean, Matrix* batch_var) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols()) {
    throw DimensionError("batch_norm: affine parameters must be 1x" + std::to_string(x.cols()));
  }
  if (x.rows() == 0) throw ContractError("batch_norm: empty batch");
  const double n = static_cast<double>(x.rows());
  Matrix mu = x.value().colwise().mean();
  Matrix centered = x.value().rowwise() - mu.row(0);
  Matrix var = centered.cwiseAbs2().colwise().sum() / n;
  Matrix inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), inv_std, n](const Matrix& g) {
                   if (gamma.requires_grad()) accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                   if (beta.requires_grad()) accumulate(beta, g.colwise().sum());
                   if (x.requires_grad()) {
                     Matrix gx = g.array().rowwise() * gamma.value().row(0).array();
                     Matrix sum_g = gx.colwise().sum();
                     Matrix sum_gx = gx.cwiseProduct(xhat).colwise().sum();
                     Matrix d = (n * gx.array() - xhat.array().rowwise() * sum_gx.row(0).array())
                                    .rowwise() -
                                sum_g.row(0).array();
                     d = (d.array().rowwise() * inv_std.row(0).array()) / n;
                     accumulate(x, d);
                   }
                 });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Matrix& running_mean, const Matrix& running_var, double eps) {
  if (gamma.cols() != x.cols() || running_mean.cols() != x.cols() ||
      running_var.cols() != x.cols()) {
    throw DimensionError("batch_norm: statistics width does not match input");
  }
  Matrix inv_std = (running_var.array() + eps).rsqrt().matrix();
  Matrix xhat = (x.value().rowwise() - running_mean.row(0)).array().rowwise() *
                inv_std.row(0).array();
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), inv_std](const Matrix& g) {
                   if (gamma.requires_grad()) accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                   if (beta.requires_grad()) accumulate(beta, g.colwise().sum());
                   if (x.requires_grad()) {
                     Matrix scale_row = gamma.value().cwiseProduct(inv_std);
                     accumulate(x, g.array().rowwise() * scale_row.row(0).array());
                   }
                 });
}

}  // namespace hgnn
