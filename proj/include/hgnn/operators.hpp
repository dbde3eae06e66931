#pragma once

// Message-passing operators over directed, weighted chain graphs.
//
// Adjacency convention: A[target][source] = w for every edge source -> target,
// so (A X)[t] aggregates the features of t's in-neighbours and messages flow
// forward in time. Operators return pre-activation features; the layer
// wrapper in the hypermodel applies batch norm, activation and dropout.

#include "hgnn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hgnn {

enum class OperatorKind { gcn, graph, sage, tag, cheb, gin };

inline constexpr OperatorKind kAllOperators[] = {OperatorKind::gcn, OperatorKind::graph,
                                                 OperatorKind::sage, OperatorKind::tag,
                                                 OperatorKind::cheb, OperatorKind::gin};

std::string to_string(OperatorKind kind);
OperatorKind operator_from_string(const std::string& name);

/// A batch of disjoint graphs flattened into one node index space.
struct GraphBatch {
  int num_nodes = 0;
  int num_graphs = 0;
  std::vector<int> source;
  std::vector<int> target;
  std::vector<double> weight;
  std::vector<int> node_graph;  // graph id per node, nondecreasing from 0

  /// A single chain 0 -> 1 -> ... -> n-1 with the given n-1 weights.
  static GraphBatch chain(int n, std::vector<double> weights);
  /// Throws ContractError on out-of-range indices or negative weights.
  void validate() const;
};

/// Dense n x n weighted adjacency (A[t][s] = w), plus I when self_loops.
Matrix build_adjacency(const GraphBatch& g, bool self_loops);

// Constant propagation matrices used by the operators.
LinearOperator adjacency_operator(const GraphBatch& g);
/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
LinearOperator gcn_operator(const GraphBatch& g);
/// D^-1 A with D the weighted in-degree; rows with zero degree stay zero.
LinearOperator mean_operator(const GraphBatch& g);
/// Row v holds w_uv / |N(v)| for each in-neighbour u.
LinearOperator sage_operator(const GraphBatch& g);
/// Rescaled Laplacian 2L/lambda_max - I with lambda_max = 2, where
/// L = I' - D^-1/2 S D^-1/2, S = (A + A^T)/2 and I' is the identity restricted
/// to nodes of nonzero degree.
LinearOperator cheb_operator(const GraphBatch& g);

/// Lazily built propagation matrices for one batch.
class PropagationCache {
 public:
  explicit PropagationCache(const GraphBatch& g) : graph_(&g) {}
  const GraphBatch& graph() const { return *graph_; }
  const LinearOperator& adjacency();
  const LinearOperator& gcn();
  const LinearOperator& mean();
  const LinearOperator& sage();
  const LinearOperator& cheb();

 private:
  const GraphBatch* graph_;
  std::optional<LinearOperator> adjacency_, gcn_, mean_, sage_, cheb_;
};

enum class Aggregation { add, mean, max };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& name);

struct OperatorParams {
  OperatorKind kind = OperatorKind::gcn;
  int in_dim = 0;
  int out_dim = 0;
  // gcn/graph: {W}; sage: {W} with 2*in_dim rows; tag/cheb: {Theta_0..Theta_K};
  // gin: {W1, W2} of the two-layer MLP.
  std::vector<Tensor> weights;
  // One 1 x cols bias per weight for gin, otherwise a single output bias.
  std::vector<Tensor> biases;
  int K = 0;
  double epsilon = 0.0;
  Aggregation aggregation = Aggregation::add;
  ActivationKind gin_hidden_activation = ActivationKind::relu;

  /// Fan-in uniform initialization (bound 1/sqrt(fan_in)), zero biases.
  static OperatorParams init(OperatorKind kind, int in_dim, int out_dim, int K,
                             Aggregation aggregation, std::mt19937_64& rng);

  std::vector<Tensor> parameters() const;
  /// Throws DimensionError when weight shapes disagree with in/out dims.
  void validate() const;
};

Tensor forward_gcn(const OperatorParams& p, const Tensor& x, PropagationCache& cache);
Tensor forward_graph(const OperatorParams& p, const Tensor& x, PropagationCache& cache);
Tensor forward_sage(const OperatorParams& p, const Tensor& x, PropagationCache& cache);
Tensor forward_tag(const OperatorParams& p, const Tensor& x, PropagationCache& cache);
Tensor forward_cheb(const OperatorParams& p, const Tensor& x, PropagationCache& cache);
Tensor forward_gin(const OperatorParams& p, const Tensor& x, PropagationCache& cache);

/// Dispatches on p.kind.
Tensor forward_operator(const OperatorParams& p, const Tensor& x, PropagationCache& cache);

/// Convenience overload building a throwaway cache.
Tensor forward_operator(const OperatorParams& p, const Tensor& x, const GraphBatch& g);

/// Uniform(-bound, bound) matrix.
Matrix uniform_matrix(Index rows, Index cols, double bound, std::mt19937_64& rng);

}  // namespace hgnn
