#pragma once

// The four hypermodel assemblies built from a ModelConfig.

#include "hgnn/config.hpp"
#include "hgnn/eventlog.hpp"
#include "hgnn/operators.hpp"
#include "hgnn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace hgnn {

/// Several encoded graphs flattened into one disjoint union.
struct Batch {
  std::shared_ptr<const GraphBatch> graph;
  std::shared_ptr<PropagationCache> cache;
  Matrix node_features;   // N x d_N, masked entries zeroed
  Matrix graph_features;  // G x d_G
  std::vector<int> labels;
  std::vector<int> activity_ids;
  std::vector<int> duration_bins;

  int num_graphs() const { return graph->num_graphs; }
  int num_nodes() const { return graph->num_nodes; }
};

Batch make_batch(const std::vector<EncodedGraph>& data, std::span<const int> indices);
Batch make_batch(const std::vector<EncodedGraph>& data);

/// One layer: transform, optional batch norm, optional skip, activation,
/// optional dropout.
struct Block {
  bool graph = false;
  int in_dim = 0;
  int out_dim = 0;
  OperatorParams op;  // graph blocks
  Tensor weight;      // dense blocks
  Tensor bias;
  ActivationKind activation = ActivationKind::relu;
  std::optional<double> dropout;
  std::optional<BatchNormSpec> batch_norm;
  Tensor bn_gamma, bn_beta;
  Matrix running_mean, running_var;
  bool skip = false;
  Tensor projection;  // set when skip is on and in_dim != out_dim

  static Block make_graph(const LayerSpec& spec, OperatorKind kind, int in_dim, int K,
                          Aggregation aggr, std::mt19937_64& rng);
  static Block make_dense(const LayerSpec& spec, int in_dim, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, PropagationCache* cache, bool training, std::mt19937_64& rng);
  std::vector<Tensor> parameters() const;
};

Tensor pool(const Tensor& nodes, std::span<const int> graph_membership, ReduceMode mode);

class Model {
 public:
  /// Throws ConfigError for invalid configs before allocating parameters.
  static Model build(const ModelConfig& config, const InputDims& dims, std::uint64_t seed);

  /// Raw logits, one row per graph.
  Tensor forward(const Batch& batch);

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  const ModelConfig& config() const { return config_; }
  const InputDims& dims() const { return dims_; }

  std::vector<Block>& gnn_stack() { return gnn_; }
  std::vector<Block>& aux_stack() { return aux_; }
  std::vector<Block>& concat_stack() { return concat_; }
  std::vector<Block>& sequence_stack() { return sequence_; }
  std::vector<Block>& final_stack() { return final_; }
  Block& output_layer() { return output_; }
  Tensor& embedding_table() { return embedding_; }

 private:
  Tensor run_stack(std::vector<Block>& stack, Tensor x, PropagationCache* cache);
  Tensor main_input(const Batch& batch) const;
  Tensor fuse_and_classify(const Batch& batch, const Tensor& node_embedding);

  ModelConfig config_;
  InputDims dims_;
  std::vector<Block> gnn_, aux_, concat_, sequence_, final_;
  Block output_;
  Tensor embedding_;
  bool training_ = true;
  std::mt19937_64 dropout_rng_;
};

}  // namespace hgnn
