#pragma once

// Small datasets and configurations shared by the unit tests.

#include "hgnn/config.hpp"
#include "hgnn/eventlog.hpp"
#include "hgnn/synthetic.hpp"

#include <optional>
#include <string>

namespace hgnn::testing {

inline EncodedDataset tiny_dataset(int n_cases = 40, int n_classes = 2, std::uint64_t seed = 1,
                                   LabelRule rule = LabelRule::activity_presence, double ratio = 1.0) {
  SyntheticSpec spec;
  spec.n_cases = n_cases;
  spec.n_classes = n_classes;
  spec.imbalance_ratio = ratio;
  spec.rule = rule;
  spec.seed = seed;
  const auto log = generate_synthetic_log(spec);
  return build_dataset(log.traces, log.schema, log.binning, EncodeOptions{});
}

inline InputDims input_dims(const EncodedDataset& d) {
  const auto dims = d.dims();
  return {dims.node_features, dims.graph_features, dims.n_bins, dims.n_activities};
}

inline LayerSpec layer(int units, ActivationKind act = ActivationKind::tanh, std::optional<double> dropout = {},
                       std::optional<BatchNormSpec> bn = {}, bool skip = false) {
  LayerSpec l;
  l.units = units;
  l.activation = act;
  l.dropout = dropout;
  l.batch_norm = bn;
  l.skip = skip;
  return l;
}

/// A valid configuration of the given shape with small layers.
inline ModelConfig small_config(Architecture arch, OperatorKind op, int units = 4, int classes = 2) {
  ModelConfig c;
  c.architecture = arch;
  c.op = op;
  c.gnn_layers = {layer(units, ActivationKind::tanh), layer(units, ActivationKind::elu)};
  if (arch == Architecture::two_level_pseudo) {
    c.aux_gnn_layers = {layer(3, ActivationKind::softplus)};
    c.concat_gnn_layers = {layer(units, ActivationKind::gelu)};
  }
  if (arch == Architecture::two_level_embedding) {
    c.aux_gnn_layers = {layer(3, ActivationKind::leaky_relu)};
    c.embedding_dim = 5;
  }
  if (is_two_level(arch)) c.sequence_dense_layers = {layer(3, ActivationKind::tanh)};
  c.final_dense_layers = {layer(units, ActivationKind::tanh)};
  c.pooling = ReduceMode::mean;
  c.K = (op == OperatorKind::tag || op == OperatorKind::cheb) ? 2 : 0;
  c.graph_aggregation = Aggregation::mean;
  c.output_size = classes;
  c.optimizer.kind = OptimizerKind::adam;
  c.optimizer.learning_rate = 1e-2;
  c.batch_size = 16;
  return c;
}

}  // namespace hgnn::testing
