#include "hgnn/hypermodel.hpp"

#include <cmath>
#include <numeric>

namespace hgnn {

Batch make_batch(const std::vector<EncodedGraph>& data, std::span<const int> indices) {
  if (indices.empty()) throw ContractError("batch: no graphs selected");
  auto graph = std::make_shared<GraphBatch>();
  Index total = 0;
  Index d_n = -1, d_g = -1;
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= data.size()) throw ContractError("batch: index out of range");
    const auto& g = data[static_cast<std::size_t>(i)];
    if (g.num_nodes() < 1) throw ContractError("batch: graph without nodes");
    if (d_n < 0) {
      d_n = g.node_features.cols();
      d_g = g.graph_features.cols();
    } else if (g.node_features.cols() != d_n || g.graph_features.cols() != d_g) {
      throw DimensionError("batch: graphs disagree on feature widths");
    }
    total += g.num_nodes();
  }
  Batch b;
  b.node_features.resize(total, d_n);
  b.graph_features.resize(static_cast<Index>(indices.size()), d_g);
  graph->num_nodes = static_cast<int>(total);
  graph->num_graphs = static_cast<int>(indices.size());
  int offset = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& g = data[static_cast<std::size_t>(indices[k])];
    const int n = g.num_nodes();
    for (int r = 0; r < n; ++r) {
      for (Index c = 0; c < d_n; ++c) {
        const bool masked = g.feature_mask[static_cast<std::size_t>(r * d_n + c)] != 0;
        b.node_features(offset + r, c) = masked ? 0.0 : g.node_features(r, c);
      }
    }
    if (d_g > 0) b.graph_features.row(static_cast<Index>(k)) = g.graph_features.row(0);
    for (std::size_t e = 0; e < g.edge_source.size(); ++e) {
      graph->source.push_back(offset + g.edge_source[e]);
      graph->target.push_back(offset + g.edge_target[e]);
      graph->weight.push_back(g.edge_weights[e]);
    }
    graph->node_graph.insert(graph->node_graph.end(), static_cast<std::size_t>(n), static_cast<int>(k));
    b.labels.push_back(g.label);
    b.activity_ids.insert(b.activity_ids.end(), g.activity_ids.begin(), g.activity_ids.end());
    b.duration_bins.insert(b.duration_bins.end(), g.duration_bins.begin(), g.duration_bins.end());
    offset += n;
  }
  graph->validate();
  b.graph = graph;
  b.cache = std::make_shared<PropagationCache>(*graph);
  return b;
}

Batch make_batch(const std::vector<EncodedGraph>& data) {
  std::vector<int> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batch(data, all);
}

// ---- blocks -----------------------------------------------------------------

namespace {

void init_common(Block& b, const LayerSpec& spec, std::mt19937_64& rng) {
  b.activation = spec.activation;
  b.dropout = spec.dropout;
  b.batch_norm = spec.batch_norm;
  b.skip = spec.skip;
  if (b.batch_norm) {
    b.bn_gamma = Tensor(Matrix::Ones(1, b.out_dim), true);
    b.bn_beta = Tensor::zeros(1, b.out_dim, true);
    b.running_mean = Matrix::Zero(1, b.out_dim);
    b.running_var = Matrix::Ones(1, b.out_dim);
  }
  if (b.skip && b.in_dim != b.out_dim) {
    b.projection = Tensor(uniform_matrix(b.in_dim, b.out_dim, 1.0 / std::sqrt(static_cast<double>(b.in_dim)), rng),
                          true);
  }
}

}  // namespace

Block Block::make_graph(const LayerSpec& spec, OperatorKind kind, int in_dim, int K, Aggregation aggr,
                        std::mt19937_64& rng) {
  Block b;
  b.graph = true;
  b.in_dim = in_dim;
  b.out_dim = spec.units;
  b.op = OperatorParams::init(kind, in_dim, spec.units, K, aggr, rng);
  init_common(b, spec, rng);
  return b;
}

Block Block::make_dense(const LayerSpec& spec, int in_dim, std::mt19937_64& rng) {
  if (in_dim < 1 || spec.units < 1) throw DimensionError("dense: dimensions must be positive");
  Block b;
  b.in_dim = in_dim;
  b.out_dim = spec.units;
  b.weight = Tensor(uniform_matrix(in_dim, spec.units, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng), true);
  b.bias = Tensor::zeros(1, spec.units, true);
  init_common(b, spec, rng);
  return b;
}

Tensor Block::forward(const Tensor& x, PropagationCache* cache, bool training, std::mt19937_64& rng) {
  if (x.cols() != in_dim) {
    throw DimensionError("block: input " + shape_string(x.rows(), x.cols()) + " but in_dim " +
                         std::to_string(in_dim));
  }
  Tensor h;
  if (graph) {
    if (!cache) throw ContractError("block: graph layer needs a propagation cache");
    h = forward_operator(op, x, *cache);
  } else {
    h = add_row(matmul(x, weight), bias);
  }
  if (batch_norm) {
    if (training) {
      Matrix mu, var;
      h = batch_norm_train(h, bn_gamma, bn_beta, batch_norm->eps, &mu, &var);
      const double m = batch_norm->momentum;
      const double n = static_cast<double>(x.rows());
      const Matrix unbiased = n > 1 ? Matrix(var * (n / (n - 1.0))) : var;
      running_mean = (1.0 - m) * running_mean + m * mu;
      running_var = (1.0 - m) * running_var + m * unbiased;
    } else {
      h = batch_norm_eval(h, bn_gamma, bn_beta, running_mean, running_var, batch_norm->eps);
    }
  }
  if (skip) h = add(h, in_dim == out_dim ? x : matmul(x, projection));
  h = apply_activation(h, activation);
  if (dropout && training && *dropout > 0.0) {
    const double keep = 1.0 - *dropout;
    std::bernoulli_distribution draw(keep);
    Matrix mask(h.rows(), h.cols());
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = draw(rng) ? 1.0 / keep : 0.0;
    h = mul_constant(h, mask);
  }
  return h;
}

std::vector<Tensor> Block::parameters() const {
  std::vector<Tensor> out;
  if (graph) {
    out = op.parameters();
  } else {
    out = {weight, bias};
  }
  if (batch_norm) {
    out.push_back(bn_gamma);
    out.push_back(bn_beta);
  }
  if (skip && in_dim != out_dim) out.push_back(projection);
  return out;
}

Tensor pool(const Tensor& nodes, std::span<const int> graph_membership, ReduceMode mode) {
  return rowwise_reduce(nodes, mode, graph_membership);
}

// ---- model ------------------------------------------------------------------

namespace {

int main_node_width(const ModelConfig& c, const InputDims& d) {
  int w = d.node_features;
  if (c.architecture == Architecture::one_level) w += d.graph_features;
  if (c.architecture == Architecture::two_level_embedding && !c.keep_activity_onehot) w -= d.n_activities;
  return w;
}

}  // namespace

Model Model::build(const ModelConfig& config, const InputDims& dims, std::uint64_t seed) {
  config.validate();
  if (dims.node_features < 1) throw ConfigError("model: node feature width must be positive");
  if (dims.graph_features < 0 || dims.n_bins < 0 || dims.n_activities < 0) {
    throw ConfigError("model: negative input dimension");
  }
  if (is_two_level(config.architecture) && dims.graph_features < 1) {
    throw ConfigError("model: two-level architectures need graph-level features");
  }
  if (config.architecture == Architecture::two_level_pseudo && dims.n_bins < 1) {
    throw ConfigError("model: two_level_pseudo needs at least one duration bin");
  }
  if (config.architecture == Architecture::two_level_embedding && dims.n_activities < 1) {
    throw ConfigError("model: two_level_embedding needs an activity vocabulary");
  }
  if (main_node_width(config, dims) < 1) throw ConfigError("model: main node input would be empty");

  Model m;
  m.config_ = config;
  m.dims_ = dims;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6e6e67u};
  std::mt19937_64 rng(seq);
  m.dropout_rng_.seed(rng());

  auto graph_stack = [&](const std::vector<LayerSpec>& specs, int in) {
    std::vector<Block> out;
    for (const auto& s : specs) {
      out.push_back(Block::make_graph(s, config.op, in, config.K, config.graph_aggregation, rng));
      in = s.units;
    }
    return out;
  };
  auto dense_stack = [&](const std::vector<LayerSpec>& specs, int in) {
    std::vector<Block> out;
    for (const auto& s : specs) {
      out.push_back(Block::make_dense(s, in, rng));
      in = s.units;
    }
    return out;
  };

  m.gnn_ = graph_stack(config.gnn_layers, main_node_width(config, dims));
  int node_out = config.gnn_layers.back().units;
  if (config.architecture == Architecture::two_level_pseudo) {
    m.aux_ = graph_stack(config.aux_gnn_layers, dims.n_bins);
    m.concat_ = graph_stack(config.concat_gnn_layers, node_out + config.aux_gnn_layers.back().units);
    node_out = config.concat_gnn_layers.back().units;
  } else if (config.architecture == Architecture::two_level_embedding) {
    m.embedding_ = Tensor(uniform_matrix(dims.n_activities, config.embedding_dim, 0.05, rng), true);
    m.aux_ = graph_stack(config.aux_gnn_layers, config.embedding_dim);
    node_out += config.aux_gnn_layers.back().units;
  }
  int final_in = node_out;
  if (is_two_level(config.architecture)) {
    m.sequence_ = dense_stack(config.sequence_dense_layers, dims.graph_features);
    final_in += config.sequence_dense_layers.back().units;
  }
  m.final_ = dense_stack(config.final_dense_layers, final_in);
  LayerSpec out_spec;
  out_spec.units = config.output_size;
  out_spec.activation = ActivationKind::identity;
  m.output_ = Block::make_dense(out_spec, config.final_dense_layers.back().units, rng);
  return m;
}

Tensor Model::run_stack(std::vector<Block>& stack, Tensor x, PropagationCache* cache) {
  for (auto& b : stack) x = b.forward(x, cache, training_, dropout_rng_);
  return x;
}

Tensor Model::main_input(const Batch& batch) const {
  const auto& g = *batch.graph;
  if (batch.node_features.cols() != dims_.node_features) {
    throw DimensionError("model: node features have width " + std::to_string(batch.node_features.cols()) +
                         ", model expects " + std::to_string(dims_.node_features));
  }
  if (batch.graph_features.cols() != dims_.graph_features) {
    throw DimensionError("model: graph features have width " + std::to_string(batch.graph_features.cols()) +
                         ", model expects " + std::to_string(dims_.graph_features));
  }
  if (config_.architecture == Architecture::one_level) {
    Matrix x(g.num_nodes, dims_.node_features + dims_.graph_features);
    x.leftCols(dims_.node_features) = batch.node_features;
    for (int i = 0; i < g.num_nodes; ++i) {
      x.row(i).tail(dims_.graph_features) = batch.graph_features.row(g.node_graph[static_cast<std::size_t>(i)]);
    }
    return Tensor(std::move(x));
  }
  if (config_.architecture == Architecture::two_level_embedding && !config_.keep_activity_onehot) {
    return Tensor(Matrix(batch.node_features.rightCols(dims_.node_features - dims_.n_activities)));
  }
  return Tensor(batch.node_features);
}

Tensor Model::fuse_and_classify(const Batch& batch, const Tensor& node_embedding) {
  const auto& g = *batch.graph;
  Tensor h = pool(node_embedding, g.node_graph, config_.pooling);
  if (is_two_level(config_.architecture)) {
    Tensor seq = run_stack(sequence_, Tensor(batch.graph_features), nullptr);
    h = concat_cols({h, seq});
  }
  h = run_stack(final_, h, nullptr);
  return output_.forward(h, nullptr, training_, dropout_rng_);
}

Tensor Model::forward(const Batch& batch) {
  PropagationCache& cache = *batch.cache;
  const auto& g = *batch.graph;
  Tensor nodes = run_stack(gnn_, main_input(batch), &cache);
  switch (config_.architecture) {
    case Architecture::one_level:
    case Architecture::two_level: break;
    case Architecture::two_level_pseudo: {
      Matrix onehot = Matrix::Zero(g.num_nodes, dims_.n_bins);
      for (int i = 0; i < g.num_nodes; ++i) {
        const int bin = batch.duration_bins[static_cast<std::size_t>(i)];
        if (bin < 0 || bin >= dims_.n_bins) {
          throw ContractError("model: duration bin " + std::to_string(bin) + " outside [0, " +
                              std::to_string(dims_.n_bins) + ")");
        }
        onehot(i, bin) = 1.0;
      }
      Tensor pseudo = run_stack(aux_, Tensor(std::move(onehot)), &cache);
      nodes = run_stack(concat_, concat_cols({nodes, pseudo}), &cache);
      break;
    }
    case Architecture::two_level_embedding: {
      std::vector<int> ids = batch.activity_ids;
      for (auto& id : ids) {
        if (id >= dims_.n_activities) id = -1;
      }
      Tensor aux = run_stack(aux_, gather_rows(embedding_, ids), &cache);
      nodes = concat_cols({nodes, aux});
      break;
    }
  }
  return fuse_and_classify(batch, nodes);
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  auto add_stack = [&](const std::vector<Block>& stack) {
    for (const auto& b : stack) {
      auto p = b.parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
  };
  add_stack(gnn_);
  add_stack(aux_);
  add_stack(concat_);
  if (embedding_.size() > 0 && config_.architecture == Architecture::two_level_embedding) out.push_back(embedding_);
  add_stack(sequence_);
  add_stack(final_);
  auto p = output_.parameters();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.size());
  return n;
}

}  // namespace hgnn
