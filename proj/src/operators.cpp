#include "hgnn/operators.hpp"

#include <cmath>

namespace hgnn {

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::gcn: return "gcn";
    case OperatorKind::graph: return "graph";
    case OperatorKind::sage: return "sage";
    case OperatorKind::tag: return "tag";
    case OperatorKind::cheb: return "cheb";
    case OperatorKind::gin: return "gin";
  }
  return "?";
}

OperatorKind operator_from_string(const std::string& name) {
  for (auto k : kAllOperators) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown operator '" + name + "'");
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::add: return "add";
    case Aggregation::mean: return "mean";
    case Aggregation::max: return "max";
  }
  return "?";
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "add") return Aggregation::add;
  if (name == "mean") return Aggregation::mean;
  if (name == "max") return Aggregation::max;
  throw std::invalid_argument("unknown aggregation '" + name + "'");
}

GraphBatch GraphBatch::chain(int n, std::vector<double> weights) {
  if (n < 1) throw ContractError("chain: need at least one node");
  if (static_cast<int>(weights.size()) != n - 1) {
    throw ContractError("chain: expected " + std::to_string(n - 1) + " weights");
  }
  GraphBatch g;
  g.num_nodes = n;
  g.num_graphs = 1;
  g.node_graph.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i + 1 < n; ++i) {
    g.source.push_back(i);
    g.target.push_back(i + 1);
  }
  g.weight = std::move(weights);
  return g;
}

void GraphBatch::validate() const {
  if (source.size() != target.size() || source.size() != weight.size()) {
    throw ContractError("graph: edge arrays differ in length");
  }
  for (std::size_t e = 0; e < source.size(); ++e) {
    if (source[e] < 0 || source[e] >= num_nodes || target[e] < 0 || target[e] >= num_nodes) {
      throw ContractError("graph: edge " + std::to_string(e) + " index out of range");
    }
    if (!(weight[e] >= 0.0)) throw ContractError("graph: negative edge weight");
  }
  if (static_cast<int>(node_graph.size()) != num_nodes) {
    throw ContractError("graph: node membership does not cover all nodes");
  }
}

Matrix build_adjacency(const GraphBatch& g, bool self_loops) {
  if (g.num_nodes < 1) throw ContractError("adjacency: empty graph");
  g.validate();
  Matrix a = Matrix::Zero(g.num_nodes, g.num_nodes);
  for (std::size_t e = 0; e < g.source.size(); ++e) a(g.target[e], g.source[e]) += g.weight[e];
  if (self_loops) a.diagonal().array() += 1.0;
  return a;
}

namespace {

using Triplet = Eigen::Triplet<double>;

LinearOperator from_triplets(int n, const std::vector<Triplet>& t) {
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return LinearOperator::from(std::move(m));
}

std::vector<double> in_degree(const GraphBatch& g) {
  std::vector<double> d(static_cast<std::size_t>(g.num_nodes), 0.0);
  for (std::size_t e = 0; e < g.source.size(); ++e) d[static_cast<std::size_t>(g.target[e])] += g.weight[e];
  return d;
}

}  // namespace

LinearOperator adjacency_operator(const GraphBatch& g) {
  g.validate();
  std::vector<Triplet> t;
  for (std::size_t e = 0; e < g.source.size(); ++e) t.emplace_back(g.target[e], g.source[e], g.weight[e]);
  return from_triplets(g.num_nodes, t);
}

LinearOperator gcn_operator(const GraphBatch& g) {
  g.validate();
  auto deg = in_degree(g);
  for (auto& d : deg) d += 1.0;
  std::vector<Triplet> t;
  for (int i = 0; i < g.num_nodes; ++i) t.emplace_back(i, i, 1.0 / deg[static_cast<std::size_t>(i)]);
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    const auto s = static_cast<std::size_t>(g.source[e]);
    const auto r = static_cast<std::size_t>(g.target[e]);
    t.emplace_back(g.target[e], g.source[e], g.weight[e] / std::sqrt(deg[r] * deg[s]));
  }
  return from_triplets(g.num_nodes, t);
}

LinearOperator mean_operator(const GraphBatch& g) {
  g.validate();
  const auto deg = in_degree(g);
  std::vector<Triplet> t;
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    const double d = deg[static_cast<std::size_t>(g.target[e])];
    if (d > 0.0) t.emplace_back(g.target[e], g.source[e], g.weight[e] / d);
  }
  return from_triplets(g.num_nodes, t);
}

LinearOperator sage_operator(const GraphBatch& g) {
  g.validate();
  std::vector<int> count(static_cast<std::size_t>(g.num_nodes), 0);
  for (int target : g.target) ++count[static_cast<std::size_t>(target)];
  std::vector<Triplet> t;
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    t.emplace_back(g.target[e], g.source[e], g.weight[e] / count[static_cast<std::size_t>(g.target[e])]);
  }
  return from_triplets(g.num_nodes, t);
}

LinearOperator cheb_operator(const GraphBatch& g) {
  g.validate();
  // S = (A + A^T) / 2, degree = row sums of S.
  std::vector<double> deg(static_cast<std::size_t>(g.num_nodes), 0.0);
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    deg[static_cast<std::size_t>(g.source[e])] += 0.5 * g.weight[e];
    deg[static_cast<std::size_t>(g.target[e])] += 0.5 * g.weight[e];
  }
  std::vector<Triplet> t;
  // L~ = L - I = -(D^-1/2 S D^-1/2) - I restricted to zero-degree nodes.
  for (int i = 0; i < g.num_nodes; ++i) {
    if (!(deg[static_cast<std::size_t>(i)] > 0.0)) t.emplace_back(i, i, -1.0);
  }
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    const auto s = static_cast<std::size_t>(g.source[e]);
    const auto r = static_cast<std::size_t>(g.target[e]);
    if (g.weight[e] == 0.0) continue;
    const double v = -0.5 * g.weight[e] / std::sqrt(deg[s] * deg[r]);
    t.emplace_back(g.target[e], g.source[e], v);
    t.emplace_back(g.source[e], g.target[e], v);
  }
  return from_triplets(g.num_nodes, t);
}

const LinearOperator& PropagationCache::adjacency() {
  if (!adjacency_) adjacency_ = adjacency_operator(*graph_);
  return *adjacency_;
}
const LinearOperator& PropagationCache::gcn() {
  if (!gcn_) gcn_ = gcn_operator(*graph_);
  return *gcn_;
}
const LinearOperator& PropagationCache::mean() {
  if (!mean_) mean_ = mean_operator(*graph_);
  return *mean_;
}
const LinearOperator& PropagationCache::sage() {
  if (!sage_) sage_ = sage_operator(*graph_);
  return *sage_;
}
const LinearOperator& PropagationCache::cheb() {
  if (!cheb_) cheb_ = cheb_operator(*graph_);
  return *cheb_;
}

Matrix uniform_matrix(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

OperatorParams OperatorParams::init(OperatorKind kind, int in_dim, int out_dim, int K,
                                    Aggregation aggregation, std::mt19937_64& rng) {
  if (in_dim < 1 || out_dim < 1) throw DimensionError("operator: dimensions must be positive");
  if (K < 0) throw ContractError("operator: K must be >= 0");
  OperatorParams p;
  p.kind = kind;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.K = K;
  p.aggregation = aggregation;
  auto linear = [&](int fan_in, int fan_out) {
    return Tensor(uniform_matrix(fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng), true);
  };
  switch (kind) {
    case OperatorKind::gcn:
    case OperatorKind::graph: p.weights = {linear(in_dim, out_dim)}; break;
    case OperatorKind::sage: p.weights = {linear(2 * in_dim, out_dim)}; break;
    case OperatorKind::tag:
    case OperatorKind::cheb:
      for (int k = 0; k <= K; ++k) p.weights.push_back(linear(in_dim, out_dim));
      break;
    case OperatorKind::gin:
      p.weights = {linear(in_dim, out_dim), linear(out_dim, out_dim)};
      p.biases.push_back(Tensor::zeros(1, out_dim, true));
      break;
  }
  p.biases.push_back(Tensor::zeros(1, out_dim, true));
  return p;
}

std::vector<Tensor> OperatorParams::parameters() const {
  std::vector<Tensor> out = weights;
  out.insert(out.end(), biases.begin(), biases.end());
  return out;
}

void OperatorParams::validate() const {
  auto expect = [](const Tensor& t, Index r, Index c, const char* what) {
    if (t.rows() != r || t.cols() != c) {
      throw DimensionError(std::string("operator: ") + what + " has shape " +
                           shape_string(t.rows(), t.cols()) + ", expected " + shape_string(r, c));
    }
  };
  switch (kind) {
    case OperatorKind::gcn:
    case OperatorKind::graph:
      if (weights.size() != 1) throw DimensionError("operator: expected one weight matrix");
      expect(weights[0], in_dim, out_dim, "W");
      break;
    case OperatorKind::sage:
      if (weights.size() != 1) throw DimensionError("operator: expected one weight matrix");
      expect(weights[0], 2 * in_dim, out_dim, "W");
      break;
    case OperatorKind::tag:
    case OperatorKind::cheb:
      if (K < 0 || weights.size() != static_cast<std::size_t>(K + 1)) {
        throw DimensionError("operator: expected K+1 filter matrices");
      }
      for (const auto& w : weights) expect(w, in_dim, out_dim, "Theta_k");
      break;
    case OperatorKind::gin:
      if (weights.size() != 2) throw DimensionError("operator: GIN expects two MLP matrices");
      expect(weights[0], in_dim, out_dim, "W1");
      expect(weights[1], out_dim, out_dim, "W2");
      break;
  }
  for (const auto& b : biases) expect(b, 1, out_dim, "bias");
}

namespace {

Tensor with_bias(const OperatorParams& p, Tensor x, std::size_t index) {
  if (index < p.biases.size()) return add_row(x, p.biases[index]);
  return x;
}

void check_input(const OperatorParams& p, const Tensor& x, const GraphBatch& g, OperatorKind kind) {
  if (p.kind != kind) throw ContractError("operator: parameters are for " + to_string(p.kind));
  if (x.cols() != p.in_dim) {
    throw DimensionError("operator: input " + shape_string(x.rows(), x.cols()) + " but in_dim " +
                         std::to_string(p.in_dim));
  }
  if (x.rows() != g.num_nodes) {
    throw DimensionError("operator: " + std::to_string(x.rows()) + " feature rows for " +
                         std::to_string(g.num_nodes) + " nodes");
  }
}

}  // namespace

Tensor forward_gcn(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::gcn);
  return with_bias(p, propagate(cache.gcn(), matmul(x, p.weights[0])), 0);
}

Tensor forward_graph(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::graph);
  const Tensor xw = matmul(x, p.weights[0]);
  Tensor agg;
  switch (p.aggregation) {
    case Aggregation::add: agg = propagate(cache.adjacency(), xw); break;
    case Aggregation::mean: agg = propagate(cache.mean(), xw); break;
    case Aggregation::max: {
      const auto& g = cache.graph();
      g.validate();
      agg = edge_max(xw, g.source, g.target, g.num_nodes);
      break;
    }
  }
  return with_bias(p, agg, 0);
}

Tensor forward_sage(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::sage);
  const Tensor neighbours = propagate(cache.sage(), x);
  return with_bias(p, matmul(concat_cols({x, neighbours}), p.weights[0]), 0);
}

Tensor forward_tag(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::tag);
  Tensor power = x;
  Tensor out = matmul(x, p.weights[0]);
  for (int k = 1; k <= p.K; ++k) {
    power = propagate(cache.adjacency(), power);
    out = add(out, matmul(power, p.weights[static_cast<std::size_t>(k)]));
  }
  return with_bias(p, out, 0);
}

Tensor forward_cheb(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::cheb);
  Tensor out = matmul(x, p.weights[0]);
  if (p.K >= 1) {
    const auto& lap = cache.cheb();
    Tensor prev = x;
    Tensor cur = propagate(lap, x);
    out = add(out, matmul(cur, p.weights[1]));
    for (int k = 2; k <= p.K; ++k) {
      Tensor next = sub(scale(propagate(lap, cur), 2.0), prev);
      out = add(out, matmul(next, p.weights[static_cast<std::size_t>(k)]));
      prev = cur;
      cur = next;
    }
  }
  return with_bias(p, out, 0);
}

Tensor forward_gin(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  check_input(p, x, cache.graph(), OperatorKind::gin);
  Tensor h = add(scale(x, 1.0 + p.epsilon), propagate(cache.adjacency(), x));
  Tensor hidden = apply_activation(with_bias(p, matmul(h, p.weights[0]), 0), p.gin_hidden_activation);
  return with_bias(p, matmul(hidden, p.weights[1]), 1);
}

Tensor forward_operator(const OperatorParams& p, const Tensor& x, PropagationCache& cache) {
  switch (p.kind) {
    case OperatorKind::gcn: return forward_gcn(p, x, cache);
    case OperatorKind::graph: return forward_graph(p, x, cache);
    case OperatorKind::sage: return forward_sage(p, x, cache);
    case OperatorKind::tag: return forward_tag(p, x, cache);
    case OperatorKind::cheb: return forward_cheb(p, x, cache);
    case OperatorKind::gin: return forward_gin(p, x, cache);
  }
  throw ContractError("operator: unknown kind");
}

Tensor forward_operator(const OperatorParams& p, const Tensor& x, const GraphBatch& g) {
  PropagationCache cache(g);
  return forward_operator(p, x, cache);
}

}  // namespace hgnn
