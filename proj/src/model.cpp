#include "pgdvae/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pgd {

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> diff;
  if (a.gin_layers != b.gin_layers) diff.emplace_back("gin_layers");
  if (a.clusters != b.clusters) diff.emplace_back("clusters");
  if (a.local_dim != b.local_dim) diff.emplace_back("local_dim");
  if (a.global_dim != b.global_dim) diff.emplace_back("global_dim");
  if (a.hidden != b.hidden) diff.emplace_back("hidden");
  if (a.n_max != b.n_max) diff.emplace_back("n_max");
  if (a.m_max != b.m_max) diff.emplace_back("m_max");
  return diff;
}

namespace {

void add_mlp(std::vector<ParamShape>& out, const std::string& prefix,
             const std::vector<Index>& widths) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    out.push_back({prefix + ".w" + std::to_string(i), widths[i], widths[i + 1]});
    out.push_back({prefix + ".b" + std::to_string(i), 1, widths[i + 1]});
  }
}

std::string gin_prefix(Index layer) { return "gin." + std::to_string(layer); }

Var mlp(const BoundParams& p, const std::string& prefix, int layers, Var x, bool relu_last) {
  for (int i = 0; i < layers; ++i) {
    const std::string k = std::to_string(i);
    x = ad::add_row(ad::matmul(x, p[prefix + ".w" + k]), p[prefix + ".b" + k]);
    if (i + 1 < layers || relu_last) x = ad::relu(x);
  }
  return x;
}

MatrixXd off_diagonal_ones(Index k) {
  MatrixXd mask = MatrixXd::Ones(k, k);
  mask.diagonal().setZero();
  return mask;
}

// (X + X') / 2 with the diagonal forced to zero.
Var symmetric_zero_diagonal(const Var& x) {
  Var sym = ad::scale(ad::add(x, ad::transpose(x)), 0.5);
  return ad::mul(sym, x.tape().constant(off_diagonal_ones(x.rows())));
}

Index last_active_row(const BinaryMatrix& a) {
  for (Index i = a.rows(); i-- > 0;) {
    if (a.row(i).any()) return i;
  }
  return -1;
}

}  // namespace

std::vector<ParamShape> parameter_layout(const ModelConfig& c) {
  if (c.gin_layers < 1 || c.clusters < 1 || c.local_dim < 1 || c.global_dim < 1 ||
      c.hidden < 1 || c.n_max < 1 || c.m_max < 1) {
    throw std::invalid_argument("model config: all dimensions must be positive");
  }
  std::vector<ParamShape> out;
  for (Index k = 0; k < c.gin_layers; ++k) {
    out.push_back({gin_prefix(k) + ".eps", 1, 1});
    add_mlp(out, gin_prefix(k), {k == 0 ? ModelConfig::feature_dim : c.hidden, c.hidden, c.hidden});
  }
  add_mlp(out, "assign", {c.hidden, c.hidden, c.clusters});
  // Linear heads: the encoders feed pooled features straight to mu / log sigma.
  add_mlp(out, "local_mu", {c.clusters * c.hidden, c.local_dim});
  add_mlp(out, "local_logsigma", {c.clusters * c.hidden, c.local_dim});
  add_mlp(out, "global_mu", {c.hidden, c.global_dim});
  add_mlp(out, "global_logsigma", {c.hidden, c.global_dim});
  add_mlp(out, "dec_local", {c.local_dim, c.hidden, c.hidden, c.n_max * c.n_max});
  add_mlp(out, "dec_neighborhood", {c.local_dim, c.hidden, c.hidden, c.n_max * c.n_max});
  add_mlp(out, "dec_global", {c.global_dim, c.hidden, c.hidden, c.m_max * c.m_max});
  return out;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params;
  params.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& shape : parameter_layout(config)) {
    MatrixXd value = MatrixXd::Zero(shape.rows, shape.cols);
    const auto dot = shape.name.rfind('.');
    // Zero here: log-sigma heads, the global mean head (z_g starts at the
    // prior mean) and the assignment output (uniform clusters at first).
    const bool zero = shape.name == "local_logsigma.w0" || shape.name == "global_logsigma.w0" ||
                      shape.name == "global_mu.w0" || shape.name == "assign.w1";
    if (shape.name[dot + 1] == 'w' && !zero) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Index i = 0; i < value.size(); ++i) value.data()[i] = u(rng);
    }
    // Narrow initial sigma_l, otherwise sampling noise drowns the cosines
    // the contrastive term works on and the local codes collapse together.
    if (shape.name == "local_logsigma.b0") value.setConstant(kInitialLocalLogSigma);
    params.tensors.emplace(shape.name, std::move(value));
  }
  return params;
}

void ModelParams::check_layout() const {
  const auto layout = parameter_layout(config);
  if (layout.size() != tensors.size()) {
    throw std::invalid_argument("model params: expected " + std::to_string(layout.size()) +
                                " tensors, found " + std::to_string(tensors.size()));
  }
  for (const auto& shape : layout) {
    const auto it = tensors.find(shape.name);
    if (it == tensors.end()) throw std::invalid_argument("model params: missing '" + shape.name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols) {
      throw std::invalid_argument(
          "model params: '" + shape.name + "' has shape (" + std::to_string(it->second.rows()) +
          "x" + std::to_string(it->second.cols()) + "), expected (" + std::to_string(shape.rows) +
          "x" + std::to_string(shape.cols) + ")");
    }
  }
}

Index ModelParams::parameter_count() const {
  Index total = 0;
  for (const auto& [name, value] : tensors) total += value.size();
  return total;
}

const MatrixXd& ModelParams::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

const Var& BoundParams::operator[](const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

BoundParams bind(Tape& tape, const ModelParams& params) {
  BoundParams bound;
  bound.config = &params.config;
  for (const auto& [name, value] : params.tensors) bound.vars.emplace(name, tape.borrow(value));
  return bound;
}

MatrixXd node_features(const PeriodicGraph& g) {
  const BinaryMatrix a = g.active();
  const Eigen::VectorXd deg = a.rowwise().sum().cast<double>();
  const double max_deg = deg.size() == 0 ? 0.0 : deg.maxCoeff();
  MatrixXd x(a.rows(), ModelConfig::feature_dim);
  x.col(0).setOnes();
  x.col(1) = deg / std::max(1.0, max_deg);
  return x;
}

Var gin_layer(const BoundParams& p, Index layer, const Var& h, const Var& adjacency) {
  const std::string prefix = gin_prefix(layer);
  Var self = ad::scale_by(ad::add_scalar(p[prefix + ".eps"], 1.0), h);
  Var agg = ad::add(self, ad::matmul(adjacency, h));
  return mlp(p, prefix, 2, agg, true);
}

Var gin_forward(const BoundParams& p, const PeriodicGraph& g) {
  Tape& tape = p.vars.begin()->second.tape();
  if (g.active_size() == 0) throw std::invalid_argument("gin_forward: empty graph");
  Var adjacency = tape.constant(g.active().cast<double>());
  Var h = tape.constant(node_features(g));
  for (Index k = 0; k < p.config->gin_layers; ++k) h = gin_layer(p, k, h, adjacency);
  return h;
}

GaussianVars local_encode(const BoundParams& p, const Var& h) {
  const ModelConfig& c = *p.config;
  // Soft assignment of every node to C representatives (rows of `assign` are A_rep columns).
  Var assign = ad::softmax_rows(mlp(p, "assign", 2, h, false));
  Var counts = ad::transpose(ad::colwise_sum(assign));
  Var clusters = ad::div_rows(ad::matmul(ad::transpose(assign), h), counts, 1e-8);
  Var flat = ad::reshape(clusters, 1, c.clusters * c.hidden);
  return {mlp(p, "local_mu", 1, flat, false), mlp(p, "local_logsigma", 1, flat, false)};
}

GaussianVars global_encode(const BoundParams& p, const Var& h) {
  return {ad::colwise_sum(mlp(p, "global_mu", 1, h, false)),
          ad::colwise_sum(mlp(p, "global_logsigma", 1, h, false))};
}

Encoding encode(const BoundParams& p, const PeriodicGraph& g) {
  const Var h = gin_forward(p, g);
  return {local_encode(p, h), global_encode(p, h)};
}

Var reparameterize(const Var& mu, const Var& log_sigma, const Var& eta) {
  return ad::add(mu, ad::mul(ad::exp(log_sigma), eta));
}

Eigen::RowVectorXd reparameterize(const Eigen::RowVectorXd& mu,
                                  const Eigen::RowVectorXd& log_sigma,
                                  const Eigen::RowVectorXd& eta) {
  if (mu.size() != log_sigma.size() || mu.size() != eta.size()) {
    throw std::invalid_argument("reparameterize: size mismatch");
  }
  return (mu.array() + log_sigma.array().exp() * eta.array()).matrix();
}

ProbabilityVars decode(const BoundParams& p, const Var& z_local, const Var& z_global) {
  const ModelConfig& c = *p.config;
  auto head = [&](const char* prefix, const Var& z, Index side) {
    return ad::reshape(ad::sigmoid(mlp(p, prefix, 3, z, false)), side, side);
  };
  return {symmetric_zero_diagonal(head("dec_local", z_local, c.n_max)),
          head("dec_neighborhood", z_local, c.n_max),
          symmetric_zero_diagonal(head("dec_global", z_global, c.m_max))};
}

EdgeProbabilities decode(const ModelParams& params, const LatentPair& z) {
  Tape tape;
  const BoundParams p = bind(tape, params);
  const ProbabilityVars out = decode(p, tape.constant(z.local), tape.constant(z.global));
  return {out.local.value(), out.neighborhood.value(), out.global.value()};
}

LatentPair encode_means(const ModelParams& params, const PeriodicGraph& g) {
  Tape tape;
  const BoundParams p = bind(tape, params);
  const Encoding e = encode(p, g);
  return {e.local.mu.value().row(0), e.global.mu.value().row(0)};
}

LatentPair sample_prior(const ModelConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentPair z{Eigen::RowVectorXd(config.local_dim), Eigen::RowVectorXd(config.global_dim)};
  for (Index i = 0; i < z.local.size(); ++i) z.local(i) = normal(rng);
  for (Index i = 0; i < z.global.size(); ++i) z.global(i) = normal(rng);
  return z;
}

SampleMode parse_sample_mode(std::string_view name) {
  if (name == "threshold") return SampleMode::threshold;
  if (name == "bernoulli") return SampleMode::bernoulli;
  throw std::invalid_argument("unknown sample mode '" + std::string(name) + "'");
}

Decomposition binarize(const EdgeProbabilities& probs, SampleMode mode, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto draw = [&](double p) {
    return mode == SampleMode::threshold ? p >= 0.5 : uniform(rng) < p;
  };
  auto symmetric = [&](const MatrixXd& p) {
    BinaryMatrix a = BinaryMatrix::Zero(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = i + 1; j < p.cols(); ++j) a(i, j) = a(j, i) = draw(p(i, j)) ? 1 : 0;
    }
    return a;
  };
  const BinaryMatrix local = symmetric(probs.local);
  BinaryMatrix neighborhood(probs.neighborhood.rows(), probs.neighborhood.cols());
  for (Index i = 0; i < neighborhood.rows(); ++i) {
    for (Index j = 0; j < neighborhood.cols(); ++j) neighborhood(i, j) = draw(probs.neighborhood(i, j)) ? 1 : 0;
  }
  const BinaryMatrix global = symmetric(probs.global);

  const Index n = std::max<Index>(1, last_active_row(local) + 1);
  const Index m = std::max<Index>(1, last_active_row(global) + 1);
  return {local.topLeftCorner(n, n), global.topLeftCorner(m, m),
          neighborhood.topLeftCorner(n, n)};
}

PeriodicGraph sample_graph(const ModelParams& params, const LatentPair& z, SampleMode mode,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Decomposition d = binarize(decode(params, z), mode, rng);
  PeriodicGraph g = assemble(d);
  g.adjacency = pad(g.adjacency, params.config.n_max * params.config.m_max);
  return g;
}

std::vector<PeriodicGraph> sample_graphs(const ModelParams& params, int count, SampleMode mode,
                                         std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_graphs: negative count");
  std::mt19937_64 rng(seed);
  std::vector<PeriodicGraph> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const LatentPair z = sample_prior(params.config, rng);
    out.push_back(sample_graph(params, z, mode, seed + static_cast<std::uint64_t>(i) + 1));
  }
  return out;
}

std::vector<ParamShape> shape_manifest(const ModelParams& params, const PeriodicGraph& g) {
  std::vector<ParamShape> out;
  for (const auto& [name, value] : params.tensors) out.push_back({name, value.rows(), value.cols()});
  Tape tape;
  const BoundParams p = bind(tape, params);
  const Encoding e = encode(p, g);
  const ProbabilityVars probs = decode(p, e.local.mu, e.global.mu);
  out.push_back({"activation.z_local", e.local.mu.rows(), e.local.mu.cols()});
  out.push_back({"activation.z_global", e.global.mu.rows(), e.global.mu.cols()});
  out.push_back({"activation.B_local", probs.local.rows(), probs.local.cols()});
  out.push_back({"activation.B_neighborhood", probs.neighborhood.rows(), probs.neighborhood.cols()});
  out.push_back({"activation.B_global", probs.global.rows(), probs.global.cols()});
  return out;
}

}  // namespace pgd
