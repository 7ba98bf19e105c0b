// model.hpp - the periodic-graph VAE network.
//
// A shared GIN backbone embeds the nodes of the input graph. The local
// encoder softly clusters node embeddings into C representative nodes and
// maps their concatenation to (mu_l, log sigma_l); the global encoder sums a
// per-node MLP over all nodes to get (mu_g, log sigma_g). Three MLP decoders
// emit edge probabilities for the unit, neighborhood and global matrices,
// whose sizes depend only on (n_max, m_max).

#ifndef PGDVAE_MODEL_HPP
#define PGDVAE_MODEL_HPP

#include "pgdvae/pgraph.hpp"
#include "pgdvae/tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace pgd {

using Tape = ad::Tape<double>;
using Var = ad::Var<double>;
using MatrixXd = Eigen::MatrixXd;

struct ModelConfig {
  Index gin_layers = 3;  // K
  Index clusters = 8;    // C
  Index local_dim = 32;  // d_l
  Index global_dim = 32; // d_g
  Index hidden = 64;     // h
  Index n_max = 6;
  Index m_max = 8;

  static constexpr Index feature_dim = 2;

  bool operator==(const ModelConfig&) const = default;
};

/// Names of the fields in which two configs differ.
std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b);

struct ParamShape {
  std::string name;
  Index rows;
  Index cols;
};

/// Every learned tensor, in canonical order.
std::vector<ParamShape> parameter_layout(const ModelConfig& config);

inline constexpr double kInitialLocalLogSigma = -1.5;

struct ModelParams {
  ModelConfig config;
  std::map<std::string, MatrixXd> tensors;

  /// Glorot-uniform weights, zero biases, zero GIN epsilons. The log-sigma
  /// heads, the global mean head and the assignment output layer start at
  /// zero; the local log-sigma bias starts at kInitialLocalLogSigma.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Throws if any tensor is missing, unexpected or has the wrong shape.
  void check_layout() const;

  Index parameter_count() const;
  const MatrixXd& at(const std::string& name) const;
};

/// Parameters registered as leaves on one tape.
struct BoundParams {
  const ModelConfig* config = nullptr;
  std::map<std::string, Var> vars;

  const Var& operator[](const std::string& name) const;
};

/// Registers every tensor as a borrowed leaf; `params` must outlive `tape`.
BoundParams bind(Tape& tape, const ModelParams& params);

struct LatentPair {
  Eigen::RowVectorXd local;
  Eigen::RowVectorXd global;
};

struct GaussianVars {
  Var mu;
  Var log_sigma;
};

struct Encoding {
  GaussianVars local;
  GaussianVars global;
};

struct ProbabilityVars {
  Var local;         // n_max x n_max, symmetric, zero diagonal
  Var neighborhood;  // n_max x n_max
  Var global;        // m_max x m_max, symmetric, zero diagonal
};

struct EdgeProbabilities {
  MatrixXd local;
  MatrixXd neighborhood;
  MatrixXd global;
};

/// [1, deg(v) / max(1, max degree)] for each active node.
MatrixXd node_features(const PeriodicGraph& g);

/// One GIN layer: MLP((1 + eps) h_v + sum of neighbor rows).
Var gin_layer(const BoundParams& p, Index layer, const Var& h, const Var& adjacency);

/// Final-layer node embeddings h^(K) of the active graph.
Var gin_forward(const BoundParams& p, const PeriodicGraph& g);

GaussianVars local_encode(const BoundParams& p, const Var& node_embeddings);
GaussianVars global_encode(const BoundParams& p, const Var& node_embeddings);
Encoding encode(const BoundParams& p, const PeriodicGraph& g);

/// z = mu + exp(log_sigma) * eta.
Var reparameterize(const Var& mu, const Var& log_sigma, const Var& eta);
Eigen::RowVectorXd reparameterize(const Eigen::RowVectorXd& mu,
                                  const Eigen::RowVectorXd& log_sigma,
                                  const Eigen::RowVectorXd& eta);

ProbabilityVars decode(const BoundParams& p, const Var& z_local, const Var& z_global);
EdgeProbabilities decode(const ModelParams& params, const LatentPair& z);

/// Deterministic mean encodings (mu_l, mu_g) of a graph.
LatentPair encode_means(const ModelParams& params, const PeriodicGraph& g);

LatentPair sample_prior(const ModelConfig& config, std::mt19937_64& rng);

enum class SampleMode { threshold, bernoulli };

SampleMode parse_sample_mode(std::string_view name);

/// Binarizes the probabilities, infers the effective (n, m) from the last
/// rows of the unit and global matrices that touch an edge, truncates and
/// assembles. `rng` is used only in bernoulli mode.
Decomposition binarize(const EdgeProbabilities& probs, SampleMode mode, std::mt19937_64& rng);

PeriodicGraph sample_graph(const ModelParams& params, const LatentPair& z, SampleMode mode,
                           std::uint64_t seed);

/// `count` graphs from prior draws. The latents come from one generator
/// seeded with `seed`; graph i binarizes with seed + i + 1.
std::vector<PeriodicGraph> sample_graphs(const ModelParams& params, int count, SampleMode mode,
                                         std::uint64_t seed);

/// Parameter shapes plus decoder activation shapes observed for `g`.
std::vector<ParamShape> shape_manifest(const ModelParams& params, const PeriodicGraph& g);

}  // namespace pgd

#endif  // PGDVAE_MODEL_HPP
