// eval.hpp - generation metrics, latent traversal and ordering-stability study.

#ifndef PGDVAE_EVAL_HPP
#define PGDVAE_EVAL_HPP

#include "pgdvae/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pgd {

enum class Statistic { clustering, density };

double graph_statistic(const PeriodicGraph& g, Statistic s);

/// Normalized histogram over [0, 1]; `smoothing` is added to every bin
/// before renormalizing.
std::vector<double> histogram(std::span<const double> values, int bins, double smoothing);

/// KL(p || q) for two distributions over the same support.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct KldOptions {
  int bins = 100;
  double smoothing = 1e-10;
};

/// KL(P_ref || P_gen) between histograms of a per-graph statistic.
double kld_metric(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> reference,
                  Statistic statistic, const KldOptions& options = {});

/// Fraction of mutually distinct canonical forms.
double uniqueness(std::span<const PeriodicGraph> generated);

/// Fraction of generated graphs whose canonical form is absent from the training set.
double novelty(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> training);

struct EvalReport {
  double kld_cluster = 0.0;
  double kld_dense = 0.0;
  double uniqueness = 0.0;
  double novelty = 0.0;
  std::size_t sample_count = 0;
  int bins = 100;
  double smoothing = 1e-10;
};

EvalReport evaluate(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> reference,
                    std::span<const PeriodicGraph> training, const KldOptions& options = {});

std::string to_json_string(const EvalReport& report);

enum class LatentKind { local, global };

LatentKind parse_latent_kind(std::string_view name);

struct TraversalStep {
  double value = 0.0;
  PeriodicGraph graph;
  Decomposition decomposition;
  double clustering = 0.0;
  double density = 0.0;  // NaN for single-node graphs
};

/// Sweeps one coordinate of one latent, holding the other latent fixed, and
/// decodes every point in threshold mode.
std::vector<TraversalStep> latent_traversal(const ModelParams& params, const LatentPair& base,
                                            LatentKind which, Index dim,
                                            std::span<const double> values);

/// Spearman correlation of two tie-free rank vectors.
double spearman(std::span<const Index> a, std::span<const Index> b);
/// Kendall tau of two tie-free rank vectors.
double kendall(std::span<const Index> a, std::span<const Index> b);

struct BfsStability {
  double spearman_bfs = 0.0;
  double kendall_bfs = 0.0;
  double spearman_random = 0.0;
  double kendall_random = 0.0;
};

/// Applies `permutations` random relabelings to each graph, orders every copy
/// by BFS and by a fresh random order, and averages the pairwise rank
/// correlations of the resulting node orders within each graph.
BfsStability bfs_stability(std::span<const PeriodicGraph> graphs, int permutations, std::uint64_t seed);

struct DisentanglementScore {
  double within = 0.0;  // mean cosine of same-label pairs
  double cross = 0.0;   // mean cosine of different-label pairs

  double gap() const { return within - cross; }
};

/// Cosine similarity of the encoder means grouped by unit label.
DisentanglementScore disentanglement_score(const ModelParams& params,
                                           std::span<const PeriodicGraph> labeled,
                                           LatentKind which = LatentKind::local);

}  // namespace pgd

#endif  // PGDVAE_EVAL_HPP
