// objective.hpp - reconstruction, KL and contrastive terms of the training loss.

#ifndef PGDVAE_OBJECTIVE_HPP
#define PGDVAE_OBJECTIVE_HPP

#include "pgdvae/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace pgd {

struct LossWeights {
  double beta_local = 0.1;   // beta_1, KL weight of z_l
  double beta_global = 0.1;  // beta_2, KL weight of z_g
  double beta_contra = 1.0;  // beta_3
  double temperature = 0.2;  // tau
  bool include_self_pairs = true;
};

void validate(const LossWeights& w);

struct LossBreakdown {
  double l_rec = 0.0;
  double l_kl = 0.0;
  double l_contra = 0.0;
  double total = 0.0;
  LossWeights weights;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Unit, global and neighborhood targets zero-padded to (n_max, m_max).
struct PaddedTargets {
  MatrixXd local;
  MatrixXd neighborhood;
  MatrixXd global;
};

PaddedTargets pad_targets(const Decomposition& d, Index n_max, Index m_max);

/// Mean binary cross-entropy over all entries of the three matrices, with
/// probabilities clamped to [1e-7, 1 - 1e-7].
Var recon_loss(const ProbabilityVars& probs, const PaddedTargets& target);

/// beta_l KL(N(mu_l, sigma_l^2) || N(0, I)) + beta_g KL(N(mu_g, sigma_g^2) || N(0, I)).
Var kl_loss(const Encoding& e, const LossWeights& w);

/// Counts batches whose contrastive term was skipped for having a single label.
struct ContrastiveDiagnostics {
  std::size_t single_label_batches = 0;
};

/// Contrastive loss over the rows of `z_local`, grouped by `labels`.
///
/// For every anchor j of label i:
///   -beta_3 * sum_k log( exp(sim(z_j, z_k)/tau) / sum_{t: label(t) != i} exp(sim(z_j, z_t)/tau) )
/// with k ranging over label i (including k = j unless disabled) and sim the
/// cosine similarity. Zero when fewer than two labels are present.
Var contrastive_loss(const Var& z_local, std::span<const int> labels, const LossWeights& w,
                     ContrastiveDiagnostics* diagnostics = nullptr);

struct TrainingExample {
  PeriodicGraph graph;
  PaddedTargets targets;
  int label = -1;
};

TrainingExample make_example(const PeriodicGraph& g, Index n, const ModelConfig& config);

/// Standard-normal draws used by the reparameterization of one graph.
struct LatentNoise {
  Eigen::RowVectorXd local;
  Eigen::RowVectorXd global;
};

struct LossVars {
  Var rec;
  Var kl;
  Var contra;
  Var total;
};

/// Mean recon + mean KL over the batch + contrastive over the sampled z_l.
LossVars total_loss(const BoundParams& p, std::span<const TrainingExample> batch,
                    std::span<const LatentNoise> noise, const LossWeights& w,
                    ContrastiveDiagnostics* diagnostics = nullptr);

LossBreakdown breakdown(const LossVars& v, const LossWeights& w);

/// Largest relative error between the analytic gradient of the total loss
/// and central differences with step `eps`, over every parameter entry.
double total_loss_grad_check(const ModelParams& params, std::span<const TrainingExample> batch,
                             std::span<const LatentNoise> noise, const LossWeights& w,
                             double eps = 1e-6);

}  // namespace pgd

#endif  // PGDVAE_OBJECTIVE_HPP
