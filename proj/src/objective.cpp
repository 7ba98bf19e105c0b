#include "pgdvae/objective.hpp"

#include <set>
#include <stdexcept>

namespace pgd {

void validate(const LossWeights& w) {
  if (w.beta_local < 0 || w.beta_global < 0 || w.beta_contra < 0) {
    throw std::invalid_argument("loss weights: betas must be non-negative");
  }
  if (!(w.temperature > 0)) throw std::invalid_argument("loss weights: temperature must be positive");
}

PaddedTargets pad_targets(const Decomposition& d, Index n_max, Index m_max) {
  if (d.n() > n_max || d.m() > m_max) {
    throw std::invalid_argument("pad_targets: decomposition (n=" + std::to_string(d.n()) +
                                ", m=" + std::to_string(d.m()) + ") exceeds model bounds (" +
                                std::to_string(n_max) + ", " + std::to_string(m_max) + ")");
  }
  PaddedTargets t{MatrixXd::Zero(n_max, n_max), MatrixXd::Zero(n_max, n_max),
                  MatrixXd::Zero(m_max, m_max)};
  t.local.topLeftCorner(d.n(), d.n()) = d.local.cast<double>();
  t.neighborhood.topLeftCorner(d.n(), d.n()) = d.neighborhood.cast<double>();
  t.global.topLeftCorner(d.m(), d.m()) = d.global.cast<double>();
  return t;
}

namespace {

Var binary_cross_entropy_sum(const Var& probs, const MatrixXd& target) {
  if (probs.rows() != target.rows() || probs.cols() != target.cols()) {
    throw ad::ShapeError("recon_loss: probability/target shape mismatch");
  }
  if (!(target.array() == 0.0 || target.array() == 1.0).all()) {
    throw std::invalid_argument("recon_loss: target has entries other than 0/1");
  }
  Tape& tape = probs.tape();
  const Var p = ad::clamp(probs, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const Var t = tape.constant(target);
  const Var not_t = tape.constant((1.0 - target.array()).matrix());
  const Var log_p = ad::log(p);
  const Var log_not_p = ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0));
  return ad::scale(ad::sum(ad::add(ad::mul(t, log_p), ad::mul(not_t, log_not_p))), -1.0);
}

Var gaussian_kl(const GaussianVars& g) {
  const Var two_log_sigma = ad::scale(g.log_sigma, 2.0);
  const Var inner = ad::sub(ad::add(ad::square(g.mu), ad::exp(two_log_sigma)),
                            ad::add_scalar(two_log_sigma, 1.0));
  return ad::scale(ad::sum(inner), 0.5);
}

Var zero_scalar(Tape& tape) { return tape.constant(MatrixXd::Zero(1, 1)); }

}  // namespace

Var recon_loss(const ProbabilityVars& probs, const PaddedTargets& target) {
  const Var total = ad::add(ad::add(binary_cross_entropy_sum(probs.local, target.local),
                                    binary_cross_entropy_sum(probs.neighborhood, target.neighborhood)),
                            binary_cross_entropy_sum(probs.global, target.global));
  const auto entries = target.local.size() + target.neighborhood.size() + target.global.size();
  return ad::scale(total, 1.0 / static_cast<double>(entries));
}

Var kl_loss(const Encoding& e, const LossWeights& w) {
  return ad::add(ad::scale(gaussian_kl(e.local), w.beta_local),
                 ad::scale(gaussian_kl(e.global), w.beta_global));
}

Var contrastive_loss(const Var& z_local, std::span<const int> labels, const LossWeights& w,
                     ContrastiveDiagnostics* diagnostics) {
  const Index B = z_local.rows();
  if (static_cast<Index>(labels.size()) != B) {
    throw std::invalid_argument("contrastive_loss: one label per row required");
  }
  Tape& tape = z_local.tape();
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) {
    if (diagnostics) ++diagnostics->single_label_batches;
    return zero_scalar(tape);
  }
  if (w.beta_contra == 0.0) return zero_scalar(tape);

  MatrixXd positives = MatrixXd::Zero(B, B);
  MatrixXd negatives = MatrixXd::Zero(B, B);
  MatrixXd positive_counts = MatrixXd::Zero(B, 1);
  for (Index j = 0; j < B; ++j) {
    for (Index k = 0; k < B; ++k) {
      const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(k)];
      if (same && (j != k || w.include_self_pairs)) {
        positives(j, k) = 1.0;
        positive_counts(j, 0) += 1.0;
      }
      if (!same) negatives(j, k) = 1.0;
    }
  }

  const Var unit = ad::normalize_rows(z_local);
  const Var logits = ad::scale(ad::matmul(unit, ad::transpose(unit)), 1.0 / w.temperature);
  const Var log_denominator =
      ad::log(ad::rowwise_sum(ad::mul(ad::exp(logits), tape.constant(negatives))));
  const Var positive_sum = ad::sum(ad::mul(logits, tape.constant(positives)));
  const Var denominator_sum = ad::sum(ad::mul(log_denominator, tape.constant(positive_counts)));
  return ad::scale(ad::sub(positive_sum, denominator_sum), -w.beta_contra);
}

TrainingExample make_example(const PeriodicGraph& g, Index n, const ModelConfig& config) {
  TrainingExample ex;
  ex.graph = g;
  ex.targets = pad_targets(decompose(g, n), config.n_max, config.m_max);
  ex.label = g.unit_label ? static_cast<int>(*g.unit_label) : -1;
  return ex;
}

LossVars total_loss(const BoundParams& p, std::span<const TrainingExample> batch,
                    std::span<const LatentNoise> noise, const LossWeights& w,
                    ContrastiveDiagnostics* diagnostics) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (noise.size() != batch.size()) throw std::invalid_argument("total_loss: one noise draw per graph");
  validate(w);
  Tape& tape = p.vars.begin()->second.tape();

  std::vector<Var> rec_terms, kl_terms, z_rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Encoding e = encode(p, batch[i].graph);
    const Var z_l = reparameterize(e.local.mu, e.local.log_sigma, tape.constant(noise[i].local));
    const Var z_g = reparameterize(e.global.mu, e.global.log_sigma, tape.constant(noise[i].global));
    rec_terms.push_back(recon_loss(decode(p, z_l, z_g), batch[i].targets));
    kl_terms.push_back(kl_loss(e, w));
    z_rows.push_back(z_l);
    labels.push_back(batch[i].label);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossVars out;
  out.rec = ad::scale(ad::sum(ad::vcat<double>(rec_terms)), inv);
  out.kl = ad::scale(ad::sum(ad::vcat<double>(kl_terms)), inv);
  out.contra = contrastive_loss(ad::vcat<double>(z_rows), labels, w, diagnostics);
  out.total = ad::add(ad::add(out.rec, out.kl), out.contra);
  return out;
}

LossBreakdown breakdown(const LossVars& v, const LossWeights& w) {
  return {v.rec.scalar(), v.kl.scalar(), v.contra.scalar(), v.total.scalar(), w};
}

double total_loss_grad_check(const ModelParams& params, std::span<const TrainingExample> batch,
                             std::span<const LatentNoise> noise, const LossWeights& w, double eps) {
  std::vector<std::string> names;
  std::vector<MatrixXd> inputs;
  for (const auto& [name, value] : params.tensors) {
    names.push_back(name);
    inputs.push_back(value);
  }
  return ad::grad_check<double>(
      [&](Tape&, std::span<const Var> leaves) {
        BoundParams p;
        p.config = &params.config;
        for (std::size_t i = 0; i < names.size(); ++i) p.vars.emplace(names[i], leaves[i]);
        return total_loss(p, batch, noise, w).total;
      },
      inputs, eps);
}

}  // namespace pgd
