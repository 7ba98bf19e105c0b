#include <doctest.h>

#include "pgdvae/objective.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace pgd;

namespace {

// Straight transcription of the contrastive sum, one anchor/positive pair at a time.
double contrastive_oracle(const MatrixXd& z, const std::vector<int>& labels, double tau,
                          double beta, bool self_pairs = true) {
  const auto B = static_cast<Index>(labels.size());
  auto sim = [&](Index a, Index b) { return z.row(a).dot(z.row(b)) / (z.row(a).norm() * z.row(b).norm()); };
  double total = 0.0;
  for (Index j = 0; j < B; ++j) {
    double denom = 0.0;
    for (Index t = 0; t < B; ++t) {
      if (labels[t] != labels[j]) denom += std::exp(sim(j, t) / tau);
    }
    for (Index k = 0; k < B; ++k) {
      if (labels[k] != labels[j] || (k == j && !self_pairs)) continue;
      total += std::log(std::exp(sim(j, k) / tau) / denom);
    }
  }
  return -beta * total;
}

double contrastive(const MatrixXd& z, const std::vector<int>& labels, const LossWeights& w,
                   ContrastiveDiagnostics* diag = nullptr) {
  Tape t;
  return contrastive_loss(t.leaf(z), labels, w, diag).scalar();
}

LossWeights unit_weights() {
  LossWeights w;
  w.temperature = 1.0;
  w.beta_contra = 1.0;
  return w;
}

ProbabilityVars constant_probs(Tape& t, double p, Index n_max, Index m_max) {
  return {t.leaf(MatrixXd::Constant(n_max, n_max, p)), t.leaf(MatrixXd::Constant(n_max, n_max, p)),
          t.leaf(MatrixXd::Constant(m_max, m_max, p))};
}

double recon(const ProbabilityVars& p, const PaddedTargets& t) { return recon_loss(p, t).scalar(); }

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 6;
  c.clusters = 2;
  c.local_dim = 3;
  c.global_dim = 3;
  c.n_max = 3;
  c.m_max = 3;
  return c;
}

LatentNoise noise_for(const ModelConfig& c, std::mt19937_64& rng) {
  const LatentPair z = sample_prior(c, rng);
  return {z.local, z.global};
}

TrainingExample example(const Decomposition& d, std::optional<UnitKind> label, const ModelConfig& c) {
  PeriodicGraph g = assemble(d);
  g.unit_label = label;
  return make_example(g, d.n(), c);
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("recon loss examples") {
  const PaddedTargets target = pad_targets(test::two_triangles(), 6, 8);
  Tape t;
  const ProbabilityVars exact{t.leaf(target.local), t.leaf(target.neighborhood), t.leaf(target.global)};
  CHECK(recon(exact, target) <= 16 * 1e-7);
  CHECK(recon(exact, target) >= 0.0);

  CHECK(recon(constant_probs(t, 0.5, 6, 8), target) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const ProbabilityVars flipped{t.leaf((1.0 - target.local.array()).matrix()),
                                t.leaf((1.0 - target.neighborhood.array()).matrix()),
                                t.leaf((1.0 - target.global.array()).matrix())};
  CHECK(recon(flipped, target) == doctest::Approx(-std::log(1e-7)).epsilon(1e-6));
  CHECK(-std::log(1e-7) == doctest::Approx(16.118).epsilon(1e-4));
}

TEST_CASE("recon loss errors") {
  PaddedTargets target = pad_targets(test::two_triangles(), 6, 8);
  Tape t;
  target.local(0, 1) = 0.5;
  CHECK_THROWS_AS(recon_loss(constant_probs(t, 0.5, 6, 8), target), std::invalid_argument);
  CHECK_THROWS_AS(recon_loss(constant_probs(t, 0.5, 5, 8), pad_targets(test::two_triangles(), 6, 8)),
                  ad::ShapeError);
  CHECK_THROWS_AS(pad_targets(test::two_triangles(), 2, 8), std::invalid_argument);
}

TEST_CASE("recon loss is minimized at p = t") {
  const PaddedTargets target = pad_targets(test::two_triangles(), 6, 8);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  Tape t;
  const ProbabilityVars exact{t.leaf(target.local), t.leaf(target.neighborhood), t.leaf(target.global)};
  const double best = recon(exact, target);
  for (int trial = 0; trial < 100; ++trial) {
    auto nudge = [&](const MatrixXd& m) {
      MatrixXd out = m;
      for (Index i = 0; i < out.size(); ++i) out.data()[i] = std::clamp(out.data()[i] + u(rng), 0.0, 1.0);
      return out;
    };
    const ProbabilityVars other{t.leaf(nudge(target.local)), t.leaf(nudge(target.neighborhood)),
                                t.leaf(nudge(target.global))};
    CHECK(recon(other, target) >= best);
  }
}

TEST_CASE("kl loss examples") {
  Tape t;
  auto kl = [&](const MatrixXd& mu, const MatrixXd& ls, double beta) {
    LossWeights w;
    w.beta_local = beta;
    w.beta_global = 0.0;
    const Encoding e{{t.leaf(mu), t.leaf(ls)}, {t.leaf(MatrixXd::Zero(1, 2)), t.leaf(MatrixXd::Zero(1, 2))}};
    return kl_loss(e, w).scalar();
  };
  CHECK(kl(MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 2), 1.0) == 0.0);
  MatrixXd mu(1, 2);
  mu << 1, 0;
  CHECK(kl(mu, MatrixXd::Zero(1, 2), 1.0) == doctest::Approx(0.5));
  CHECK(kl(mu, MatrixXd::Zero(1, 2), 0.1) == doctest::Approx(0.05));

  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    MatrixXd m(1, 4), s(1, 4);
    for (Index k = 0; k < 4; ++k) {
      m(0, k) = normal(rng);
      s(0, k) = normal(rng);
    }
    CHECK(kl(m, s, 1.0) >= 0.0);
  }
}

TEST_CASE("contrastive loss: three-point example") {
  MatrixXd z(3, 2);
  z << 1, 0, 1, 0, 0, 1;
  const std::vector<int> labels{0, 0, 1};
  // label 0: four pairs of log(e / e^0); label 1: one pair of log(e / 2)
  const double expected = -(4.0 + (1.0 - std::log(2.0)));
  CHECK(contrastive_oracle(z, labels, 1.0, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(contrastive(z, labels, unit_weights()) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(-4.30685).epsilon(1e-5));
}

TEST_CASE("contrastive loss: identical embeddings") {
  const MatrixXd z = MatrixXd::Constant(4, 3, 0.7);
  const std::vector<int> labels{0, 0, 1, 1};
  // every log term is -log(2) and there are 8 ordered pairs
  CHECK(contrastive(z, labels, unit_weights()) == doctest::Approx(8.0 * std::log(2.0)));
}

TEST_CASE("contrastive loss agrees with the oracle") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    MatrixXd z(7, 4);
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
    std::vector<int> labels(7);
    for (auto& l : labels) l = label(rng);
    labels[0] = 0;
    labels[1] = 1;
    LossWeights w;
    w.include_self_pairs = trial % 2 == 0;
    CHECK(contrastive(z, labels, w) ==
          doctest::Approx(contrastive_oracle(z, labels, w.temperature, w.beta_contra, w.include_self_pairs))
              .epsilon(1e-10));
  }
}

TEST_CASE("contrastive loss: degenerate weights and labels") {
  MatrixXd z(3, 2);
  z << 1, 0, 0.5, 0.5, 0, 1;
  LossWeights w;
  w.beta_contra = 0.0;
  CHECK(contrastive(z, {0, 0, 1}, w) == 0.0);

  ContrastiveDiagnostics diag;
  CHECK(contrastive(z, {2, 2, 2}, LossWeights{}, &diag) == 0.0);
  CHECK(diag.single_label_batches == 1);
  CHECK_THROWS_AS(contrastive(z, {0, 1}, LossWeights{}), std::invalid_argument);
}

TEST_CASE("contrastive loss decreases as same-label points align") {
  // rotate the second label-0 point toward the first; cross-label cosines stay fixed
  const std::vector<int> labels{0, 0, 1};
  double previous = std::numeric_limits<double>::infinity();
  for (double angle = 1.5; angle >= 0.0; angle -= 0.25) {
    MatrixXd z(3, 3);
    z << 1, 0, 0, std::cos(angle), std::sin(angle), 0, 0, 0, 1;
    const double loss = contrastive(z, labels, LossWeights{});
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("contrastive gradient") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<MatrixXd> inputs{MatrixXd(5, 3)};
  for (Index i = 0; i < inputs[0].size(); ++i) inputs[0].data()[i] = normal(rng);
  const std::vector<int> labels{0, 1, 0, 2, 1};
  const double err = ad::grad_check<double>(
      [&](Tape&, std::span<const Var> in) { return contrastive_loss(in[0], labels, LossWeights{}); },
      inputs, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("weights validation") {
  LossWeights w;
  CHECK_NOTHROW(validate(w));
  w.temperature = 0.0;
  CHECK_THROWS_AS(validate(w), std::invalid_argument);
  w = LossWeights{};
  w.beta_local = -1.0;
  CHECK_THROWS_AS(validate(w), std::invalid_argument);
}

TEST_CASE("total loss composition") {
  const ModelConfig c = small_config();
  const ModelParams params = ModelParams::initialize(c, 3);
  std::mt19937_64 rng(1);
  const Decomposition tri = test::two_triangles();
  Decomposition pair{test::cycle(2), test::cycle(3), test::mat({{0, 0}, {1, 0}})};

  std::vector<TrainingExample> one{example(tri, UnitKind::triangle, c)};
  std::vector<LatentNoise> one_noise{noise_for(c, rng)};
  Tape t;
  ContrastiveDiagnostics diag;
  const LossBreakdown single = breakdown(total_loss(bind(t, params), one, one_noise, LossWeights{}, &diag),
                                         LossWeights{});
  CHECK(single.l_contra == 0.0);
  CHECK(diag.single_label_batches == 1);
  CHECK(single.total == doctest::Approx(single.l_rec + single.l_kl));

  std::vector<TrainingExample> two{example(tri, UnitKind::triangle, c), example(pair, UnitKind::grid, c)};
  std::vector<LatentNoise> two_noise{noise_for(c, rng), noise_for(c, rng)};
  LossWeights zero;
  zero.beta_local = zero.beta_global = zero.beta_contra = 0.0;
  Tape t2;
  const LossBreakdown flat = breakdown(total_loss(bind(t2, params), two, two_noise, zero), zero);
  CHECK(flat.total == flat.l_rec);
  CHECK(flat.l_kl == 0.0);

  Tape t3;
  const LossBreakdown full = breakdown(total_loss(bind(t3, params), two, two_noise, LossWeights{}),
                                       LossWeights{});
  CHECK(full.total == doctest::Approx(full.l_rec + full.l_kl + full.l_contra).epsilon(1e-12));
  CHECK(full.l_rec == doctest::Approx(flat.l_rec).epsilon(1e-15));
  CHECK(full.l_contra != 0.0);

  Tape t4;
  CHECK_THROWS_AS(total_loss(bind(t4, params), std::span<const TrainingExample>{}, {}, LossWeights{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(total_loss(bind(t4, params), two, one_noise, LossWeights{}), std::invalid_argument);
}

TEST_CASE("total loss gradient on a small model") {
  const ModelConfig c = small_config();
  ModelParams params = ModelParams::initialize(c, 9);
  std::mt19937_64 rng(2);
  // zero biases put every ReLU of a narrow net exactly on its kink
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& [name, value] : params.tensors) {
    for (Index i = 0; i < value.size(); ++i) value.data()[i] += jitter(rng);
  }
  const std::vector<TrainingExample> batch{
      example(test::two_triangles(), UnitKind::triangle, c),
      example({test::cycle(2), test::cycle(3), test::mat({{0, 0}, {1, 0}})}, UnitKind::grid, c)};
  const std::vector<LatentNoise> noise{noise_for(c, rng), noise_for(c, rng)};

  const double err = total_loss_grad_check(params, batch, noise, LossWeights{});
  CHECK(err < 1e-4);
}

TEST_CASE("make_example") {
  const ModelConfig c;
  PeriodicGraph g = assemble(test::two_triangles());
  g.unit_label = UnitKind::hexagon;
  g.adjacency = pad(g.adjacency, 48);
  const TrainingExample ex = make_example(g, 3, c);
  CHECK(ex.label == static_cast<int>(UnitKind::hexagon));
  CHECK(ex.targets.local.rows() == 6);
  CHECK(ex.targets.global.rows() == 8);
  CHECK(ex.targets.local.topLeftCorner(3, 3) == test::cycle(3).cast<double>());
  CHECK(ex.targets.neighborhood(0, 0) == 1.0);
  CHECK(ex.targets.global.sum() == 2.0);
}

}  // TEST_SUITE
