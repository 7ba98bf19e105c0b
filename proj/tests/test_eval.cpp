#include <doctest.h>

#include "pgdvae/datagen.hpp"
#include "pgdvae/eval.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace pgd;

namespace {

PeriodicGraph plain(const BinaryMatrix& a) {
  PeriodicGraph g;
  g.adjacency = a;
  return g;
}

PeriodicGraph path(Index k) {
  BinaryMatrix a = BinaryMatrix::Zero(k, k);
  for (Index i = 0; i + 1 < k; ++i) a(i, i + 1) = a(i + 1, i) = 1;
  return plain(a);
}

PeriodicGraph relabeled(const PeriodicGraph& g, std::mt19937_64& rng) {
  return plain(permute(g.active(), test::random_permutation(g.active_size(), rng)));
}

std::vector<PeriodicGraph> random_graphs(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PeriodicGraph> out;
  while (static_cast<int>(out.size()) < count) {
    PeriodicGraph g = assemble(test::random_decomposition(rng, 4, 4));
    if (g.active_size() >= 2) out.push_back(std::move(g));
  }
  return out;
}

std::vector<PeriodicGraph> dataset_graphs() {
  DatasetManifest m;
  m.m_low = 2;
  m.m_high = 6;
  m.counts = {{UnitKind::triangle, 10}, {UnitKind::grid, 10}, {UnitKind::hexagon, 10}};
  std::vector<PeriodicGraph> out;
  for (const auto& r : generate_dataset(m)) out.push_back(r.graph());
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("histogram bins values over the unit interval") {
  const std::vector<double> values{0.0, 0.005, 0.5, 1.0, 1.0};
  const auto h = histogram(values, 100, 0.0);
  CHECK(h[0] == doctest::Approx(0.4));
  CHECK(h[50] == doctest::Approx(0.2));
  CHECK(h[99] == doctest::Approx(0.4));
  CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(1.0));
  const auto smooth = histogram(values, 10, 1e-10);
  CHECK(std::accumulate(smooth.begin(), smooth.end(), 0.0) == doctest::Approx(1.0));
  CHECK(smooth[3] > 0);
  CHECK_THROWS_AS(histogram(values, 0, 0.0), std::invalid_argument);
}

TEST_CASE("kld of a set against itself vanishes") {
  const auto graphs = random_graphs(40, 1);
  CHECK(kld_metric(graphs, graphs, Statistic::clustering) <= 1e-9);
  CHECK(kld_metric(graphs, graphs, Statistic::density) <= 1e-9);
  auto shuffled = graphs;
  std::mt19937_64 rng(2);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(kld_metric(shuffled, graphs, Statistic::clustering) <= 1e-9);
}

TEST_CASE("two-spike kld sits at the smoothing ceiling") {
  const std::vector<PeriodicGraph> triangles(5, plain(test::cycle(3)));
  const std::vector<PeriodicGraph> paths(7, path(4));
  const double eps = 1e-10;
  const double z = 1.0 + 100 * eps;
  const double a = (1.0 + eps) / z;
  const double b = eps / z;
  const double oracle = a * std::log(a / b) + b * std::log(b / a);
  const double kld = kld_metric(triangles, paths, Statistic::clustering);
  CHECK(kld == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(kld > 20.0);
}

TEST_CASE("doubling both sets leaves kld unchanged") {
  const auto gen = random_graphs(15, 3);
  const auto ref = random_graphs(20, 4);
  auto gen2 = gen;
  gen2.insert(gen2.end(), gen.begin(), gen.end());
  auto ref2 = ref;
  ref2.insert(ref2.end(), ref.begin(), ref.end());
  for (auto s : {Statistic::clustering, Statistic::density}) {
    CHECK(kld_metric(gen2, ref2, s) == doctest::Approx(kld_metric(gen, ref, s)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(kld_metric({}, ref, Statistic::density), std::invalid_argument);
  // statistic errors propagate
  const std::vector<PeriodicGraph> single{plain(BinaryMatrix::Zero(1, 1))};
  CHECK_THROWS_AS(kld_metric(single, ref, Statistic::density), std::invalid_argument);
  CHECK_NOTHROW(kld_metric(single, ref, Statistic::clustering));
}

TEST_CASE("kl divergence basics") {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)));
  CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("uniqueness examples") {
  const auto g1 = plain(test::cycle(4));
  const auto g2 = path(4);
  CHECK(uniqueness(std::vector<PeriodicGraph>{g1, g1, g2}) == doctest::Approx(2.0 / 3.0));
  CHECK(uniqueness(std::vector<PeriodicGraph>(5, g1)) == doctest::Approx(0.2));
  CHECK(uniqueness(std::vector<PeriodicGraph>{g1, g2, plain(test::cycle(3))}) == 1.0);
  CHECK_THROWS_AS(uniqueness({}), std::invalid_argument);
}

TEST_CASE("novelty examples") {
  const auto g1 = plain(test::cycle(4));
  const auto g2 = path(4);
  const auto g3 = plain(test::cycle(5));
  const std::vector<PeriodicGraph> training{g1, g3};
  CHECK(novelty(std::vector<PeriodicGraph>{g1, g3, g1}, training) == 0.0);
  CHECK(novelty(std::vector<PeriodicGraph>{g2, path(3)}, training) == 1.0);
  CHECK(novelty(std::vector<PeriodicGraph>{g1, g2}, training) == 0.5);
  CHECK_THROWS_AS(novelty(training, {}), std::invalid_argument);
}

TEST_CASE("uniqueness and novelty ignore node labels") {
  const auto training = dataset_graphs();
  std::mt19937_64 rng(9);
  std::vector<PeriodicGraph> permuted;
  for (const auto& g : training) permuted.push_back(relabeled(g, rng));
  CHECK(uniqueness(permuted) == doctest::Approx(uniqueness(training)));
  CHECK(novelty(permuted, training) == 0.0);
  // cycles and paths are label-free under the BFS rule
  std::vector<PeriodicGraph> mixed{plain(test::cycle(6)), path(5), plain(test::cycle(6)), path(5)};
  std::vector<PeriodicGraph> mixed_perm;
  for (const auto& g : mixed) mixed_perm.push_back(relabeled(g, rng));
  CHECK(uniqueness(mixed_perm) == 0.5);
}

TEST_CASE("evaluate bundles all metrics and serializes them") {
  const auto gen = random_graphs(10, 5);
  const auto ref = random_graphs(10, 6);
  const EvalReport r = evaluate(gen, ref, ref);
  CHECK(r.sample_count == 10);
  CHECK(r.bins == 100);
  CHECK(r.kld_cluster >= 0);
  CHECK(r.kld_dense >= 0);
  CHECK(r.uniqueness >= 0);
  CHECK(r.uniqueness <= 1);
  const auto j = nlohmann::json::parse(to_json_string(r));
  for (const char* key : {"kld_cluster", "kld_dense", "uniqueness", "novelty", "sample_count", "bins", "smoothing"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["novelty"].get<double>() == r.novelty);
}

TEST_CASE("latent traversal wiring") {
  ModelConfig c;
  const auto params = ModelParams::initialize(c, 4);
  std::mt19937_64 rng(8);
  const LatentPair base = sample_prior(c, rng);
  const std::vector<double> values{-3.0, -1.5, 0.0, 1.5, 3.0};

  const auto local_sweep = latent_traversal(params, base, LatentKind::local, 2, values);
  REQUIRE(local_sweep.size() == values.size());
  for (const auto& s : local_sweep) {
    CHECK(s.decomposition.global == local_sweep.front().decomposition.global);
    CHECK(is_periodic(s.graph, s.graph.n));
  }
  CHECK(local_sweep[1].value == -1.5);

  const auto global_sweep = latent_traversal(params, base, LatentKind::global, 7, values);
  for (const auto& s : global_sweep) {
    CHECK(s.decomposition.local == global_sweep.front().decomposition.local);
  }

  CHECK(latent_traversal(params, base, LatentKind::local, 0, {}).empty());
  CHECK_THROWS_AS(latent_traversal(params, base, LatentKind::global, c.global_dim, values),
                  std::invalid_argument);
  CHECK_THROWS_AS(latent_traversal(params, base, LatentKind::local, -1, values), std::invalid_argument);
  CHECK(parse_latent_kind("global") == LatentKind::global);
  CHECK_THROWS_AS(parse_latent_kind("both"), std::invalid_argument);
}

TEST_CASE("rank correlations match brute force") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 9;
    const auto a = test::random_permutation(n, rng);
    const auto b = test::random_permutation(n, rng);
    const std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    CHECK(spearman(a, b) == doctest::Approx(pearson(x, y)).epsilon(1e-12));

    double score = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double sa = (a[i] > a[j]) - (a[i] < a[j]);
        const double sb = (b[i] > b[j]) - (b[i] < b[j]);
        score += sa * sb;
      }
    }
    CHECK(kendall(a, b) == doctest::Approx(score / (n * (n - 1.0))).epsilon(1e-12));
  }
  const std::vector<Index> up{0, 1, 2, 3}, down{3, 2, 1, 0};
  CHECK(spearman(up, up) == 1.0);
  CHECK(spearman(up, down) == -1.0);
  CHECK(kendall(up, down) == -1.0);
  CHECK_THROWS_AS(spearman(up, std::vector<Index>{0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(kendall(std::vector<Index>{0}, std::vector<Index>{0}), std::invalid_argument);
}

TEST_CASE("bfs stability favors bfs orderings") {
  const auto graphs = dataset_graphs();
  const BfsStability s = bfs_stability(graphs, 6, 3);
  for (double v : {s.spearman_bfs, s.kendall_bfs, s.spearman_random, s.kendall_random}) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(s.spearman_bfs > s.spearman_random);
  CHECK(s.kendall_bfs > s.kendall_random);
  CHECK(std::abs(s.spearman_random) < 0.2);

  const BfsStability again = bfs_stability(graphs, 6, 3);
  CHECK(again.spearman_bfs == s.spearman_bfs);
  CHECK(again.kendall_random == s.kendall_random);

  CHECK_THROWS_AS(bfs_stability(graphs, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(bfs_stability({}, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(bfs_stability(std::vector<PeriodicGraph>{plain(BinaryMatrix::Zero(1, 1))}, 5, 0),
                  std::invalid_argument);
}

TEST_CASE("disentanglement score") {
  ModelConfig c;
  const auto params = ModelParams::initialize(c, 2);
  const auto graphs = dataset_graphs();
  const auto score = disentanglement_score(params, graphs);
  CHECK(score.within <= 1.0);
  CHECK(score.cross <= 1.0);
  CHECK(std::abs(score.gap()) < 0.2);
  CHECK(score.gap() == doctest::Approx(score.within - score.cross));

  std::vector<PeriodicGraph> one_label(graphs.begin(), graphs.begin() + 3);
  for (auto& g : one_label) g.unit_label = UnitKind::grid;
  CHECK_THROWS_WITH_AS(disentanglement_score(params, one_label), doctest::Contains("needs >= 2 labels"),
                       std::invalid_argument);
  auto unlabeled = graphs;
  unlabeled[4].unit_label.reset();
  CHECK_THROWS_AS(disentanglement_score(params, unlabeled), std::invalid_argument);
}

}  // TEST_SUITE
