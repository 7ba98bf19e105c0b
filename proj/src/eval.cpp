#include "pgdvae/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace pgd {

double graph_statistic(const PeriodicGraph& g, Statistic s) {
  return s == Statistic::clustering ? avg_clustering(g) : density(g);
}

std::vector<double> histogram(std::span<const double> values, int bins, double smoothing) {
  if (bins < 1) throw std::invalid_argument("histogram: bins must be positive");
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (double x : values) {
    const double clamped = std::clamp(x, 0.0, 1.0);
    const auto bin = std::min(bins - 1, static_cast<int>(std::floor(clamped * bins)));
    h[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double count = static_cast<double>(values.size());
  double total = 0.0;
  for (double& v : h) {
    v = (count > 0 ? v / count : 0.0) + smoothing;
    total += v;
  }
  for (double& v : h) v /= total;
  return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, kl);
}

namespace {

std::vector<double> statistics(std::span<const PeriodicGraph> graphs, Statistic s) {
  std::vector<double> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(graph_statistic(g, s));
  return out;
}

std::string canonical_key(const PeriodicGraph& g) {
  const BinaryMatrix c = canonical_adjacency(g);
  std::string key = std::to_string(c.rows()) + ":";
  key.reserve(key.size() + static_cast<std::size_t>(c.size()));
  for (Index i = 0; i < c.rows(); ++i) {
    for (Index j = 0; j < c.cols(); ++j) key.push_back(c(i, j) ? '1' : '0');
  }
  return key;
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double denom = std::max(a.norm() * b.norm(), 1e-12);
  return a.dot(b) / denom;
}

std::vector<Index> ranks_of(const std::vector<Index>& order_in_original_ids) {
  std::vector<Index> rank(order_in_original_ids.size());
  for (std::size_t r = 0; r < order_in_original_ids.size(); ++r) {
    rank[static_cast<std::size_t>(order_in_original_ids[r])] = static_cast<Index>(r);
  }
  return rank;
}

}  // namespace

double kld_metric(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> reference,
                  Statistic statistic, const KldOptions& options) {
  if (generated.empty() || reference.empty()) {
    throw std::invalid_argument("kld_metric: both graph sets must be nonempty");
  }
  const auto gen = statistics(generated, statistic);
  const auto ref = statistics(reference, statistic);
  const auto p_ref = histogram(ref, options.bins, options.smoothing);
  const auto p_gen = histogram(gen, options.bins, options.smoothing);
  return kl_divergence(p_ref, p_gen);
}

double uniqueness(std::span<const PeriodicGraph> generated) {
  if (generated.empty()) throw std::invalid_argument("uniqueness: empty graph set");
  std::set<std::string> keys;
  for (const auto& g : generated) keys.insert(canonical_key(g));
  return static_cast<double>(keys.size()) / static_cast<double>(generated.size());
}

double novelty(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> training) {
  if (generated.empty() || training.empty()) {
    throw std::invalid_argument("novelty: both graph sets must be nonempty");
  }
  std::set<std::string> seen;
  for (const auto& g : training) seen.insert(canonical_key(g));
  std::size_t fresh = 0;
  for (const auto& g : generated) fresh += seen.count(canonical_key(g)) == 0 ? 1 : 0;
  return static_cast<double>(fresh) / static_cast<double>(generated.size());
}

EvalReport evaluate(std::span<const PeriodicGraph> generated, std::span<const PeriodicGraph> reference,
                    std::span<const PeriodicGraph> training, const KldOptions& options) {
  EvalReport r;
  r.kld_cluster = kld_metric(generated, reference, Statistic::clustering, options);
  r.kld_dense = kld_metric(generated, reference, Statistic::density, options);
  r.uniqueness = uniqueness(generated);
  r.novelty = novelty(generated, training);
  r.sample_count = generated.size();
  r.bins = options.bins;
  r.smoothing = options.smoothing;
  return r;
}

std::string to_json_string(const EvalReport& r) {
  nlohmann::ordered_json j{{"kld_cluster", r.kld_cluster}, {"kld_dense", r.kld_dense},
                           {"uniqueness", r.uniqueness},   {"novelty", r.novelty},
                           {"sample_count", r.sample_count}, {"bins", r.bins},
                           {"smoothing", r.smoothing}};
  return j.dump(2);
}

LatentKind parse_latent_kind(std::string_view name) {
  if (name == "local") return LatentKind::local;
  if (name == "global") return LatentKind::global;
  throw std::invalid_argument("unknown latent '" + std::string(name) + "'");
}

std::vector<TraversalStep> latent_traversal(const ModelParams& params, const LatentPair& base,
                                            LatentKind which, Index dim,
                                            std::span<const double> values) {
  const Index width = which == LatentKind::local ? base.local.size() : base.global.size();
  if (dim < 0 || dim >= width) {
    throw std::invalid_argument("latent_traversal: dim " + std::to_string(dim) +
                                " outside latent width " + std::to_string(width));
  }
  std::vector<TraversalStep> steps;
  for (double v : values) {
    LatentPair z = base;
    (which == LatentKind::local ? z.local : z.global)(dim) = v;
    TraversalStep s;
    s.value = v;
    s.graph = sample_graph(params, z, SampleMode::threshold, 0);
    s.decomposition = decompose(s.graph, s.graph.n);
    s.clustering = avg_clustering(s.graph);
    s.density = s.graph.active_size() >= 2 ? density(s.graph)
                                           : std::numeric_limits<double>::quiet_NaN();
    steps.push_back(std::move(s));
  }
  return steps;
}

double spearman(std::span<const Index> a, std::span<const Index> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: needs two rank vectors of equal length >= 2");
  }
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i] - b[i]);
    d2 += d * d;
  }
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

double kendall(std::span<const Index> a, std::span<const Index> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("kendall: needs two rank vectors of equal length >= 2");
  }
  double concordant = 0.0;
  double discordant = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const auto s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) concordant += 1.0;
      else if (s < 0) discordant += 1.0;
    }
  }
  const double n = static_cast<double>(a.size());
  return (concordant - discordant) / (0.5 * n * (n - 1.0));
}

BfsStability bfs_stability(std::span<const PeriodicGraph> graphs, int permutations, std::uint64_t seed) {
  if (graphs.empty()) throw std::invalid_argument("bfs_stability: no graphs");
  if (permutations < 2) throw std::invalid_argument("bfs_stability: needs at least two permutations");
  std::mt19937_64 rng(seed);
  BfsStability out;
  std::size_t pairs = 0;
  for (const auto& g : graphs) {
    const BinaryMatrix a = g.active();
    const auto N = static_cast<std::size_t>(a.rows());
    if (N < 2) continue;
    std::vector<std::vector<Index>> bfs_ranks, random_ranks;
    for (int p = 0; p < permutations; ++p) {
      // relabel[i] = original id of the node placed at index i.
      std::vector<Index> relabel(N);
      std::iota(relabel.begin(), relabel.end(), Index{0});
      std::shuffle(relabel.begin(), relabel.end(), rng);
      PeriodicGraph shuffled;
      shuffled.adjacency = permute(a, relabel);
      std::vector<Index> order = bfs_canonical_order(shuffled);
      for (auto& v : order) v = relabel[static_cast<std::size_t>(v)];
      bfs_ranks.push_back(ranks_of(order));

      std::vector<Index> random_order(N);
      std::iota(random_order.begin(), random_order.end(), Index{0});
      std::shuffle(random_order.begin(), random_order.end(), rng);
      for (auto& v : random_order) v = relabel[static_cast<std::size_t>(v)];
      random_ranks.push_back(ranks_of(random_order));
    }
    for (int p = 0; p < permutations; ++p) {
      for (int q = p + 1; q < permutations; ++q) {
        out.spearman_bfs += spearman(bfs_ranks[p], bfs_ranks[q]);
        out.kendall_bfs += kendall(bfs_ranks[p], bfs_ranks[q]);
        out.spearman_random += spearman(random_ranks[p], random_ranks[q]);
        out.kendall_random += kendall(random_ranks[p], random_ranks[q]);
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw std::invalid_argument("bfs_stability: every graph has fewer than two nodes");
  const double inv = 1.0 / static_cast<double>(pairs);
  out.spearman_bfs *= inv;
  out.kendall_bfs *= inv;
  out.spearman_random *= inv;
  out.kendall_random *= inv;
  return out;
}

DisentanglementScore disentanglement_score(const ModelParams& params,
                                           std::span<const PeriodicGraph> labeled, LatentKind which) {
  std::set<UnitKind> kinds;
  for (const auto& g : labeled) {
    if (!g.unit_label) throw std::invalid_argument("disentanglement_score: unlabeled graph");
    kinds.insert(*g.unit_label);
  }
  if (kinds.size() < 2) throw std::invalid_argument("disentanglement_score: needs >= 2 labels");

  std::vector<Eigen::RowVectorXd> means;
  for (const auto& g : labeled) {
    const LatentPair z = encode_means(params, g);
    means.push_back(which == LatentKind::local ? z.local : z.global);
  }
  double within = 0.0, cross = 0.0;
  std::size_t n_within = 0, n_cross = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      const double c = cosine(means[i], means[j]);
      if (labeled[i].unit_label == labeled[j].unit_label) {
        within += c;
        ++n_within;
      } else {
        cross += c;
        ++n_cross;
      }
    }
  }
  return {n_within ? within / static_cast<double>(n_within) : 0.0,
          cross / static_cast<double>(n_cross)};
}

}  // namespace pgd
