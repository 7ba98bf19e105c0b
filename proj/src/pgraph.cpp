#include "pgdvae/pgraph.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace pgd {

std::string_view to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::triangle: return "triangle";
    case UnitKind::grid: return "grid";
    case UnitKind::hexagon: return "hexagon";
  }
  return "unknown";
}

UnitKind parse_unit_kind(std::string_view name) {
  if (name == "triangle") return UnitKind::triangle;
  if (name == "grid") return UnitKind::grid;
  if (name == "hexagon") return UnitKind::hexagon;
  throw std::invalid_argument("unknown unit kind '" + std::string(name) + "'");
}

Index PeriodicGraph::active_size() const {
  if (n > 0 && m > 0) {
    if (n * m > adjacency.rows()) {
      throw std::invalid_argument("PeriodicGraph: n*m exceeds adjacency size");
    }
    return n * m;
  }
  return adjacency.rows();
}

BinaryMatrix PeriodicGraph::active() const {
  const Index k = active_size();
  return adjacency.topLeftCorner(k, k);
}

bool Decomposition::operator==(const Decomposition& other) const {
  return local == other.local && global == other.global && neighborhood == other.neighborhood;
}

namespace {

bool is_binary(const BinaryMatrix& a) {
  return (a.array() == 0 || a.array() == 1).all();
}

void require_simple(const BinaryMatrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument(std::string(what) + " is not square");
  }
  if (!is_binary(a)) {
    throw std::invalid_argument(std::string(what) + " has entries other than 0/1");
  }
  if (a != a.transpose()) {
    throw std::invalid_argument(std::string(what) + " is not symmetric");
  }
  if ((a.diagonal().array() != 0).any()) {
    throw std::invalid_argument(std::string(what) + " has a nonzero diagonal");
  }
}

std::vector<Index> degrees(const BinaryMatrix& a) {
  std::vector<Index> deg(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) deg[static_cast<std::size_t>(i)] = a.row(i).sum();
  return deg;
}

}  // namespace

void validate(const Decomposition& d) {
  if (d.n() < 1 || d.m() < 1) throw std::invalid_argument("decomposition: n and m must be positive");
  require_simple(d.local, "local");
  require_simple(d.global, "global");
  if (d.neighborhood.rows() != d.n() || d.neighborhood.cols() != d.n()) {
    throw std::invalid_argument("decomposition: neighborhood must be n x n");
  }
  if (!is_binary(d.neighborhood)) {
    throw std::invalid_argument("neighborhood has entries other than 0/1");
  }
}

PeriodicGraph assemble(const Decomposition& d) {
  validate(d);
  PeriodicGraph g;
  g.adjacency = assemble<int>(d.local, d.global, d.neighborhood);
  g.n = d.n();
  g.m = d.m();
  return g;
}

Decomposition decompose(const PeriodicGraph& g, Index n) {
  if (n < 1) throw std::invalid_argument("decompose: n must be positive");
  BinaryMatrix a = g.active();
  if (g.n == 0 || g.m == 0) {
    // Unknown unit count: strip trailing padding.
    Index k = a.rows();
    while (k > 0 && a.row(k - 1).isZero() && a.col(k - 1).isZero()) --k;
    a = a.topLeftCorner(k, k).eval();
  }
  require_simple(a, "adjacency");
  const Index size = a.rows();
  if (size == 0 || size % n != 0) {
    throw PeriodicityError("decompose: active size " + std::to_string(size) +
                           " is not divisible by n=" + std::to_string(n));
  }
  const Index m = size / n;

  Decomposition d;
  d.local = a.topLeftCorner(n, n);
  d.global = BinaryMatrix::Zero(m, m);
  d.neighborhood = BinaryMatrix::Zero(n, n);
  for (Index u = 1; u < m; ++u) {
    if (a.block(u * n, u * n, n, n) != d.local) {
      throw PeriodicityError("decompose: inconsistent diagonal blocks (unit " + std::to_string(u) +
                             " differs from unit 0)");
    }
  }
  bool seen = false;
  for (Index u = 0; u < m; ++u) {
    for (Index v = u + 1; v < m; ++v) {
      const auto block = a.block(u * n, v * n, n, n);
      if (block.isZero()) continue;
      if (!seen) {
        d.neighborhood = block;
        seen = true;
      } else if (block != d.neighborhood) {
        throw PeriodicityError("decompose: unequal nonzero off-diagonal blocks at units (" +
                               std::to_string(u) + "," + std::to_string(v) + ")");
      }
      d.global(u, v) = d.global(v, u) = 1;
    }
  }
  return d;
}

bool is_periodic(const PeriodicGraph& g, Index n) {
  try {
    const Decomposition d = decompose(g, n);
    const BinaryMatrix active = g.active();
    // decompose may have stripped trailing padding
    return pad(assemble(d).adjacency, active.rows()) == active;
  } catch (const std::exception&) {
    return false;
  }
}

BinaryMatrix pad(const BinaryMatrix& a, Index size) {
  if (a.rows() > size) {
    throw std::invalid_argument("pad: matrix of size " + std::to_string(a.rows()) +
                                " exceeds padded size " + std::to_string(size));
  }
  BinaryMatrix out = BinaryMatrix::Zero(size, size);
  out.topLeftCorner(a.rows(), a.cols()) = a;
  return out;
}

double avg_clustering(const PeriodicGraph& g) {
  const BinaryMatrix a = g.active();
  const Index N = a.rows();
  if (N == 0) throw std::invalid_argument("avg_clustering: graph has no nodes");
  double total = 0.0;
  std::vector<Index> nbrs;
  for (Index v = 0; v < N; ++v) {
    nbrs.clear();
    for (Index u = 0; u < N; ++u) {
      if (a(v, u) != 0) nbrs.push_back(u);
    }
    const auto deg = static_cast<Index>(nbrs.size());
    if (deg < 2) continue;
    Index links = 0;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) links += a(nbrs[i], nbrs[j]);
    }
    total += static_cast<double>(links) / (0.5 * static_cast<double>(deg * (deg - 1)));
  }
  return total / static_cast<double>(N);
}

double density(const PeriodicGraph& g) {
  const BinaryMatrix a = g.active();
  const Index N = a.rows();
  if (N < 2) throw std::invalid_argument("density: needs at least two nodes");
  const double edges = 0.5 * static_cast<double>(a.sum());
  return edges / (0.5 * static_cast<double>(N * (N - 1)));
}

std::vector<Index> bfs_canonical_order(const PeriodicGraph& g) {
  const BinaryMatrix a = g.active();
  const Index N = a.rows();
  const auto deg = degrees(a);
  auto before = [&](Index x, Index y) {
    const auto dx = deg[static_cast<std::size_t>(x)];
    const auto dy = deg[static_cast<std::size_t>(y)];
    return dx != dy ? dx > dy : x < y;
  };

  std::vector<Index> by_rank(static_cast<std::size_t>(N));
  std::iota(by_rank.begin(), by_rank.end(), Index{0});
  std::sort(by_rank.begin(), by_rank.end(), before);

  std::vector<char> visited(static_cast<std::size_t>(N), 0);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(N));
  std::vector<Index> frontier;
  for (Index root : by_rank) {
    if (visited[static_cast<std::size_t>(root)]) continue;
    std::queue<Index> queue;
    queue.push(root);
    visited[static_cast<std::size_t>(root)] = 1;
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop();
      order.push_back(v);
      frontier.clear();
      for (Index u = 0; u < N; ++u) {
        if (a(v, u) != 0 && !visited[static_cast<std::size_t>(u)]) frontier.push_back(u);
      }
      std::sort(frontier.begin(), frontier.end(), before);
      for (Index u : frontier) {
        visited[static_cast<std::size_t>(u)] = 1;
        queue.push(u);
      }
    }
  }
  return order;
}

BinaryMatrix permute(const BinaryMatrix& a, const std::vector<Index>& order) {
  const auto N = static_cast<Index>(order.size());
  if (N != a.rows()) throw std::invalid_argument("permute: order size does not match matrix");
  BinaryMatrix out(N, N);
  for (Index r = 0; r < N; ++r) {
    for (Index s = 0; s < N; ++s) {
      out(r, s) = a(order[static_cast<std::size_t>(r)], order[static_cast<std::size_t>(s)]);
    }
  }
  return out;
}

namespace {

using Coloring = std::vector<Index>;

// Colour refinement to a stable partition. Colour ids are ranks of sorted
// (colour, neighbour colours) signatures, so they never depend on node labels
// and cells keep their relative order.
Coloring refine(const BinaryMatrix& a, Coloring color) {
  const auto N = static_cast<std::size_t>(a.rows());
  std::size_t classes = std::set<Index>(color.begin(), color.end()).size();
  while (true) {
    std::vector<std::vector<Index>> sig(N);
    for (std::size_t v = 0; v < N; ++v) {
      auto& s = sig[v];
      for (std::size_t u = 0; u < N; ++u) {
        if (a(static_cast<Index>(v), static_cast<Index>(u)) != 0) s.push_back(color[u]);
      }
      std::sort(s.begin(), s.end());
      s.insert(s.begin(), color[v]);
    }
    std::vector<std::vector<Index>> distinct = sig;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t v = 0; v < N; ++v) {
      color[v] = std::lower_bound(distinct.begin(), distinct.end(), sig[v]) - distinct.begin();
    }
    if (distinct.size() == classes) return color;
    classes = distinct.size();
  }
}

// Individualization-refinement: branch on the nodes of the smallest open cell,
// keep the leaf whose relabeled matrix has the smallest code. Automorphisms
// found along the way (two leaves with equal codes) prune branches that are
// images of ones already explored.
class CanonicalSearch {
 public:
  explicit CanonicalSearch(const BinaryMatrix& a) : a_(a) {}

  std::vector<Index> run() {
    search(refine(a_, Coloring(static_cast<std::size_t>(a_.rows()), 0)));
    return best_order_;
  }

 private:
  void search(const Coloring& color) {
    const auto N = color.size();
    std::vector<std::size_t> size(N, 0);
    for (Index c : color) ++size[static_cast<std::size_t>(c)];
    std::size_t target = N;
    for (std::size_t c = 0; c < N; ++c) {
      if (size[c] > 1 && (target == N || size[c] < size[target])) target = c;
    }
    if (target == N) {
      leaf(color);
      return;
    }
    std::vector<Index> explored;
    for (std::size_t v = 0; v < N; ++v) {
      if (static_cast<std::size_t>(color[v]) != target) continue;
      const auto node = static_cast<Index>(v);
      if (same_orbit(node, explored)) continue;
      Coloring next(N);
      for (std::size_t u = 0; u < N; ++u) next[u] = 2 * color[u] + (u == v ? 0 : 1);
      prefix_.push_back(node);
      search(refine(a_, std::move(next)));
      prefix_.pop_back();
      explored.push_back(node);
      if (jump_ >= 0) {
        if (static_cast<std::size_t>(jump_) < prefix_.size()) return;
        jump_ = -1;
      }
    }
  }

  void leaf(const Coloring& color) {
    std::vector<Index> order(color.size());
    for (std::size_t v = 0; v < color.size(); ++v) order[static_cast<std::size_t>(color[v])] = static_cast<Index>(v);
    std::vector<char> code;
    code.reserve(color.size() * color.size() / 2);
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t j = i + 1; j < order.size(); ++j) code.push_back(static_cast<char>(a_(order[i], order[j])));
    }
    if (first_order_.empty()) {
      first_order_ = best_order_ = order;
      first_code_ = best_code_ = code;
      first_path_ = best_path_ = prefix_;
      return;
    }
    // A leaf equal to an earlier one makes the subtree since their paths
    // split an image of one already searched: unwind to that split.
    if (code == first_code_) {
      record(first_order_, order);
      jump_ = static_cast<std::ptrdiff_t>(split(first_path_));
    } else if (code == best_code_) {
      record(best_order_, order);
      jump_ = static_cast<std::ptrdiff_t>(split(best_path_));
    } else if (code < best_code_) {
      best_order_ = order;
      best_code_ = std::move(code);
      best_path_ = prefix_;
    }
  }

  std::size_t split(const std::vector<Index>& path) const {
    std::size_t d = 0;
    while (d < path.size() && d < prefix_.size() && path[d] == prefix_[d]) ++d;
    return d;
  }

  // The map from one leaf labeling to another with the same code.
  void record(const std::vector<Index>& from, const std::vector<Index>& to) {
    std::vector<Index> gamma(from.size());
    bool identity = true;
    for (std::size_t i = 0; i < from.size(); ++i) {
      gamma[static_cast<std::size_t>(from[i])] = to[i];
      identity = identity && from[i] == to[i];
    }
    if (!identity) automorphisms_.push_back(std::move(gamma));
  }

  // Orbits under the known automorphisms that fix the current prefix.
  bool same_orbit(Index v, const std::vector<Index>& others) const {
    if (others.empty() || automorphisms_.empty()) return false;
    std::vector<Index> parent(static_cast<std::size_t>(a_.rows()));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
      while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      return x;
    };
    for (const auto& gamma : automorphisms_) {
      const bool fixes = std::all_of(prefix_.begin(), prefix_.end(),
                                     [&](Index p) { return gamma[static_cast<std::size_t>(p)] == p; });
      if (!fixes) continue;
      for (std::size_t x = 0; x < gamma.size(); ++x) parent[static_cast<std::size_t>(find(static_cast<Index>(x)))] = find(gamma[x]);
    }
    const Index root = find(v);
    return std::any_of(others.begin(), others.end(), [&](Index w) { return find(w) == root; });
  }

  const BinaryMatrix& a_;
  std::vector<Index> prefix_, first_path_, best_path_;
  std::ptrdiff_t jump_ = -1;
  std::vector<Index> first_order_, best_order_;
  std::vector<char> first_code_, best_code_;
  std::vector<std::vector<Index>> automorphisms_;
};

}  // namespace

BinaryMatrix canonical_adjacency(const PeriodicGraph& g) {
  const BinaryMatrix a = g.active();
  if (a.rows() == 0) return a;
  return permute(a, CanonicalSearch(a).run());
}

}  // namespace pgd
