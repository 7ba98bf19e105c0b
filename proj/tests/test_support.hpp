// Shared fixtures for the unit and acceptance suites.

#ifndef PGDVAE_TEST_SUPPORT_HPP
#define PGDVAE_TEST_SUPPORT_HPP

#include "pgdvae/pgraph.hpp"

#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

namespace test {

using pgd::BinaryMatrix;
using pgd::Decomposition;
using pgd::Index;

inline BinaryMatrix mat(std::initializer_list<std::initializer_list<int>> rows) {
  BinaryMatrix a(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (int x : row) a(i, j++) = x;
    ++i;
  }
  return a;
}

inline BinaryMatrix cycle(Index k) {
  BinaryMatrix a = BinaryMatrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    const Index j = (i + 1) % k;
    if (i != j) a(i, j) = a(j, i) = 1;
  }
  return a;
}

inline BinaryMatrix random_symmetric(Index k, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p);
  BinaryMatrix a = BinaryMatrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) a(i, j) = a(j, i) = edge(rng) ? 1 : 0;
  }
  return a;
}

/// Random decomposition inside the set that survives assemble/decompose:
/// the neighborhood is nonzero exactly when some units are bonded.
inline Decomposition random_decomposition(std::mt19937_64& rng, Index n_max, Index m_max) {
  std::uniform_int_distribution<Index> pick_n(1, n_max), pick_m(1, m_max);
  std::uniform_real_distribution<double> pick_p(0.1, 0.9);
  const Index n = pick_n(rng), m = pick_m(rng);
  Decomposition d;
  d.local = random_symmetric(n, pick_p(rng), rng);
  d.global = random_symmetric(m, pick_p(rng), rng);
  d.neighborhood = BinaryMatrix::Zero(n, n);
  if (!d.global.isZero()) {
    std::bernoulli_distribution bond(pick_p(rng));
    for (Index i = 0; i < n * n; ++i) d.neighborhood.data()[i] = bond(rng) ? 1 : 0;
    if (d.neighborhood.isZero()) {
      std::uniform_int_distribution<Index> at(0, n * n - 1);
      d.neighborhood.data()[at(rng)] = 1;
    }
  }
  return d;
}

/// Two triangles whose node 0 of unit 0 bonds node 0 of unit 1.
inline Decomposition two_triangles() {
  return {cycle(3), mat({{0, 1}, {1, 0}}), mat({{1, 0, 0}, {0, 0, 0}, {0, 0, 0}})};
}

inline std::vector<Index> random_permutation(Index k, std::mt19937_64& rng) {
  std::vector<Index> p(static_cast<std::size_t>(k));
  std::iota(p.begin(), p.end(), Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace test

#endif  // PGDVAE_TEST_SUPPORT_HPP
