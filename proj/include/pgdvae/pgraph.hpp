// pgraph.hpp - periodic graph algebra.
//
// A periodic graph of m basic units with n nodes each is stored under its
// intrinsic ordering: unit u occupies node indices [u*n, (u+1)*n). Such a
// graph is fully described by three small binary matrices:
//
//   local         n x n  adjacency of one basic unit
//   global        m x m  which unit pairs are bonded
//   neighborhood  n x n  which node pairs bond across every bonded unit pair
//
// and the full adjacency is recovered in closed form by assemble().

#ifndef PGDVAE_PGRAPH_HPP
#define PGDVAE_PGRAPH_HPP

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pgd {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using BinaryMatrix = Matrix<int>;

enum class UnitKind { triangle, grid, hexagon };

std::string_view to_string(UnitKind kind);
UnitKind parse_unit_kind(std::string_view name);

/// Raised when an adjacency matrix is not periodic with the requested unit size.
class PeriodicityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full (possibly zero-padded) adjacency of a periodic graph.
///
/// When both `n` and `m` are positive the first n*m nodes are active and the
/// rest is padding. When either is zero the whole matrix is active.
struct PeriodicGraph {
  BinaryMatrix adjacency;
  std::optional<UnitKind> unit_label;
  Index n = 0;
  Index m = 0;

  Index active_size() const;
  /// Active block with padding stripped.
  BinaryMatrix active() const;
};

struct Decomposition {
  BinaryMatrix local;
  BinaryMatrix global;
  BinaryMatrix neighborhood;

  Index n() const { return local.rows(); }
  Index m() const { return global.rows(); }

  bool operator==(const Decomposition& other) const;
};

/// Replicator P, stacker Q, block-ones J and the two block masks.
template <typename Scalar>
struct StructureMatrices {
  Matrix<Scalar> P;        // nm x m
  Matrix<Scalar> Q;        // nm x n
  Matrix<Scalar> J;        // nm x nm
  Matrix<Scalar> M_local;  // nm x nm, ones on diagonal blocks
  Matrix<Scalar> M_upper;  // nm x nm, ones on strictly upper blocks
};

template <typename Scalar = int>
StructureMatrices<Scalar> build_structure(Index n, Index m) {
  if (n < 1 || m < 1) {
    throw std::invalid_argument("build_structure: n and m must be positive (got n=" +
                                std::to_string(n) + ", m=" + std::to_string(m) + ")");
  }
  const Index N = n * m;
  StructureMatrices<Scalar> s;
  s.P = Matrix<Scalar>::Zero(N, m);
  s.Q = Matrix<Scalar>::Zero(N, n);
  for (Index u = 0; u < m; ++u) {
    s.P.block(u * n, u, n, 1).setOnes();
    s.Q.block(u * n, 0, n, n).setIdentity();
  }
  s.J = s.P * s.P.transpose();
  s.M_local = s.J;
  s.M_upper = Matrix<Scalar>::Zero(N, N);
  for (Index u = 0; u < m; ++u) {
    for (Index v = u + 1; v < m; ++v) {
      s.M_upper.block(u * n, v * n, n, n).setOnes();
    }
  }
  return s;
}

/// Closed-form assembly of the full adjacency from the three unit matrices.
///
///   A = (M_upper .* Q An Q' + (M_upper .* Q An Q')') .* P Ag P' + M_local .* Q Al Q'
///
/// Works for any scalar: exact over integers, and usable on edge
/// probabilities as well.
template <typename Scalar>
Matrix<Scalar> assemble(const Matrix<Scalar>& local, const Matrix<Scalar>& global,
                        const Matrix<Scalar>& neighborhood) {
  const Index n = local.rows();
  const Index m = global.rows();
  if (local.cols() != n || neighborhood.rows() != n || neighborhood.cols() != n ||
      global.cols() != m) {
    throw std::invalid_argument("assemble: local and neighborhood must be n x n, global m x m");
  }
  const auto s = build_structure<Scalar>(n, m);
  const Matrix<Scalar> upper =
      s.M_upper.cwiseProduct(s.Q * neighborhood * s.Q.transpose());
  const Matrix<Scalar> cross = upper + upper.transpose();
  return cross.cwiseProduct(s.P * global * s.P.transpose()) +
         s.M_local.cwiseProduct(s.Q * local * s.Q.transpose());
}

/// Checks symmetry, zero diagonal and 0/1 entries of the decomposition parts.
void validate(const Decomposition& d);

PeriodicGraph assemble(const Decomposition& d);

/// Inverse of assemble() under the intrinsic ordering.
Decomposition decompose(const PeriodicGraph& g, Index n);

/// True iff assemble(decompose(g, n)) reproduces the active adjacency.
bool is_periodic(const PeriodicGraph& g, Index n);

/// Zero-pads the active adjacency to size x size.
BinaryMatrix pad(const BinaryMatrix& a, Index size);

double avg_clustering(const PeriodicGraph& g);
double density(const PeriodicGraph& g);

/// Node permutation: order[r] is the original index of the node placed at rank r.
std::vector<Index> bfs_canonical_order(const PeriodicGraph& g);

/// Active adjacency relabeled by `order` (result(r, s) = A(order[r], order[s])).
BinaryMatrix permute(const BinaryMatrix& a, const std::vector<Index>& order);

/// Label-independent form of the active adjacency, found by colour
/// refinement and individualization with automorphism pruning. Isomorphic
/// graphs map to the same matrix. Unlike bfs_canonical_order this does not
/// fall back on node indices to break ties.
BinaryMatrix canonical_adjacency(const PeriodicGraph& g);

}  // namespace pgd

#endif  // PGDVAE_PGRAPH_HPP
