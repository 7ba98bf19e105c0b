// tensor.hpp - dense matrices with reverse-mode differentiation.
//
// A Tape records every operation applied to its Vars. Each recorded node
// keeps its forward value and an adjoint closure; Tape::backward() seeds a
// scalar root and sweeps the nodes in reverse, accumulating gradients into
// every node that depends on a leaf.
//
// A tape built as replayable also keeps each node's forward closure and
// parent list, so after a borrowed leaf is modified in place, replay()
// recomputes just the nodes downstream of it. grad_check relies on this.
//
// Only what the graph networks need is provided: everything is a 2-D
// matrix, broadcasting exists only for bias rows.

#ifndef PGDVAE_TENSOR_HPP
#define PGDVAE_TENSOR_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pgd::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  /// Gradient after Tape::backward(); zero if the node was not reached.
  Matrix<Scalar> grad() const { return tape_->grad_or_zero(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }

  std::size_t id() const { return id_; }
  Tape<Scalar>& tape() const { return *tape_; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Adjoint = std::function<void(Tape&, std::size_t)>;
  using Forward = std::function<Matrix<Scalar>(const Tape&)>;

  explicit Tape(bool replayable = false) : replayable_(replayable) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var<Scalar> leaf(Matrix<Scalar> value) { return push(Node{std::move(value), true}); }

  /// Input that never receives a gradient (masks, adjacency, targets).
  Var<Scalar> constant(Matrix<Scalar> value) { return push(Node{std::move(value), false}); }

  /// Leaf whose value stays owned by the caller and must outlive the tape.
  Var<Scalar> borrow(const Matrix<Scalar>& value, bool needs_grad = true) {
    Node node{Matrix<Scalar>(), needs_grad};
    node.borrowed = &value;
    return push(std::move(node));
  }

  /// Records an op whose value is `forward` applied to this tape. The
  /// adjoint is dropped if no parent needs a gradient.
  template <typename F>
  Var<Scalar> record(std::span<const Var<Scalar>> parents, F&& forward, Adjoint adjoint) {
    bool needs = false;
    for (const auto& p : parents) {
      check_owner(p);
      needs = needs || nodes_[p.id()].needs_grad;
    }
    Node node{forward(std::as_const(*this)), needs};
    if (needs) node.adjoint = std::move(adjoint);
    if (replayable_) {
      node.forward = std::forward<F>(forward);
      for (const auto& p : parents) node.parents.push_back(p.id());
    }
    return push(std::move(node));
  }

  template <typename F>
  Var<Scalar> record(std::initializer_list<Var<Scalar>> parents, F&& forward, Adjoint adjoint) {
    return record(std::span<const Var<Scalar>>(parents.begin(), parents.size()),
                  std::forward<F>(forward), std::move(adjoint));
  }

  void backward(const Var<Scalar>& root) {
    check_owner(root);
    if (root.rows() != 1 || root.cols() != 1) {
      throw ShapeError("backward: root must be 1x1, got " + shape_string(root.value()));
    }
    for (auto& node : nodes_) node.grad.resize(0, 0);
    nodes_[root.id()].grad = Matrix<Scalar>::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      if (nodes_[i].adjoint && nodes_[i].grad.size() != 0) nodes_[i].adjoint(*this, i);
    }
  }

  /// Recomputes every node downstream of `changed`, a borrowed leaf whose
  /// storage the caller has modified. The values replaced by the first
  /// replay are kept until restore().
  void replay(const Var<Scalar>& changed) {
    if (!replayable_) throw std::logic_error("replay: tape was not built as replayable");
    check_owner(changed);
    dirty_.assign(nodes_.size(), 0);
    dirty_[changed.id()] = 1;
    for (std::size_t i = changed.id() + 1; i < nodes_.size(); ++i) {
      Node& node = nodes_[i];
      bool touched = false;
      for (auto p : node.parents) touched = touched || dirty_[p];
      if (!touched) continue;
      dirty_[i] = 1;
      if (!node.stashed) {
        node.stash = std::move(node.value);
        node.stashed = true;
        stashed_.push_back(i);
      }
      node.value = node.forward(*this);
    }
  }

  /// Puts back the values replaced by replay(); the caller restores the leaf.
  void restore() {
    for (auto i : stashed_) {
      nodes_[i].value = std::move(nodes_[i].stash);
      nodes_[i].stashed = false;
    }
    stashed_.clear();
  }

  const Matrix<Scalar>& value(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.borrowed ? *node.borrowed : node.value;
  }

  /// Adjoint of node `id` as seen during the reverse sweep.
  const Matrix<Scalar>& grad(std::size_t id) const { return nodes_[id].grad; }

  Matrix<Scalar> grad_or_zero(std::size_t id) const {
    const Node& node = nodes_[id];
    if (node.grad.size() == 0) return Matrix<Scalar>::Zero(value(id).rows(), value(id).cols());
    return node.grad;
  }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

  static std::string shape_string(const Matrix<Scalar>& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
  }

 private:
  struct Node {
    Node(Matrix<Scalar> v, bool needs) : value(std::move(v)), needs_grad(needs) {}

    Matrix<Scalar> value;
    bool needs_grad = false;
    Matrix<Scalar> grad;
    Adjoint adjoint;
    const Matrix<Scalar>* borrowed = nullptr;
    // replay only
    Forward forward;
    std::vector<std::size_t> parents;
    Matrix<Scalar> stash;
    bool stashed = false;
  };

  Var<Scalar> push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  void check_owner(const Var<Scalar>& v) const {
    if (&v.tape() != this) throw std::invalid_argument("Var belongs to a different tape");
  }

  bool replayable_ = false;
  std::vector<Node> nodes_;
  std::vector<std::uint8_t> dirty_;
  std::vector<std::size_t> stashed_;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + Tape<Scalar>::shape_string(a.value()) +
                     " vs " + Tape<Scalar>::shape_string(b.value()));
  }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + Tape<Scalar>::shape_string(a.value()) + " vs " +
                     Tape<Scalar>::shape_string(b.value()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      {a, b}, [ia, ib](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia) * t.value(ib); },
      [ia, ib](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        t.accumulate(ia, g * t.value(ib).transpose());
        t.accumulate(ib, t.value(ia).transpose() * g);
      });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      {a, b}, [ia, ib](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia) + t.value(ib); },
      [ia, ib](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, t.grad(self));
      });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      {a, b}, [ia, ib](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia) - t.value(ib); },
      [ia, ib](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, -t.grad(self));
      });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

/// x + bias, with a 1 x cols bias broadcast over every row.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row: shape mismatch " + Tape<Scalar>::shape_string(x.value()) + " vs " +
                     Tape<Scalar>::shape_string(bias.value()));
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(
      {x, bias},
      [ix, ib](const Tape<Scalar>& t) -> Matrix<Scalar> {
        return t.value(ix).rowwise() + t.value(ib).row(0);
      },
      [ix, ib](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ix, t.grad(self));
        t.accumulate(ib, t.grad(self).colwise().sum());
      });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("mul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      {a, b},
      [ia, ib](const Tape<Scalar>& t) -> Matrix<Scalar> {
        return t.value(ia).cwiseProduct(t.value(ib));
      },
      [ia, ib](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        t.accumulate(ib, g.cwiseProduct(t.value(ia)));
      });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia, s](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia) * s; },
      [ia, s](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self) * s); });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia, s](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).array() + s; },
      [ia](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self)); });
}

/// s * x for a 1x1 Var s.
template <typename Scalar>
Var<Scalar> scale_by(const Var<Scalar>& s, const Var<Scalar>& x) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw ShapeError("scale_by: factor must be 1x1, got " + Tape<Scalar>::shape_string(s.value()));
  }
  const std::size_t is = s.id(), ix = x.id();
  return s.tape().record(
      {s, x},
      [is, ix](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(is)(0, 0) * t.value(ix); },
      [is, ix](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        Matrix<Scalar> gs(1, 1);
        gs(0, 0) = g.cwiseProduct(t.value(ix)).sum();
        t.accumulate(is, gs);
        t.accumulate(ix, g * t.value(is)(0, 0));
      });
}

/// Rectifier; the subgradient at 0 is 0.
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).cwiseMax(Scalar(0)); },
      [ia](Tape<Scalar>& t, std::size_t self) {
        const auto mask = (t.value(ia).array() > Scalar(0)).template cast<Scalar>();
        t.accumulate(ia, (t.grad(self).array() * mask).matrix());
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a},
      [ia](const Tape<Scalar>& t) -> Matrix<Scalar> {
        return t.value(ia).unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
      },
      [ia](Tape<Scalar>& t, std::size_t self) {
        const auto& y = t.value(self).array();
        t.accumulate(ia, (t.grad(self).array() * y * (Scalar(1) - y)).matrix());
      });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).array().exp(); },
      [ia](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
      });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).array().log(); },
      [ia](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
      });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).cwiseAbs2(); },
      [ia](Tape<Scalar>& t, std::size_t self) {
        t.accumulate(ia, Scalar(2) * t.grad(self).cwiseProduct(t.value(ia)));
      });
}

/// Elementwise clamp to [lo, hi]; clamped entries pass no gradient.
template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& a, Scalar lo, Scalar hi) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a},
      [ia, lo, hi](const Tape<Scalar>& t) -> Matrix<Scalar> {
        return t.value(ia).cwiseMax(lo).cwiseMin(hi);
      },
      [ia, lo, hi](Tape<Scalar>& t, std::size_t self) {
        const auto& x = t.value(ia).array();
        const auto inside = ((x >= lo) && (x <= hi)).template cast<Scalar>();
        t.accumulate(ia, (t.grad(self).array() * inside).matrix());
      });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a},
      [ia](const Tape<Scalar>& t) -> Matrix<Scalar> {
        Matrix<Scalar> out = t.value(ia);
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
          out.row(i).array() -= out.row(i).maxCoeff();
          out.row(i) = out.row(i).array().exp();
          out.row(i) /= out.row(i).sum();
        }
        return out;
      },
      [ia](Tape<Scalar>& t, std::size_t self) {
        const auto& y = t.value(self);
        const auto& g = t.grad(self);
        const Matrix<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
        Matrix<Scalar> gx = (g.colwise() - dot.col(0)).cwiseProduct(y);
        t.accumulate(ia, gx);
      });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a},
      [ia](const Tape<Scalar>& t) -> Matrix<Scalar> {
        return Matrix<Scalar>::Constant(1, 1, t.value(ia).sum());
      },
      [ia](Tape<Scalar>& t, std::size_t self) {
        const auto& x = t.value(ia);
        t.accumulate(ia, Matrix<Scalar>::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
      });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Sums over rows: (r x c) -> (1 x c).
template <typename Scalar>
Var<Scalar> colwise_sum(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  const auto r = a.rows();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).colwise().sum(); },
      [ia, r](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self).replicate(r, 1)); });
}

/// Sums over columns: (r x c) -> (r x 1).
template <typename Scalar>
Var<Scalar> rowwise_sum(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  const auto c = a.cols();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).rowwise().sum(); },
      [ia, c](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self).replicate(1, c)); });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape().record(
      {a}, [ia](const Tape<Scalar>& t) -> Matrix<Scalar> { return t.value(ia).transpose(); },
      [ia](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self).transpose()); });
}

/// Reinterprets the row-major element sequence of `a` as rows x cols.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + Tape<Scalar>::shape_string(a.value()) + " as (" +
                     std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t ia = a.id();
  const auto r0 = a.rows(), c0 = a.cols();
  return a.tape().record(
      {a},
      [ia, rows, cols](const Tape<Scalar>& t) -> Matrix<Scalar> {
        const RowMajor src = t.value(ia);
        return Eigen::Map<const RowMajor>(src.data(), rows, cols);
      },
      [ia, r0, c0](Tape<Scalar>& t, std::size_t self) {
        const RowMajor g = t.grad(self);
        t.accumulate(ia, Eigen::Map<const RowMajor>(g.data(), r0, c0));
      });
}

/// Stacks operands with equal column counts vertically.
template <typename Scalar>
Var<Scalar> vcat(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("vcat: no operands");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("vcat: shape mismatch " + Tape<Scalar>::shape_string(parts.front().value()) +
                       " vs " + Tape<Scalar>::shape_string(p.value()));
    }
    rows += p.rows();
    spans.emplace_back(p.id(), p.rows());
  }
  return parts.front().tape().record(
      parts,
      [spans, rows, cols](const Tape<Scalar>& t) -> Matrix<Scalar> {
        Matrix<Scalar> out(rows, cols);
        Eigen::Index at = 0;
        for (const auto& [id, r] : spans) {
          out.middleRows(at, r) = t.value(id);
          at += r;
        }
        return out;
      },
      [spans](Tape<Scalar>& t, std::size_t self) {
        Eigen::Index at = 0;
        for (const auto& [id, r] : spans) {
          t.accumulate(id, t.grad(self).middleRows(at, r));
          at += r;
        }
      });
}

/// Places operands with equal row counts side by side.
template <typename Scalar>
Var<Scalar> hcat(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("hcat: no operands");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("hcat: shape mismatch " + Tape<Scalar>::shape_string(parts.front().value()) +
                       " vs " + Tape<Scalar>::shape_string(p.value()));
    }
    cols += p.cols();
    spans.emplace_back(p.id(), p.cols());
  }
  return parts.front().tape().record(
      parts,
      [spans, rows, cols](const Tape<Scalar>& t) -> Matrix<Scalar> {
        Matrix<Scalar> out(rows, cols);
        Eigen::Index at = 0;
        for (const auto& [id, c] : spans) {
          out.middleCols(at, c) = t.value(id);
          at += c;
        }
        return out;
      },
      [spans](Tape<Scalar>& t, std::size_t self) {
        Eigen::Index at = 0;
        for (const auto& [id, c] : spans) {
          t.accumulate(id, t.grad(self).middleCols(at, c));
          at += c;
        }
      });
}

/// Row i of x divided by max(d_i, floor), with d an (r x 1) column.
template <typename Scalar>
Var<Scalar> div_rows(const Var<Scalar>& x, const Var<Scalar>& d, Scalar floor) {
  if (d.cols() != 1 || d.rows() != x.rows()) {
    throw ShapeError("div_rows: shape mismatch " + Tape<Scalar>::shape_string(x.value()) + " vs " +
                     Tape<Scalar>::shape_string(d.value()));
  }
  const std::size_t ix = x.id(), id = d.id();
  return x.tape().record(
      {x, d},
      [ix, id, floor](const Tape<Scalar>& t) -> Matrix<Scalar> {
        const Matrix<Scalar> denom = t.value(id).cwiseMax(floor);
        return t.value(ix).array().colwise() / denom.col(0).array();
      },
      [ix, id, floor](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const Matrix<Scalar> denom = t.value(id).cwiseMax(floor);
        t.accumulate(ix, (g.array().colwise() / denom.col(0).array()).matrix());
        Matrix<Scalar> gd =
            -(g.cwiseProduct(t.value(ix)).rowwise().sum()).cwiseQuotient(denom.cwiseAbs2());
        for (Eigen::Index i = 0; i < gd.rows(); ++i) {
          if (t.value(id)(i, 0) < floor) gd(i, 0) = Scalar(0);
        }
        t.accumulate(id, gd);
      });
}

/// Scales each row to unit Euclidean norm (norms below `floor` are replaced by it).
template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& x, Scalar floor = Scalar(1e-12)) {
  const std::size_t ix = x.id();
  return x.tape().record(
      {x},
      [ix, floor](const Tape<Scalar>& t) -> Matrix<Scalar> {
        const Matrix<Scalar> norms = t.value(ix).rowwise().norm().cwiseMax(floor);
        return t.value(ix).array().colwise() / norms.col(0).array();
      },
      [ix, floor](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        const auto& x0 = t.value(ix);
        Matrix<Scalar> gx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const Scalar raw = x0.row(i).norm();
          const Scalar nrm = std::max(raw, floor);
          if (raw < floor) {
            gx.row(i) = g.row(i) / nrm;
          } else {
            gx.row(i) = (g.row(i) - y.row(i) * g.row(i).dot(y.row(i))) / nrm;
          }
        }
        t.accumulate(ix, gx);
      });
}

/// Maximum over coordinates of |analytic - numeric| / max(1, |numeric|), where
/// the numeric gradient uses central differences of step `eps` on every
/// entry of every input. `f` receives one leaf per input, in order, and must
/// reach its result from those leaves through tape ops only: the numeric
/// side records f once and replays the part downstream of each perturbed
/// entry. One entry per input is cross-checked against a fresh evaluation.
template <typename Scalar, typename Fn>
Scalar grad_check(Fn&& f, std::vector<Matrix<Scalar>>& inputs, Scalar eps) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");
  auto require_finite = [](Scalar v) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::domain_error("grad_check: non-finite function value");
    }
  };
  auto evaluate = [&](Tape<Scalar>& tape, bool with_grad, std::vector<Var<Scalar>>& leaves) {
    leaves.clear();
    for (const auto& x : inputs) leaves.push_back(tape.borrow(x, with_grad));
    Var<Scalar> out = f(tape, std::span<const Var<Scalar>>(leaves));
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check: f must return a 1x1 value");
    require_finite(out.scalar());
    return out;
  };

  std::vector<Matrix<Scalar>> analytic;
  {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> leaves;
    const Var<Scalar> out = evaluate(tape, true, leaves);
    tape.backward(out);
    for (const auto& l : leaves) {
      analytic.push_back(l.grad());
      if (!analytic.back().allFinite()) throw std::domain_error("grad_check: non-finite gradient");
    }
  }

  Tape<Scalar> tape(true);
  std::vector<Var<Scalar>> leaves;
  const Var<Scalar> out = evaluate(tape, false, leaves);
  Scalar worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      Scalar& x = inputs[k].data()[i];
      const Scalar saved = x;
      x = saved + eps;
      tape.replay(leaves[k]);
      const Scalar up = out.scalar();
      if (i == 0) {
        Tape<Scalar> fresh;
        std::vector<Var<Scalar>> fresh_leaves;
        if (evaluate(fresh, false, fresh_leaves).scalar() != up) {
          throw std::logic_error("grad_check: replay disagrees with a fresh evaluation");
        }
      }
      x = saved - eps;
      tape.replay(leaves[k]);
      const Scalar down = out.scalar();
      x = saved;
      tape.restore();
      require_finite(up);
      require_finite(down);
      const Scalar numeric = (up - down) / (Scalar(2) * eps);
      const Scalar err =
          std::abs(analytic[k].data()[i] - numeric) / std::max(Scalar(1), std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace pgd::ad

#endif  // PGDVAE_TENSOR_HPP
