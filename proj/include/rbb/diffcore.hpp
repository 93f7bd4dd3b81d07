#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rbb/errors.hpp"

namespace rbb::diff {

/// Dense row-major 64-bit matrix; rows index items (nodes, edges, pairs),
/// columns index features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 result.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations so that a reverse sweep yields d(output)/d(input) for
/// every variable leaf. Gradients accumulate additively over all uses.
/// A Tape is single-threaded.
class Tape {
 public:
  /// Receives the tape, the node's own handle and d(out)/d(node).
  using Backward = std::function<void(Tape&, Var self, const Matrix& output_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Constant referring to caller-owned storage, which must outlive the tape.
  Var constant_ref(const Matrix& value);
  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  Var variable_ref(const Matrix& value);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep seeded with d(out)/d(out) = 1; `out` must be 1x1.
  void backward(Var out);
  /// Reverse sweep with explicit seeds on arbitrary nodes.
  void backward(std::span<const std::pair<Var, Matrix>> seeds);

  /// Gradient accumulated on a variable leaf (zeros if nothing flowed).
  Matrix grad(Var v) const;

  // --- used by operation implementations ---
  Var record(Matrix value, bool requires_grad, Backward backward);
  bool any_requires_grad(std::initializer_list<Var> vars) const;

  template <class Expr>
  void accumulate(Var v, const Expr& contribution) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = contribution;
      n.has_grad = true;
    } else {
      n.grad += contribution;
    }
  }

  /// Adds into the column block [col, col + contribution.cols()) of v's gradient.
  template <class Expr>
  void accumulate_cols(Var v, Eigen::Index col, const Expr& contribution) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    ensure_grad(n);
    n.grad.middleCols(col, contribution.cols()) += contribution;
  }

  /// Gradient buffer for in-place accumulation by scatter-style operations.
  Matrix* grad_buffer(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    ensure_grad(n);
    return &n.grad;
  }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    bool requires_grad = false;
    bool is_leaf = true;
    bool has_grad = false;
    Backward backward;
    Matrix grad;

    const Matrix& value() const { return external != nullptr ? *external : owned; }
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  void ensure_grad(Node& n);
  void sweep();

  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Every operation requires all Var arguments to share one tape.

/// y = x * weight^T + bias, weight is [out x in], bias is [1 x out].
Var affine(Var x, Var weight, Var bias);
/// y = x * weight(:, col : col + x.cols())^T, no bias. Lets a layer acting on a
/// concatenation be applied piecewise.
Var linear_block(Var x, Var weight, Eigen::Index col);
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds a [1 x cols] row to every row of x.
Var add_row(Var x, Var row);
Var multiply(Var a, Var b);
/// Multiplies every row of x elementwise by a [1 x cols] row.
Var multiply_row(Var x, Var row);
Var scale(Var x, double factor);
Var relu(Var x);
Var sigmoid(Var x);

inline constexpr double kLayerNormEpsilon = 1e-5;
/// Per-row standardization with population variance, then gain and bias.
Var layer_normalize(Var x, Var gain, Var bias);

/// Rows of x at `index` (repeats allowed).
Var gather_rows(Var x, std::vector<int> index);
/// out[segment[j]] += x[source[j]] over all j; output has `segments` rows.
Var segment_sum(Var x, std::vector<int> source, std::vector<int> segment, int segments);
Var concat_rows(Var top, Var bottom);

struct GatheredTerm {
  Var source;
  std::vector<int> index;
};
/// Fused sum of row gathers plus a broadcast [1 x cols] bias:
/// y[j] = sum_t terms[t].source[terms[t].index[j]] + bias. Every index list has
/// the output's row count.
Var gather_add(std::vector<GatheredTerm> terms, Var bias);
/// Same with an ungathered leading term: y = base + gathers + bias.
Var gather_add(Var base, std::vector<GatheredTerm> terms, Var bias);
/// Row-major reinterpretation into a new shape with the same element count.
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);

Var sum(Var x);
Var mean(Var x);

/// Temperature-weighted soft maximum: sum_i x_i e^{x_i/tau} / sum_j e^{x_j/tau}.
Var soft_maximum(Var x, double tau);

inline constexpr double kProbabilityClamp = 1e-7;
/// Mean over elements of -[y ln p + (1-y) ln(1-p)], p clamped to [1e-7, 1-1e-7].
Var binary_cross_entropy(Var p, const Matrix& labels);
/// Sum over elements of weight * cross entropy.
Var weighted_binary_cross_entropy(Var p, const Matrix& labels, const Matrix& weights);

/// Plain (untaped) evaluations used by fast paths and tests.
double soft_maximum_value(std::span<const double> x, double tau);

// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `params` in place. An empty state is
/// initialized to zero moments shaped like the parameters.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads, double lr,
               const AdamOptions& options = {});

// ---------------------------------------------------------------------------

using ScalarFunction = std::function<Var(Tape&, Var)>;

/// Reverse-mode gradient of a scalar function at x.
Matrix gradient(const ScalarFunction& f, const Matrix& x);

/// max_k |analytic_k - central_k| / (|analytic_k| + 1e-12), with central
/// differences of step h.
double finite_difference_check(const ScalarFunction& f, const Matrix& x, double h = 1e-5);

}  // namespace rbb::diff
