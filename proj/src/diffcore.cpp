#include "rbb/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rbb::diff {

namespace {

std::string shape(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw Error(ErrorCode::kInputNotOnTape, "variable has no tape");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw Error(ErrorCode::kInputNotOnTape, "operands recorded on different tapes");
  return t;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw Error(ErrorCode::kInputNotOnTape, "variable has no tape");
  return tape_->value(*this);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw Error(ErrorCode::kNotScalarOutput, "value has shape " + shape(v));
  return v(0, 0);
}

// --- Tape -------------------------------------------------------------------

Tape::Node& Tape::node(Var v) {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(ErrorCode::kInputNotOnTape, "variable does not belong to this tape");
  }
  return nodes_[v.id()];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(ErrorCode::kInputNotOnTape, "variable does not belong to this tape");
  }
  return nodes_[v.id()];
}

void Tape::ensure_grad(Node& n) {
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value().rows(), n.value().cols());
    n.has_grad = true;
  }
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Matrix& value) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::variable_ref(const Matrix& value) {
  Var v = constant_ref(value);
  nodes_.back().requires_grad = true;
  return v;
}

const Matrix& Tape::value(Var v) const { return node(v).value(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = false;
  if (requires_grad) n.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [this](Var v) { return node(v).requires_grad; });
}

void Tape::backward(Var out) {
  const Node& n = node(out);
  if (n.value().size() != 1) {
    throw Error(ErrorCode::kNotScalarOutput, "backward() needs a 1x1 output, got " + shape(n.value()));
  }
  std::pair<Var, Matrix> seed{out, Matrix::Ones(1, 1)};
  backward(std::span<const std::pair<Var, Matrix>>(&seed, 1));
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  for (const auto& [v, g] : seeds) {
    Node& n = node(v);
    require(g.rows() == n.value().rows() && g.cols() == n.value().cols(),
            "seed " + shape(g) + " for value " + shape(n.value()));
    accumulate(v, g);
  }
  sweep();
}

void Tape::sweep() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.has_grad || !n.backward) continue;
    Matrix g = std::move(n.grad);
    n.has_grad = false;
    n.backward(*this, Var(this, i), g);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value().rows(), n.value().cols());
}

// --- operations -------------------------------------------------------------

Var affine(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  const Matrix& bv = bias.value();
  require(xv.cols() == wv.cols() && bv.rows() == 1 && bv.cols() == wv.rows(),
          "affine x" + shape(xv) + " W" + shape(wv) + " b" + shape(bv));
  Matrix y(xv.rows(), wv.rows());
  y.noalias() = xv * wv.transpose();
  y.rowwise() += bv.row(0);
  return t.record(std::move(y), t.any_requires_grad({x, weight, bias}), [x, weight, bias](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g * weight.value());
    if (tp.requires_grad(weight)) tp.accumulate(weight, g.transpose() * x.value());
    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
  });
}

Var linear_block(Var x, Var weight, Eigen::Index col) {
  Tape& t = tape_of(x, weight);
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  require(col >= 0 && col + xv.cols() <= wv.cols(),
          "linear_block x" + shape(xv) + " W" + shape(wv) + " at column " + std::to_string(col));
  Matrix y(xv.rows(), wv.rows());
  y.noalias() = xv * wv.middleCols(col, xv.cols()).transpose();
  return t.record(std::move(y), t.any_requires_grad({x, weight}), [x, weight, col](Tape& tp, Var, const Matrix& g) {
    const Matrix& wv = weight.value();
    if (tp.requires_grad(x)) tp.accumulate(x, g * wv.middleCols(col, x.cols()));
    if (tp.requires_grad(weight)) tp.accumulate_cols(weight, col, (g.transpose() * x.value()).eval());
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul " + shape(a.value()) + " * " + shape(b.value()));
  Matrix y = a.value() * b.value();
  return t.record(std::move(y), t.any_requires_grad({a, b}), [a, b](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add " + shape(a.value()) + " + " + shape(b.value()));
  Matrix y = a.value() + b.value();
  return t.record(std::move(y), t.any_requires_grad({a, b}), [a, b](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var add_row(Var x, Var row) {
  Tape& t = tape_of(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row " + shape(x.value()) + " + " + shape(row.value()));
  Matrix y = x.value();
  y.rowwise() += row.value().row(0);
  return t.record(std::move(y), t.any_requires_grad({x, row}), [x, row](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

Var multiply(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "multiply " + shape(a.value()) + " * " + shape(b.value()));
  Matrix y = a.value().cwiseProduct(b.value());
  return t.record(std::move(y), t.any_requires_grad({a, b}), [a, b](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var multiply_row(Var x, Var row) {
  Tape& t = tape_of(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(),
          "multiply_row " + shape(x.value()) + " * " + shape(row.value()));
  Matrix y = x.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(y), t.any_requires_grad({x, row}), [x, row](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(x)) {
      Matrix gx = g.array().rowwise() * row.value().row(0).array();
      tp.accumulate(x, gx);
    }
    if (tp.requires_grad(row)) tp.accumulate(row, g.cwiseProduct(x.value()).colwise().sum());
  });
}

Var scale(Var x, double factor) {
  Tape& t = tape_of(x);
  Matrix y = x.value() * factor;
  return t.record(std::move(y), t.any_requires_grad({x}),
                  [x, factor](Tape& tp, Var, const Matrix& g) { tp.accumulate(x, g * factor); });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Matrix y = x.value().cwiseMax(0.0);
  return t.record(std::move(y), t.any_requires_grad({x}), [x](Tape& tp, Var self, const Matrix& g) {
    Matrix gx = (self.value().array() > 0.0).select(g, 0.0);
    tp.accumulate(x, gx);
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Matrix y = x.value().unaryExpr([](double v) { return stable_sigmoid(v); });
  return t.record(std::move(y), t.any_requires_grad({x}), [x](Tape& tp, Var self, const Matrix& g) {
    const Matrix& s = self.value();
    Matrix gx = g.array() * s.array() * (1.0 - s.array());
    tp.accumulate(x, gx);
  });
}

Var layer_normalize(Var x, Var gain, Var bias) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Matrix& xv = x.value();
  const Eigen::Index f = xv.cols();
  require(f >= 1 && gain.rows() == 1 && gain.cols() == f && bias.rows() == 1 && bias.cols() == f,
          "layer_normalize x" + shape(xv) + " gain" + shape(gain.value()) + " bias" + shape(bias.value()));
  Matrix xhat(xv.rows(), f);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    double mu = xv.row(r).mean();
    double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  return t.record(
      std::move(y), t.any_requires_grad({x, gain, bias}),
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, Var, const Matrix& g) {
        if (tp.requires_grad(gain)) tp.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
        if (tp.requires_grad(x)) {
          Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
          Eigen::VectorXd mean_d = dxhat.rowwise().mean();
          Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat;
          dx.colwise() -= mean_d;
          dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
          dx = dx.array().colwise() * inv_std.array();
          tp.accumulate(x, dx);
        }
      });
}

Var gather_rows(Var x, std::vector<int> index) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix y(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t j = 0; j < index.size(); ++j) {
    require(index[j] >= 0 && index[j] < xv.rows(), "gather index " + std::to_string(index[j]) + " of " + shape(xv));
    y.row(static_cast<Eigen::Index>(j)) = xv.row(index[j]);
  }
  return t.record(std::move(y), t.any_requires_grad({x}), [x, index = std::move(index)](Tape& tp, Var, const Matrix& g) {
    Matrix* dx = tp.grad_buffer(x);
    if (dx == nullptr) return;
    for (std::size_t j = 0; j < index.size(); ++j) dx->row(index[j]) += g.row(static_cast<Eigen::Index>(j));
  });
}

Var segment_sum(Var x, std::vector<int> source, std::vector<int> segment, int segments) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  require(source.size() == segment.size(), "segment_sum index lists differ in length");
  Matrix y = Matrix::Zero(segments, xv.cols());
  for (std::size_t j = 0; j < source.size(); ++j) {
    require(source[j] >= 0 && source[j] < xv.rows() && segment[j] >= 0 && segment[j] < segments,
            "segment_sum index out of range");
    y.row(segment[j]) += xv.row(source[j]);
  }
  return t.record(std::move(y), t.any_requires_grad({x}),
                  [x, source = std::move(source), segment = std::move(segment)](Tape& tp, Var, const Matrix& g) {
                    Matrix* dx = tp.grad_buffer(x);
                    if (dx == nullptr) return;
                    for (std::size_t j = 0; j < source.size(); ++j) dx->row(source[j]) += g.row(segment[j]);
                  });
}

Var concat_rows(Var top, Var bottom) {
  Tape& t = tape_of(top, bottom);
  require(top.cols() == bottom.cols(), "concat_rows " + shape(top.value()) + " / " + shape(bottom.value()));
  Matrix y(top.rows() + bottom.rows(), top.cols());
  y.topRows(top.rows()) = top.value();
  y.bottomRows(bottom.rows()) = bottom.value();
  return t.record(std::move(y), t.any_requires_grad({top, bottom}), [top, bottom](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(top)) tp.accumulate(top, g.topRows(top.rows()));
    if (tp.requires_grad(bottom)) tp.accumulate(bottom, g.bottomRows(bottom.rows()));
  });
}

namespace {

Var gather_add_impl(const Var* base, std::vector<GatheredTerm> terms, Var bias) {
  Tape& t = tape_of(bias);
  const Eigen::Index cols = bias.cols();
  Eigen::Index rows = base != nullptr ? base->rows() : -1;
  require(bias.rows() == 1, "gather_add bias must be a row");
  if (rows < 0) {
    require(!terms.empty(), "gather_add needs a base or at least one term");
    rows = static_cast<Eigen::Index>(terms.front().index.size());
  }
  bool rg = t.requires_grad(bias) || (base != nullptr && t.requires_grad(*base));
  for (const auto& term : terms) {
    tape_of(bias, term.source);
    require(term.source.cols() == cols && static_cast<Eigen::Index>(term.index.size()) == rows,
            "gather_add term " + shape(term.source.value()) + " with " + std::to_string(term.index.size()) +
                " indices for " + std::to_string(rows) + " rows");
    for (int i : term.index) require(i >= 0 && i < term.source.rows(), "gather_add index " + std::to_string(i));
    rg = rg || t.requires_grad(term.source);
  }
  Matrix y(rows, cols);
  if (base != nullptr) {
    tape_of(bias, *base);
    require(base->cols() == cols, "gather_add base " + shape(base->value()));
    y = base->value();
    y.rowwise() += bias.value().row(0);
  } else {
    y.rowwise() = bias.value().row(0);
  }
  for (const auto& term : terms) {
    const Matrix& src = term.source.value();
    for (Eigen::Index j = 0; j < rows; ++j) y.row(j) += src.row(term.index[static_cast<std::size_t>(j)]);
  }
  Var base_var = base != nullptr ? *base : Var();
  bool has_base = base != nullptr;
  return t.record(std::move(y), rg,
                  [has_base, base_var, bias, terms = std::move(terms)](Tape& tp, Var, const Matrix& g) {
                    if (has_base) tp.accumulate(base_var, g);
                    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
                    for (const auto& term : terms) {
                      Matrix* d = tp.grad_buffer(term.source);
                      if (d == nullptr) continue;
                      for (Eigen::Index j = 0; j < g.rows(); ++j) {
                        d->row(term.index[static_cast<std::size_t>(j)]) += g.row(j);
                      }
                    }
                  });
}

}  // namespace

Var gather_add(std::vector<GatheredTerm> terms, Var bias) { return gather_add_impl(nullptr, std::move(terms), bias); }

Var gather_add(Var base, std::vector<GatheredTerm> terms, Var bias) {
  return gather_add_impl(&base, std::move(terms), bias);
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  require(rows * cols == xv.size(), "reshape " + shape(xv) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix y = Eigen::Map<const Matrix>(xv.data(), rows, cols);
  return t.record(std::move(y), t.any_requires_grad({x}), [x](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(x, Eigen::Map<const Matrix>(g.data(), x.rows(), x.cols()));
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return t.record(std::move(y), t.any_requires_grad({x}), [x](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  if (x.value().size() == 0) throw Error(ErrorCode::kEmptyVector, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

namespace {

struct SoftMaxParts {
  double value = 0.0;
  Eigen::ArrayXd weights;  // softmax weights s_i
};

// Computes max + sum_i (x_i - max) s_i, which equals the weighted mean but keeps
// the dominant term exact.
SoftMaxParts soft_maximum_parts(const double* x, Eigen::Index n, double tau) {
  if (n == 0) throw Error(ErrorCode::kEmptyVector, "soft_maximum of empty vector");
  if (!(tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "tau = " + std::to_string(tau));
  Eigen::Map<const Eigen::ArrayXd> xs(x, n);
  double m = xs.maxCoeff();
  Eigen::ArrayXd dev = xs - m;
  Eigen::ArrayXd e = (dev / tau).exp();
  SoftMaxParts parts;
  parts.weights = e / e.sum();
  parts.value = m + (dev * parts.weights).sum();
  return parts;
}

}  // namespace

double soft_maximum_value(std::span<const double> x, double tau) {
  return soft_maximum_parts(x.data(), static_cast<Eigen::Index>(x.size()), tau).value;
}

Var soft_maximum(Var x, double tau) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  SoftMaxParts parts = soft_maximum_parts(xv.data(), xv.size(), tau);
  Matrix y(1, 1);
  y(0, 0) = parts.value;
  double f = parts.value;
  return t.record(std::move(y), t.any_requires_grad({x}),
                  [x, tau, f, w = std::move(parts.weights)](Tape& tp, Var, const Matrix& g) {
                    const Matrix& xv = x.value();
                    Eigen::Map<const Eigen::ArrayXd> xs(xv.data(), xv.size());
                    Eigen::ArrayXd d = w * (1.0 + (xs - f) / tau) * g(0, 0);
                    tp.accumulate(x, Eigen::Map<const Matrix>(d.data(), xv.rows(), xv.cols()));
                  });
}

namespace {

Var cross_entropy_impl(Var p, const Matrix& labels, const Matrix* weights) {
  Tape& t = tape_of(p);
  const Matrix& pv = p.value();
  require(labels.rows() == pv.rows() && labels.cols() == pv.cols(),
          "cross entropy p" + shape(pv) + " labels" + shape(labels));
  if (weights != nullptr) {
    require(weights->rows() == pv.rows() && weights->cols() == pv.cols(), "cross entropy weights" + shape(*weights));
  }
  if (pv.size() == 0) throw Error(ErrorCode::kEmptyVector, "cross entropy of empty tensor");
  const double uniform = 1.0 / static_cast<double>(pv.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pv.size(); ++i) {
    double q = std::clamp(pv.data()[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    double y = labels.data()[i];
    double loss = -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
    total += (weights != nullptr ? weights->data()[i] : uniform) * loss;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  Matrix coeff = weights != nullptr ? *weights : Matrix::Constant(pv.rows(), pv.cols(), uniform);
  return t.record(std::move(out), t.any_requires_grad({p}),
                  [p, labels, coeff = std::move(coeff)](Tape& tp, Var, const Matrix& g) {
                    const Matrix& pv = p.value();
                    Matrix dp(pv.rows(), pv.cols());
                    for (Eigen::Index i = 0; i < pv.size(); ++i) {
                      double raw = pv.data()[i];
                      double y = labels.data()[i];
                      bool clamped = raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp;
                      dp.data()[i] = clamped ? 0.0 : coeff.data()[i] * g(0, 0) * (raw - y) / (raw * (1.0 - raw));
                    }
                    tp.accumulate(p, dp);
                  });
}

}  // namespace

Var binary_cross_entropy(Var p, const Matrix& labels) { return cross_entropy_impl(p, labels, nullptr); }

Var weighted_binary_cross_entropy(Var p, const Matrix& labels, const Matrix& weights) {
  return cross_entropy_impl(p, labels, &weights);
}

// --- Adam -------------------------------------------------------------------

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads, double lr,
               const AdamOptions& options) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam: " + std::to_string(params.size()) + " parameters, " +
                                               std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (Matrix* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam state does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].rows() == params[i]->rows() && grads[i].cols() == params[i]->cols() &&
                state.first_moment[i].rows() == params[i]->rows() &&
                state.first_moment[i].cols() == params[i]->cols(),
            "adam parameter " + std::to_string(i) + " " + shape(*params[i]) + " gradient " + shape(grads[i]));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = options.beta1 * m + (1.0 - options.beta1) * grads[i];
    v = options.beta2 * v + (1.0 - options.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options.epsilon);
  }
}

// --- gradient utilities -----------------------------------------------------

Matrix gradient(const ScalarFunction& f, const Matrix& x) {
  Tape tape;
  Var in = tape.variable(x);
  Var out = f(tape, in);
  if (out.tape() != &tape) throw Error(ErrorCode::kInputNotOnTape, "function result on a different tape");
  tape.backward(out);
  return tape.grad(in);
}

double finite_difference_check(const ScalarFunction& f, const Matrix& x, double h) {
  Matrix analytic = gradient(f, x);
  auto eval = [&f](const Matrix& at) {
    Tape tape;
    return f(tape, tape.constant(at)).scalar();
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double orig = probe.data()[k];
    probe.data()[k] = orig + h;
    double up = eval(probe);
    probe.data()[k] = orig - h;
    double down = eval(probe);
    probe.data()[k] = orig;
    double central = (up - down) / (2.0 * h);
    double a = analytic.data()[k];
    worst = std::max(worst, std::abs(a - central) / (std::abs(a) + 1e-12));
  }
  return worst;
}

}  // namespace rbb::diff
