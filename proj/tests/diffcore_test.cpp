#include "rbb/diffcore.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rbb::diff {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected rbb::Error";
  return ErrorCode::kIo;
}

TEST(Affine, IdentityAndScalar) {
  std::mt19937_64 rng(1);
  Tape t;
  Matrix x = random_matrix(4, 3, rng);
  Var y = affine(t.constant(x), t.constant(Matrix::Identity(3, 3)), t.constant(Matrix::Zero(1, 3)));
  EXPECT_EQ(y.value(), x);
  Var s = affine(t.constant(row({3})), t.constant(row({2})), t.constant(row({1})));
  EXPECT_EQ(s.scalar(), 7.0);
}

TEST(Affine, BiasGradientIsOnes) {
  std::mt19937_64 rng(2);
  Tape t;
  Var b = t.variable(random_matrix(1, 5, rng));
  Var y = affine(t.constant(random_matrix(1, 4, rng)), t.constant(random_matrix(5, 4, rng)), b);
  t.backward(sum(y));
  EXPECT_EQ(t.grad(b), Matrix::Ones(1, 5));
}

TEST(Affine, ShapeMismatch) {
  Tape t;
  EXPECT_EQ(code_of([&] { affine(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(4, 2)), t.constant(Matrix::Zero(1, 4))); }),
            ErrorCode::kShapeMismatch);
}

TEST(LayerNormalize, Examples) {
  Tape t;
  Var ones = t.constant(Matrix::Ones(1, 2));
  Var zeros = t.constant(Matrix::Zero(1, 2));
  Var c = layer_normalize(t.constant(row({3, 3})), ones, zeros);
  EXPECT_EQ(c.value(), Matrix::Zero(1, 2));
  Var pm = layer_normalize(t.constant(row({1, -1})), ones, zeros);
  double expected = 1.0 / std::sqrt(1.0 + kLayerNormEpsilon);
  EXPECT_DOUBLE_EQ(pm.value()(0, 0), expected);
  EXPECT_DOUBLE_EQ(pm.value()(0, 1), -expected);
  Var g0 = layer_normalize(t.constant(row({0.3, -2.0})), t.constant(Matrix::Zero(1, 2)), t.constant(row({4, 5})));
  EXPECT_EQ(g0.value(), row({4, 5}));
}

TEST(Sigmoid, Examples) {
  Tape t;
  Var x = t.variable(row({0.0}));
  Var s = sigmoid(x);
  EXPECT_EQ(s.scalar(), 0.5);
  t.backward(s);
  EXPECT_EQ(t.grad(x)(0, 0), 0.25);
  Var big = sigmoid(t.constant(row({50.0, 700.0, -700.0})));
  EXPECT_NEAR(big.value()(0, 0), 1.0, 1e-15);
  EXPECT_TRUE(big.value().allFinite());
  EXPECT_GE(big.value()(0, 2), 0.0);
}

TEST(SoftMaximum, Examples) {
  Tape t;
  EXPECT_EQ(soft_maximum(t.constant(row({0.7, 0.7, 0.7})), 0.05).scalar(), 0.7);
  // (0 + e^10) / (1 + e^10)
  EXPECT_NEAR(soft_maximum(t.constant(row({0.0, 1.0})), 0.1).scalar(), 0.9999546, 1e-7);
  EXPECT_NEAR(soft_maximum(t.constant(row({0.0, 1.0})), 1e6).scalar(), 0.5, 1e-6);
  EXPECT_EQ(code_of([&] { soft_maximum(t.constant(Matrix(1, 0)), 1.0); }), ErrorCode::kEmptyVector);
  EXPECT_EQ(code_of([&] { soft_maximum(t.constant(row({1.0})), 0.0); }), ErrorCode::kNonPositiveTemperature);
}

TEST(SoftMaximumProperty, BoundsMonotoneApproachAndPermutation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 1 + static_cast<int>(rng() % 12);
    std::vector<double> x(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (double& v : x) v = u(rng);
    double hard = *std::max_element(x.begin(), x.end());
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double tau : {1.0, 0.1, 0.01}) {
      double s = soft_maximum_value(x, tau);
      EXPECT_LE(s, hard + tau * std::log(static_cast<double>(n)) + 1e-12);
      double gap = std::abs(hard - s);
      EXPECT_LE(gap, prev_gap + 1e-15);
      prev_gap = gap;
    }
    std::vector<double> perm = x;
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_NEAR(soft_maximum_value(perm, 0.1), soft_maximum_value(x, 0.1), 1e-14);
  }
}

TEST(BinaryCrossEntropy, Examples) {
  Tape t;
  Matrix labels = row({1, 0, 1, 0});
  EXPECT_NEAR(binary_cross_entropy(t.constant(labels), labels).scalar(), 0.0, 2e-7);
  EXPECT_NEAR(binary_cross_entropy(t.constant(Matrix::Constant(1, 4, 0.5)), labels).scalar(), std::log(2.0), 1e-15);
  double prev = std::numeric_limits<double>::infinity();
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    double l = binary_cross_entropy(t.constant(row({p})), row({1})).scalar();
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_EQ(code_of([&] { binary_cross_entropy(t.constant(row({0.5})), labels); }), ErrorCode::kShapeMismatch);
}

TEST(Gradient, SquareAndAccumulation) {
  // x used twice: d(x*x)/dx = 2x.
  Matrix g = gradient([](Tape&, Var x) { return sum(multiply(x, x)); }, row({3.0}));
  EXPECT_EQ(g(0, 0), 6.0);
  // f = sum(x*x) + sum(3x) + sum(x): every use contributes.
  Matrix x = row({0.5, -2.0, 4.0});
  Matrix gx = gradient(
      [](Tape&, Var v) { return add(add(sum(multiply(v, v)), sum(scale(v, 3.0))), sum(v)); }, x);
  for (Eigen::Index i = 0; i < x.cols(); ++i) EXPECT_EQ(gx(0, i), 2.0 * x(0, i) + 4.0);
}

TEST(Gradient, Errors) {
  Tape t;
  Var v = t.variable(Matrix::Ones(2, 2));
  EXPECT_EQ(code_of([&] { t.backward(v); }), ErrorCode::kNotScalarOutput);
  Tape other;
  Var w = other.variable(Matrix::Ones(2, 2));
  EXPECT_EQ(code_of([&] { add(v, w); }), ErrorCode::kInputNotOnTape);
  EXPECT_EQ(code_of([&] { t.grad(w); }), ErrorCode::kInputNotOnTape);
}

TEST(FiniteDifference, QuadraticIsExact) {
  std::mt19937_64 rng(9);
  Matrix a = random_matrix(1, 6, rng);
  auto f = [a](Tape& t, Var x) {
    Var c = t.constant(a);
    return add(sum(multiply(x, x)), sum(multiply(c, x)));
  };
  EXPECT_LT(finite_difference_check(f, random_matrix(1, 6, rng), 1e-5), 1e-9);
}

TEST(FiniteDifference, SoftMaximumLowTemperature) {
  std::mt19937_64 rng(10);
  for (int seed = 0; seed < 20; ++seed) {
    Matrix x = random_matrix(1, 5, rng, 0.0, 2.0);
    double err = finite_difference_check([](Tape&, Var v) { return soft_maximum(v, 0.1); }, x);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

// Analytic gradients of every primitive versus central differences.
TEST(FiniteDifference, AllPrimitives) {
  std::mt19937_64 rng(77);
  auto away_from_zero = [](Matrix m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double& v = m.data()[i];
      if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    }
    return m;
  };
  for (int seed = 0; seed < 20; ++seed) {
    Matrix W = random_matrix(4, 3, rng), b = random_matrix(1, 4, rng), gain = random_matrix(1, 4, rng);
    Matrix x = random_matrix(5, 3, rng);
    Matrix labels = (random_matrix(5, 4, rng).array() > 0).cast<double>();
    Matrix probe = random_matrix(5, 4, rng);

    std::vector<std::pair<const char*, ScalarFunction>> checks = {
        {"affine_x", [&](Tape& t, Var v) { return sum(multiply(affine(v, t.constant(W), t.constant(b)), t.constant(probe))); }},
        {"affine_W", [&](Tape& t, Var v) { return sum(multiply(affine(t.constant(x), v, t.constant(b)), t.constant(probe))); }},
        {"linear_block", [&](Tape& t, Var v) {
           return sum(multiply(linear_block(t.constant(x.leftCols(2)), v, 1), t.constant(probe)));
         }},
        {"relu", [&](Tape& t, Var v) { return sum(multiply(relu(v), t.constant(probe.leftCols(3)))); }},
        {"sigmoid", [&](Tape& t, Var v) { return sum(multiply(sigmoid(v), t.constant(probe.leftCols(3)))); }},
        {"layer_norm", [&](Tape& t, Var v) {
           Var y = layer_normalize(affine(v, t.constant(W), t.constant(b)), t.constant(gain), t.constant(b));
           return sum(multiply(y, t.constant(probe)));
         }},
        {"gather_segment", [&](Tape& t, Var v) {
           Var g = gather_rows(v, {4, 0, 0, 2, 1});
           Var s = segment_sum(g, {0, 1, 2, 3, 4, 2}, {1, 0, 1, 2, 0, 2}, 3);
           return sum(multiply(s, s));
         }},
        {"concat_reshape", [&](Tape& t, Var v) {
           Var c = reshape(concat_rows(v, v), 6, 5);
           return sum(multiply(c, sigmoid(c)));
         }},
        {"soft_maximum", [&](Tape&, Var v) { return soft_maximum(v, 0.5); }},
        {"bce", [&](Tape&, Var v) { return binary_cross_entropy(sigmoid(affine(v, v.tape()->constant(W), v.tape()->constant(b))), labels); }},
        {"matmul_row_ops", [&](Tape& t, Var v) {
           Var m = matmul(v, t.constant(W.transpose()));
           return sum(multiply_row(add_row(m, t.constant(b)), t.constant(gain)));
         }},
    };
    for (auto& [name, f] : checks) {
      Matrix at = std::string(name) == "affine_W" ? W : std::string(name) == "linear_block" ? W : away_from_zero(x);
      double err = finite_difference_check(f, at);
      EXPECT_LT(err, 1e-4) << name << " seed " << seed;
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Matrix p = row({1.0, -2.0});
  AdamState st;
  std::vector<Matrix*> params{&p};
  std::vector<Matrix> grads{Matrix::Zero(1, 2)};
  adam_step(st, params, grads, 0.001);
  EXPECT_EQ(p, row({1.0, -2.0}));
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix p = row({0.0});
  AdamState st;
  std::vector<Matrix*> params{&p};
  std::vector<Matrix> grads{row({0.5})};
  adam_step(st, params, grads, 0.001);
  // m_hat = 0.5, v_hat = 0.25 -> step = lr * 0.5 / (0.5 + 1e-8)
  EXPECT_NEAR(p(0, 0), -0.001 * 0.5 / (0.5 + 1e-8), 1e-18);
  adam_step(st, params, grads, 0.001);
  EXPECT_EQ(st.step, 2);
  std::vector<Matrix> bad{Matrix::Zero(2, 2)};
  EXPECT_EQ(code_of([&] { adam_step(st, params, bad, 0.001); }), ErrorCode::kShapeMismatch);
}

}  // namespace
}  // namespace rbb::diff
