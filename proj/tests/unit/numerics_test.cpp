#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsgc/ops.hpp"

using namespace lsgc;
using num::Tensor;

namespace {

using TD = Tensor<double>;
using TF = Tensor<float>;

std::vector<double> values(const TD& t) { return {t.data().begin(), t.data().end()}; }

// Central differences of a scalar function of one tensor, computed off-tape.
std::vector<double> numeric_grad(TD x, const std::function<TD()>& f, double h = 1e-4) {
  std::vector<double> g(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double fp = f().item();
    x.data()[i] = orig - h;
    const double fm = f().item();
    x.data()[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(TD::from({2, 3}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(TD::zeros({0, 2}), ShapeError);
  auto t = TD::zeros({2, 3});
  EXPECT_EQ(t.numel(), 6u);
}

TEST(Tensor, FrozenTensorNeverAccumulatesGrad) {
  auto a = TD::from({1, 2}, {1, 2}, false);
  auto b = TD::from({2, 1}, {3, 4}, true);
  num::Tape<double> tape;
  {
    num::TapeScope<double> scope(tape);
    tape.backward(num::sum(num::matmul(a, b)));
  }
  EXPECT_FALSE(a.has_grad());
  ASSERT_TRUE(b.has_grad());
  EXPECT_EQ(b.grad().size(), b.numel());
}

TEST(Matmul, IdentityAndHandValue) {
  auto eye = TD::from({2, 2}, {1, 0, 0, 1});
  auto m = TD::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(num::matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
  auto r = num::matmul(TD::from({1, 2}, {1, 2}), TD::from({2, 1}, {3, 4}));
  EXPECT_EQ(r.item(), 11.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    num::matmul(TD::zeros({2, 3}), TD::zeros({2, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2 x 3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientOfSumIsRowSumsOfBTransposeAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> av(6), bv(12);
  for (auto& v : av) v = nd(rng);
  for (auto& v : bv) v = nd(rng);
  auto a = TD::from({2, 3}, av, true);
  auto b = TD::from({3, 4}, bv, false);
  num::Tape<double> tape;
  {
    num::TapeScope<double> scope(tape);
    tape.backward(num::sum(num::matmul(a, b)));
  }
  const auto g = a.grad_values();
  const auto fd = numeric_grad(a, [&] { return num::sum(num::matmul(a, b)); });
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double row = 0;
      for (std::size_t j = 0; j < 4; ++j) row += bv[k * 4 + j];
      EXPECT_NEAR(g[i * 3 + k], row, 1e-12);
      EXPECT_NEAR(g[i * 3 + k], fd[i * 3 + k], 1e-7);
    }
  }
}

TEST(Softmax, HandValues) {
  auto s = num::softmax(TD::from({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  auto big = num::softmax(TF::from({2}, {1000.f, 1000.f}));
  EXPECT_FLOAT_EQ(big[0], 0.5f);
  EXPECT_FLOAT_EQ(big[1], 0.5f);
  auto q = num::softmax(TD::from({2}, {std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(q[0], 0.25, 1e-12);
  EXPECT_NEAR(q[1], 0.75, 1e-12);
}

TEST(Softmax, NanInputIsNumericError) {
  EXPECT_THROW(num::softmax(TD::from({2}, {0, std::nan("")})), NumericError);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(7), w(7);
    const double c = nd(rng) * 10.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = nd(rng);
      w[i] = v[i] + c;
    }
    const auto s = num::softmax(TD::from({7}, v));
    const auto t = num::softmax(TD::from({7}, w));
    double sum = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      sum += s[i];
      EXPECT_GT(s[i], 0.0);
      EXPECT_NEAR(s[i], t[i], 1e-10);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, AnyAxisNormalizes) {
  auto x = TD::from({2, 3}, {1, 2, 3, -1, 0, 4});
  auto s0 = num::softmax(x, 0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s0[j] + s0[3 + j], 1.0, 1e-12);
}

TEST(CrossEntropy, HandValuesAndGradient) {
  EXPECT_NEAR(num::cross_entropy(TD::from({2}, {0, 0}), 0).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(num::cross_entropy(TD::from({2}, {20, 0}), 0).item(), 0.0, 1e-8);
  auto logits = TD::from({2}, {0, 0}, true);
  num::Tape<double> tape;
  {
    num::TapeScope<double> scope(tape);
    tape.backward(num::cross_entropy(logits, 0));
  }
  EXPECT_NEAR(logits.grad()[0], -0.5, 1e-12);
  EXPECT_NEAR(logits.grad()[1], 0.5, 1e-12);
}

TEST(CrossEntropy, TargetOutOfRangeIsIndexError) {
  EXPECT_THROW(num::cross_entropy(TD::from({2}, {0, 0}), 2), IndexError);
  EXPECT_THROW(num::cross_entropy(TD::from({2}, {0, 0}), -1), IndexError);
}

TEST(LayerNorm, HandValues) {
  const auto one = TD::full({2}, 1.0), zero = TD::zeros({2});
  auto a = num::layer_norm(TD::from({2}, {5, 5}), one, zero);
  EXPECT_NEAR(a[0], 0.0, 1e-12);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  auto b = num::layer_norm(TD::from({2}, {1, -1}), one, zero, 1e-12);
  EXPECT_NEAR(b[0], 1.0, 1e-9);
  EXPECT_NEAR(b[1], -1.0, 1e-9);
  auto c = num::layer_norm(TD::from({2}, {2, 4}), TD::full({2}, 2.0), TD::full({2}, 1.0), 1e-12);
  EXPECT_NEAR(c[0], -1.0, 1e-9);
  EXPECT_NEAR(c[1], 3.0, 1e-9);
}

TEST(Backward, SquareAndConstant) {
  auto x = TD::scalar(3.0, true);
  num::Tape<double> tape;
  {
    num::TapeScope<double> scope(tape);
    tape.backward(num::mul(x, x));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  auto y = TD::from({3}, {1, 2, 3}, true);
  num::Tape<double> t2;
  {
    num::TapeScope<double> scope(t2);
    auto c = num::scale(num::sum(y), 0.0);
    t2.backward(c);
  }
  for (double g : y.grad_values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = TD::scalar(3.0, true);
  for (int i = 0; i < 2; ++i) {
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    tape.backward(num::mul(x, x));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = TD::from({2}, {1, 2}, true);
  num::Tape<double> tape;
  num::TapeScope<double> scope(tape);
  auto y = num::scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Tape, EmptyAfterResetAndUnusedWithoutGrad) {
  num::Tape<double> tape;
  num::TapeScope<double> scope(tape);
  auto frozen = TD::from({2}, {1, 2});
  num::scale(frozen, 2.0);
  EXPECT_TRUE(tape.empty());
  auto live = TD::from({2}, {1, 2}, true);
  num::scale(live, 2.0);
  EXPECT_EQ(tape.size(), 1u);
  tape.reset();
  EXPECT_TRUE(tape.empty());
}

TEST(Dropout, InvertedScalingAndEvalIdentity) {
  auto x = TD::full({1000}, 1.0);
  auto eval = num::dropout(x, 0.5, 7, false);
  EXPECT_EQ(values(eval), values(x));
  auto tr = num::dropout(x, 0.5, 7, true);
  std::size_t kept = 0;
  for (double v : tr.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_GT(kept, 400u);
  EXPECT_LT(kept, 600u);
  EXPECT_EQ(values(num::dropout(x, 0.5, 7, true)), values(tr));
}

TEST(Determinism, SameInputsGiveBitwiseSameOutputs) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> nd;
  std::vector<float> q(24), k(24), v(24);
  for (auto* vec : {&q, &k, &v}) {
    for (auto& e : *vec) e = nd(rng);
  }
  auto run = [&] {
    return num::causal_attention(TF::from({6, 4}, q), TF::from({6, 4}, k), TF::from({6, 4}, v), 2, 3, 2);
  };
  const auto a = run(), b = run();
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}
