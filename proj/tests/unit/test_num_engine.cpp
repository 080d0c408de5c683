#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/num_engine.hpp"
#include "test_support.hpp"

using namespace ehrcvd;

TEST(Tensor2, ShapeChecksAndKernels) {
  EXPECT_THROW(Tensor2(2, 2, std::vector<double>{1, 2, 3}), Error);
  const Tensor2 W(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  std::vector<double> out(3, 0.0);
  const std::vector<double> x = {1, -1};
  add_vec_mat(x, W, out);
  EXPECT_EQ(out, (std::vector<double>{-3, -3, -3}));
  std::vector<double> back(2, 0.0);
  const std::vector<double> d = {1, 0, 1};
  add_mat_vec(W, d, back);
  EXPECT_EQ(back, (std::vector<double>{4, 10}));
  Tensor2 G(2, 3);
  add_outer(x, d, G);
  EXPECT_EQ(G, Tensor2(2, 3, std::vector<double>{1, 0, 1, -1, 0, -1}));
  EXPECT_DOUBLE_EQ(dot(x, x), 2.0);
}

TEST(Activations, SigmoidAndLogSigmoidAreStable) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_DOUBLE_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(log_sigmoid(-1000.0), -1000.0, 1e-9);
  EXPECT_NEAR(log_sigmoid(2.0), std::log(sigmoid(2.0)), 1e-15);
}

TEST(Softmax, SpecExamples) {
  const auto a = softmax(std::vector<double>{0, 0, 0});
  for (double v : a) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const auto b = softmax(std::vector<double>{0, std::log(2.0), std::log(4.0)});
  EXPECT_NEAR(b[0], 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(b[1], 2.0 / 7.0, 1e-15);
  EXPECT_NEAR(b[2], 4.0 / 7.0, 1e-15);
  const auto c = softmax(std::vector<double>{1000, 0});
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_GE(c[1], 0.0);
  EXPECT_LT(c[1], 1e-300);
}

TEST(Softmax, SumsToOneOrderPreservingAndShiftInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + rng.below(20));
    // Multiples of 2^-10 stay exact under the shift below.
    for (auto& v : s) v = std::round(rng.uniform(-30, 30) * 1024.0) / 1024.0;
    const auto p = softmax(s);
    double total = 0;
    for (double v : p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s[i] < s[j]) EXPECT_LE(p[i], p[j]);
      }
    }
    // Exact differences give bitwise identical max-shifted inputs and outputs.
    std::vector<double> shifted = s;
    for (auto& v : shifted) v += 64.0;
    EXPECT_EQ(softmax(shifted), p);
  }
}

TEST(MaskedSoftmax, ZeroOnMaskedEntries) {
  const std::vector<double> s = {5, 0, std::log(2.0), 9};
  const std::vector<std::uint8_t> m = {0, 1, 1, 0};
  const auto p = masked_softmax(s, m);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[3], 0.0);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[2], 2.0 / 3.0, 1e-15);
  EXPECT_THROW(masked_softmax(s, std::vector<std::uint8_t>{0, 0, 0, 0}), NumericError);
}

TEST(BceLoss, SpecExamples) {
  const auto half = bce_loss(std::vector<double>{0.5}, std::vector<double>{1}, std::vector<double>{1});
  EXPECT_NEAR(half.loss, std::log(2.0), 1e-15);
  const auto masked =
      bce_loss(std::vector<double>{0.3, 0.9}, std::vector<double>{1, 0}, std::vector<double>{1, 0});
  EXPECT_NEAR(masked.loss, -std::log(0.3), 1e-15);
  EXPECT_EQ(masked.grad[1], 0.0);
  const auto none = bce_loss(std::vector<double>{0.3}, std::vector<double>{1}, std::vector<double>{0});
  EXPECT_EQ(none.loss, 0.0);
  EXPECT_THROW(bce_loss(std::vector<double>{0.3}, std::vector<double>{1, 0}, std::vector<double>{1, 1}),
               Error);
}

TEST(BceLoss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  std::vector<double> p(10), y(10), m(10);
  for (std::size_t i = 0; i < 10; ++i) {
    p[i] = rng.uniform(0.05, 0.95);
    y[i] = rng.bernoulli(0.5);
    m[i] = rng.bernoulli(0.8);
  }
  const auto g = bce_loss(p, y, m).grad;
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 10; ++i) {
    auto hi = p, lo = p;
    hi[i] += eps;
    lo[i] -= eps;
    const double numeric = (bce_loss(hi, y, m).loss - bce_loss(lo, y, m).loss) / (2 * eps);
    EXPECT_LT(relative_error(g[i], numeric), 1e-6) << i;
  }
}

TEST(BceLoss, NonNegativeAndZeroOnlyWhenClippedPerfect) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(5), y(5), m(5, 1.0);
    for (std::size_t i = 0; i < 5; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.bernoulli(0.5);
    }
    EXPECT_GE(bce_loss(p, y, m).loss, 0.0);
  }
  const auto perfect = bce_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{1, 0},
                                std::vector<double>{1, 1});
  EXPECT_NEAR(perfect.loss, -std::log1p(-kProbabilityClip), 1e-15);
}

namespace {

struct Scalar {
  Tensor2 w{1, 1};
  Tensor2 g{1, 1};
  std::vector<ParamRef> refs() { return {{"w", &w}}; }
  std::vector<const Tensor2*> grads() const { return {&g}; }
};

}  // namespace

TEST(Adam, ZeroGradientIsIdentity) {
  Scalar s;
  s.w[0] = 0.7;
  auto refs = s.refs();
  AdamState state(AdamHyper{}, refs);
  s.g[0] = 1.0;
  adam_step(refs, s.grads(), state);
  const double before = s.w[0];
  s.g[0] = 0.0;
  adam_step(refs, s.grads(), state);
  EXPECT_EQ(s.w[0], before);
  EXPECT_EQ(state.step, 2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Scalar s;
  s.w[0] = 1.0;
  s.g[0] = 3.7;
  auto refs = s.refs();
  AdamState state(AdamHyper{.learning_rate = 0.01}, refs);
  adam_step(refs, s.grads(), state);
  EXPECT_NEAR(s.w[0], 1.0 - 0.01, 1e-9);
}

TEST(Adam, QuadraticMatchesIndependentRecurrence) {
  Scalar s;
  s.w[0] = 1.0;
  auto refs = s.refs();
  const AdamHyper h{.learning_rate = 0.1};
  AdamState state(h, refs);
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    s.g[0] = 2.0 * s.w[0];
    adam_step(refs, s.grads(), state);
    const double g = 2.0 * w;
    m = h.beta1 * m + (1 - h.beta1) * g;
    v = h.beta2 * v + (1 - h.beta2) * g * g;
    const double mh = m / (1 - std::pow(h.beta1, t));
    const double vh = v / (1 - std::pow(h.beta2, t));
    w -= h.learning_rate * mh / (std::sqrt(vh) + h.epsilon);
  }
  EXPECT_NEAR(s.w[0], w, 1e-12);
  EXPECT_LT(std::abs(s.w[0]), 0.1);
}

TEST(Adam, NonFiniteGradientNamesBlockAndLeavesParams) {
  Scalar s;
  s.w[0] = 0.25;
  s.g[0] = std::nan("");
  auto refs = s.refs();
  AdamState state(AdamHyper{}, refs);
  try {
    adam_step(refs, s.grads(), state);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("gradient blow-up in w"), std::string::npos);
  }
  EXPECT_EQ(s.w[0], 0.25);
  EXPECT_EQ(state.step, 0);
}

TEST(GradCheck, LinearBceModel) {
  Rng rng(4);
  const std::size_t n = 12, d = 4;
  const Tensor2 X = ehrcvd::testing::random_tensor(n, d, rng);
  std::vector<double> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  Tensor2 w = ehrcvd::testing::random_tensor(d, 1, rng);
  Tensor2 b(1, 1, 0.1);
  auto forward = [&](Tensor2* gw, Tensor2* gb) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      double z = b[0];
      for (std::size_t j = 0; j < d; ++j) z += X(i, j) * w[j];
      p[i] = sigmoid(z);
    }
    const auto lg = bce_loss(p, y, std::vector<double>(n, 1.0));
    if (gw) {
      gw->fill(0.0);
      gb->fill(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double dz = lg.grad[i] * p[i] * (1 - p[i]);
        for (std::size_t j = 0; j < d; ++j) (*gw)[j] += dz * X(i, j);
        (*gb)[0] += dz;
      }
    }
    return lg.loss;
  };
  Tensor2 gw(d, 1), gb(1, 1);
  forward(&gw, &gb);
  const std::vector<ParamRef> refs = {{"w", &w}, {"b", &b}};
  const std::vector<const Tensor2*> grads = {&gw, &gb};
  const auto report = grad_check(refs, grads, [&] { return forward(nullptr, nullptr); });
  EXPECT_LT(report.max_rel_error, 1e-6);
  ASSERT_EQ(report.blocks.size(), 2u);
  EXPECT_EQ(report.blocks[0].name, "w");

  gw[0] += 0.1;
  EXPECT_GT(grad_check(refs, grads, [&] { return forward(nullptr, nullptr); }).max_rel_error, 1e-3);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(Checkpoint, RoundTripAndLayout) {
  const auto path = std::filesystem::temp_directory_path() / "ehrcvd_ckpt_test.bin";
  const std::vector<NamedTensor> blocks = {{"a", Tensor2(2, 3, std::vector<double>{1, 2, 3, 4, 5, -6.5})},
                                           {"bias", Tensor2(1, 1, std::vector<double>{0.125})}};
  write_checkpoint(path, blocks);
  const auto back = read_checkpoint(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].value, blocks[0].value);
  EXPECT_EQ(back[1].value, blocks[1].value);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes.substr(0, 8), "EHRCKPT1");
  // header 16 + per block (4 + name + 16) + 7 doubles
  EXPECT_EQ(bytes.size(), 16u + (4 + 1 + 16) + (4 + 4 + 16) + 7 * 8);

  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(read_checkpoint(path), Error);
  std::filesystem::remove(path);
}
