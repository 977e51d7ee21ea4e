#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "tinyann/error.hpp"
#include "tinyann/estimator.hpp"
#include "tinyann/inference.hpp"

using namespace tinyann;

TEST(Activation, ElementwiseValues) {
  EXPECT_EQ(eval_activation(Activation::HardSigmoid, 0.0), 0.5);
  EXPECT_EQ(eval_activation(Activation::HardSigmoid, 3.0), 1.0);
  EXPECT_EQ(eval_activation(Activation::HardSigmoid, -3.0), 0.0);
  EXPECT_EQ(eval_activation(Activation::Softsign, 1.0), 0.5);
  EXPECT_EQ(eval_activation(Activation::Relu, -2.0), 0.0);
  EXPECT_EQ(eval_activation(Activation::Relu, 2.0), 2.0);
  EXPECT_NEAR(eval_activation(Activation::Tanh, 0.5), std::tanh(0.5), 1e-15);
  EXPECT_NEAR(eval_activation(Activation::Sigmoid, 0.0), 0.5, 1e-15);
}

TEST(Activation, LayerwiseKindRejectedElementwise) {
  try {
    eval_activation(Activation::Softmax, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayerwiseKind);
  }
}

TEST(Activation, LayerwiseValues) {
  const auto s = eval_layer_activation(Activation::Softmax, std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_EQ(eval_layer_activation(Activation::Max, std::vector<double>{0.2, 0.7, 0.1}),
            (std::vector<double>{0.0, 1.0, 0.0}));
  const std::vector<double> z{1.0, 2.0, 3.0};
  const auto exact = eval_layer_activation(Activation::Softmax, z);
  const auto approx = eval_layer_activation(Activation::ApproxSoftmax, z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(approx[i] - exact[i]) / exact[i], 0.01);
  try {
    eval_layer_activation(Activation::Softmax, std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLayer);
  }
}

TEST(Activation, SoftmaxSumsToOneOnExtremeInputs) {
  const auto s = eval_layer_activation(Activation::Softmax, std::vector<double>{1000.0, -1000.0, 999.0});
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-12);
  const auto a = eval_layer_activation(Activation::ApproxSoftmax, std::vector<double>{1000.0, -1000.0, 999.0});
  EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-2);
}

TEST(ApproxExp, HandValues) {
  EXPECT_EQ(approx_pow2(3.0), 8.0);
  EXPECT_NEAR(approx_pow2(0.5), 1.416667, 1e-6);
  EXPECT_NEAR(approx_pow2(-1.5), 0.354167, 1e-6);
  EXPECT_EQ(approx_exp(0.0), 1.0);
  EXPECT_LT(std::abs(approx_exp(1.0) - 2.718282) / 2.718282, 0.005);
}

TEST(ApproxExp, RangeChecked) {
  EXPECT_NO_THROW(approx_pow2(126.0));
  EXPECT_NO_THROW(approx_pow2(-126.0));
  try {
    approx_pow2(126.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RangeExceeded);
  }
}

TEST(ApproxExp, ApproximateModeStaysClose) {
  for (double x = -8.0; x <= 8.0; x += 0.37) {
    EXPECT_NEAR(eval_activation(Activation::Sigmoid, x, ExpMode::Approximate),
                eval_activation(Activation::Sigmoid, x), 5e-3);
    EXPECT_NEAR(eval_activation(Activation::Tanh, x, ExpMode::Approximate), std::tanh(x), 1e-2);
  }
  EXPECT_EQ(eval_activation(Activation::Sigmoid, 1e6, ExpMode::Approximate), 1.0);
  EXPECT_EQ(eval_activation(Activation::Sigmoid, -1e6, ExpMode::Approximate), 0.0);
}

TEST(Dense, IdentityAndConstantCases) {
  LayerSpec layer{LayerKind::Dense, 2, 2, Activation::Relu};
  LayerParams p{Matrix(2, 2), {0.0, 0.0}};
  p.weights(0, 0) = p.weights(1, 1) = 1.0;
  EXPECT_EQ(forward_dense(layer, p, std::vector<double>{0.3, 0.7}), (std::vector<double>{0.3, 0.7}));

  layer.activation = Activation::Sigmoid;
  LayerParams c{Matrix(2, 2), {0.4, 0.4}};
  for (double v : forward_dense(layer, c, std::vector<double>{5.0, -3.0})) {
    EXPECT_DOUBLE_EQ(v, 1.0 / (1.0 + std::exp(-0.4)));
  }
  EXPECT_THROW(forward_dense(layer, c, std::vector<double>{1.0}), Error);
}

TEST(Dense, MatchesOracleOnRandom3To2) {
  const auto spec = ModelSpec::chain(3, {{LayerKind::Dense, 2, Activation::Tanh}});
  const auto params = oracle::random_params(spec, 5);
  const std::vector<double> x{0.1, -0.7, 0.4};
  const auto got = forward_dense(spec.layers[0], params.layers[0], x);
  const auto want = oracle::run(spec, params, {x}).front();
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(got[i], static_cast<double>(want[i]), 1e-12);
}

TEST(Dense, PreActivationIsLinearWithoutBias) {
  LayerParams p{Matrix(2, 3), {0.0, 0.0}};
  std::iota(p.weights.data.begin(), p.weights.data.end(), -2.0);
  const std::vector<double> x{0.5, -1.25, 2.0};
  const std::vector<double> x3{1.5, -3.75, 6.0};
  const auto z = affine(p, x);
  const auto z3 = affine(p, x3);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(z3[i], 3.0 * z[i]);
}

TEST(Recurrent, ZeroFeedbackEqualsDense) {
  const auto spec = ModelSpec::chain(3, {{LayerKind::Recurrent, 2, Activation::Sigmoid}});
  auto params = oracle::random_params(spec, 9);
  params.layers[0].weights(0, 3) = params.layers[0].weights(0, 4) = 0.0;
  params.layers[0].weights(1, 3) = params.layers[0].weights(1, 4) = 0.0;
  LayerSpec dense{LayerKind::Dense, 3, 2, Activation::Sigmoid};
  LayerParams dp{Matrix(2, 3), params.layers[0].biases};
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) dp.weights(r, c) = params.layers[0].weights(r, c);
  }
  std::vector<double> state{0.9, -0.4};
  const std::vector<double> x{0.2, 0.5, -0.1};
  EXPECT_EQ(step_recurrent(spec.layers[0], params.layers[0], x, state), forward_dense(dense, dp, x));
}

TEST(Recurrent, TwoStepsMatchHandUnrolling) {
  const auto spec = ModelSpec::chain(1, {{LayerKind::Recurrent, 2, Activation::Tanh}});
  auto params = Parameters::zeros(spec);
  auto& w = params.layers[0].weights;
  w(0, 0) = 0.5; w(0, 1) = 0.3; w(0, 2) = -0.2;
  w(1, 0) = -0.4; w(1, 1) = 0.1; w(1, 2) = 0.6;
  params.layers[0].biases = {0.05, -0.05};
  std::vector<double> state(2, 0.0);
  const auto y1 = step_recurrent(spec.layers[0], params.layers[0], std::vector<double>{1.0}, state);
  const auto y2 = step_recurrent(spec.layers[0], params.layers[0], std::vector<double>{-1.0}, state);
  const double a1 = std::tanh(0.5 + 0.05), b1 = std::tanh(-0.4 - 0.05);
  const double a2 = std::tanh(-0.5 + 0.3 * a1 - 0.2 * b1 + 0.05);
  const double b2 = std::tanh(0.4 + 0.1 * a1 + 0.6 * b1 - 0.05);
  EXPECT_NEAR(y1[0], a1, 1e-12);
  EXPECT_NEAR(y1[1], b1, 1e-12);
  EXPECT_NEAR(y2[0], a2, 1e-12);
  EXPECT_NEAR(y2[1], b2, 1e-12);
  EXPECT_EQ(state, y2);
}

TEST(Recurrent, FeedbackMakesRepeatedInputsDiffer) {
  // A counter: one neuron with feedback weight 1 accumulates its input.
  const auto spec = ModelSpec::chain(1, {{LayerKind::Recurrent, 1, Activation::Relu}});
  auto params = Parameters::zeros(spec);
  params.layers[0].weights(0, 0) = 1.0;
  params.layers[0].weights(0, 1) = 1.0;
  auto state = RnnState::for_spec(spec);
  EXPECT_EQ(step_rnn(spec, params, std::vector<double>{1.0}, state)[0], 1.0);
  EXPECT_EQ(step_rnn(spec, params, std::vector<double>{1.0}, state)[0], 2.0);
  EXPECT_EQ(step_rnn(spec, params, std::vector<double>{1.0}, state)[0], 3.0);
}

TEST(Run, MacCountsMatchWeights) {
  const auto fig1 = parse_architecture("3-3sigmoid-2softmax");
  MacCounter counter;
  run_ffnn(fig1, oracle::random_params(fig1, 1), std::vector<double>{0.1, 0.2, 0.3}, {ExpMode::Exact, &counter});
  EXPECT_EQ(counter.count(), 15u);

  const auto rnn = parse_architecture("12-9relu-9relu-r17softmax");
  const auto params = oracle::random_params(rnn, 2);
  auto state = RnnState::for_spec(rnn);
  counter.reset();
  step_rnn(rnn, params, std::vector<double>(12, 0.5), state, {ExpMode::Exact, &counter});
  EXPECT_EQ(counter.count(), 631u);
  step_rnn(rnn, params, std::vector<double>(12, 0.5), state, {ExpMode::Exact, &counter});
  EXPECT_EQ(counter.count(), 2 * 631u);
}

TEST(Run, FfnnRejectsRecurrentAndWrongWidth) {
  const auto rnn = parse_architecture("3-r2softmax");
  try {
    run_ffnn(rnn, Parameters::zeros(rnn), std::vector<double>(3, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RecurrentLayerPresent);
  }
  const auto ffnn = parse_architecture("3-2softmax");
  EXPECT_THROW(run_ffnn(ffnn, Parameters::zeros(ffnn), std::vector<double>(4, 0.0)), Error);
}

TEST(Run, StepRnnWithoutRecurrenceEqualsRunFfnn) {
  const auto spec = parse_architecture("6-5softsign-4hardsigmoid-3softmax");
  const auto params = oracle::random_params(spec, 3);
  const std::vector<double> x{0.1, 0.9, -0.3, 0.4, 0.0, 0.2};
  auto state = RnnState::for_spec(spec);
  EXPECT_EQ(step_rnn(spec, params, x, state), run_ffnn(spec, params, x));
}

TEST(Run, Ffnn180x8x5MatchesOracle) {
  const auto spec = parse_architecture("180-8relu-5max");
  const auto params = oracle::random_params(spec, 4, 0.2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(180);
  for (auto& v : x) v = u(rng);
  const auto relu = parse_architecture("180-8relu-5relu");
  const auto got = run_ffnn(relu, params, x);
  const auto want = oracle::run(relu, params, {x}).front();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got[i], static_cast<double>(want[i]), 1e-12);
  const auto onehot = run_ffnn(spec, params, x);
  EXPECT_EQ(std::accumulate(onehot.begin(), onehot.end(), 0.0), 1.0);
  EXPECT_EQ(argmax(onehot), argmax(got));
}

TEST(Run, ArgmaxTieGoesToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.4, 0.4, 0.1}), 1u);
}

TEST(Run, RandomModelsMatchOracleAndCount) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = oracle::random_spec(rng, true);
    const auto params = oracle::random_params(spec, 1000 + trial);
    std::vector<std::vector<double>> inputs(3, std::vector<double>(spec.features));
    for (auto& in : inputs) {
      for (auto& v : in) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    const auto want = oracle::run(spec, params, inputs);
    auto state = RnnState::for_spec(spec);
    MacCounter counter;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto got = step_rnn(spec, params, inputs[t], state, {ExpMode::Exact, &counter});
      for (std::size_t i = 0; i < got.size(); ++i) {
        const auto last = spec.layers.back().activation;
        if (last == Activation::Max) continue;
        const double tol = last == Activation::ApproxSoftmax ? 1e-2 : 1e-12;
        ASSERT_NEAR(got[i], static_cast<double>(want[t][i]), tol) << format_architecture(spec);
      }
    }
    EXPECT_EQ(counter.count(), 3 * count_weights(spec));
  }
}
