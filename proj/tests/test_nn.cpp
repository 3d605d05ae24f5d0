#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kdep/distill.hpp"
#include "kdep/nn.hpp"
#include "support/oracles.hpp"

using kdep::FeatureMatrix;
using kdep::ForwardCache;
using kdep::LayerKind;
using kdep::LayerSpec;
using kdep::Network;
using kdep::NetworkSpec;
using kdep::TensorShape;

namespace {

NetworkSpec dense_spec(std::size_t in, std::size_t out) {
  NetworkSpec spec;
  spec.input = TensorShape::vec(in);
  spec.layers = {{LayerKind::Dense, in, out}};
  spec.tap_index = 0;
  return spec;
}

NetworkSpec mlp_spec(std::size_t in, std::size_t hidden, std::size_t feat,
                     std::size_t classes) {
  NetworkSpec spec;
  spec.input = TensorShape::vec(in);
  spec.layers = {{LayerKind::Dense, in, hidden},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::Dense, hidden, feat},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::LinearHead, feat, classes}};
  spec.tap_index = 2;
  return spec;
}

NetworkSpec conv_spec(std::size_t h, std::size_t w, std::size_t ch,
                      std::size_t feat, std::size_t classes) {
  NetworkSpec spec;
  spec.input = TensorShape::img(h, w, ch);
  spec.layers = {{LayerKind::Conv3x3, ch, 4},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::Conv3x3, 4, 6},
                 {LayerKind::Gap, 0, 0},
                 {LayerKind::Dense, 6, feat},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::LinearHead, feat, classes}};
  spec.tap_index = 4;
  return spec;
}

}  // namespace

TEST(InitNetworkTest, SameSeedBitIdentical) {
  const NetworkSpec spec = dense_spec(4, 4);
  const Network a = kdep::init_network(spec, 12);
  const Network b = kdep::init_network(spec, 12);
  EXPECT_EQ(a.params, b.params);
  const Network c = kdep::init_network(spec, 13);
  EXPECT_NE(a.params, c.params);
}

TEST(InitNetworkTest, HeVarianceMonteCarlo) {
  // dense(4, 25000) gives 1e5 weights with fan_in 4; E[w^2] should sit
  // within 5% of 2/4.
  const NetworkSpec spec = dense_spec(4, 25000);
  const Network net = kdep::init_network(spec, 321);
  double acc = 0.0;
  const std::size_t weights = 4 * 25000;
  for (std::size_t i = 0; i < weights; ++i) acc += net.params[i] * net.params[i];
  acc /= static_cast<double>(weights);
  EXPECT_NEAR(acc, 0.5, 0.025);
}

TEST(InitNetworkTest, BiasesExactlyZero) {
  const NetworkSpec spec = mlp_spec(3, 5, 4, 2);
  const Network net = kdep::init_network(spec, 7);
  // Dense(3,5): bias offset 15..19; dense(5,4): 20+.. etc. Walk layers.
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    if (l.kind == LayerKind::Relu || l.kind == LayerKind::Gap) continue;
    const std::size_t bias_begin = net.offsets[li] + l.a * l.b;
    for (std::size_t i = 0; i < l.b; ++i) {
      EXPECT_EQ(net.params[bias_begin + i], 0.0);
    }
  }
}

TEST(ForwardTest, IdentityDense) {
  const NetworkSpec spec = dense_spec(2, 2);
  Network net = kdep::init_network(spec, 1);
  std::fill(net.params.begin(), net.params.end(), 0.0);
  net.params[0] = 1.0;  // w[0][0]
  net.params[3] = 1.0;  // w[1][1]
  const auto batch = FeatureMatrix::from_rows({{3, -1}});
  const ForwardCache cache = kdep::forward(net, batch);
  EXPECT_DOUBLE_EQ(cache.features(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(cache.features(0, 1), -1.0);
  EXPECT_FALSE(cache.has_logits);
}

TEST(ForwardTest, TapKeepsPreReluValues) {
  NetworkSpec spec;
  spec.input = TensorShape::vec(2);
  spec.layers = {{LayerKind::Dense, 2, 2}, {LayerKind::Relu, 0, 0}};
  spec.tap_index = 0;
  Network net = kdep::init_network(spec, 1);
  std::fill(net.params.begin(), net.params.end(), 0.0);
  net.params[0] = 1.0;
  net.params[3] = 1.0;
  const auto batch = FeatureMatrix::from_rows({{-1, 2}});
  const ForwardCache cache = kdep::forward(net, batch);
  EXPECT_DOUBLE_EQ(cache.features(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(cache.features(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(cache.acts.back()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(cache.acts.back()(0, 1), 2.0);
}

TEST(ForwardTest, GapIsArithmeticMean) {
  NetworkSpec spec;
  spec.input = TensorShape::img(2, 2, 1);
  spec.layers = {{LayerKind::Gap, 0, 0}};
  spec.tap_index = 0;
  const Network net = kdep::init_network(spec, 1);
  const auto batch = FeatureMatrix::from_rows({{1, 2, 3, 6}});
  const ForwardCache cache = kdep::forward(net, batch);
  EXPECT_DOUBLE_EQ(cache.features(0, 0), 3.0);
}

TEST(ForwardTest, DeterministicBitIdentical) {
  const NetworkSpec spec = mlp_spec(6, 8, 4, 3);
  const Network net = kdep::init_network(spec, 5);
  const FeatureMatrix batch = oracle::random_matrix(7, 6, 50);
  const ForwardCache a = kdep::forward(net, batch);
  const ForwardCache b = kdep::forward(net, batch);
  EXPECT_TRUE(a.features == b.features);
  EXPECT_TRUE(a.logits == b.logits);
}

TEST(ForwardTest, ShapeMismatchThrows) {
  const NetworkSpec spec = dense_spec(3, 2);
  const Network net = kdep::init_network(spec, 1);
  EXPECT_THROW(kdep::forward(net, FeatureMatrix(1, 4, 0.0)), kdep::ShapeError);
}

TEST(SpecValidationTest, RejectsBadSequences) {
  NetworkSpec spec;
  spec.input = TensorShape::vec(3);
  spec.layers = {{LayerKind::Dense, 4, 2}};  // width mismatch
  spec.tap_index = 0;
  EXPECT_THROW(kdep::init_network(spec, 1), kdep::SpecError);

  spec.layers = {{LayerKind::Conv3x3, 3, 4}};  // conv on vector input
  EXPECT_THROW(kdep::init_network(spec, 1), kdep::SpecError);

  // Tap followed by another dense layer is not a valid tap position.
  spec.layers = {{LayerKind::Dense, 3, 4}, {LayerKind::Dense, 4, 2}};
  spec.tap_index = 0;
  EXPECT_THROW(kdep::init_network(spec, 1), kdep::SpecError);
}

TEST(BackwardTest, ZeroGradsGiveZeroParamGrads) {
  const NetworkSpec spec = mlp_spec(4, 6, 3, 2);
  const Network net = kdep::init_network(spec, 9);
  const FeatureMatrix batch = oracle::random_matrix(5, 4, 51);
  const ForwardCache cache = kdep::forward(net, batch);
  const FeatureMatrix zero_feat(5, 3, 0.0);
  const FeatureMatrix zero_logit(5, 2, 0.0);
  kdep::OutputGrads og;
  og.d_features = &zero_feat;
  og.d_logits = &zero_logit;
  const std::vector<double> grads = kdep::backward(net, cache, og);
  for (double g : grads) EXPECT_EQ(g, 0.0);
}

TEST(BackwardTest, ChainRuleBaseCase) {
  // Single dense(1,1) with loss = feature value: grad_w = x, grad_b = 1.
  const NetworkSpec spec = dense_spec(1, 1);
  Network net = kdep::init_network(spec, 2);
  net.params[0] = 1.7;
  const auto batch = FeatureMatrix::from_rows({{2.5}});
  const ForwardCache cache = kdep::forward(net, batch);
  const auto ones = FeatureMatrix::from_rows({{1.0}});
  kdep::OutputGrads og;
  og.d_features = &ones;
  const std::vector<double> grads = kdep::backward(net, cache, og);
  EXPECT_DOUBLE_EQ(grads[0], 2.5);
  EXPECT_DOUBLE_EQ(grads[1], 1.0);
}

TEST(BackwardTest, LogitGradShapeChecked) {
  const NetworkSpec spec = dense_spec(2, 2);
  const Network net = kdep::init_network(spec, 3);
  const FeatureMatrix batch(1, 2, 1.0);
  const ForwardCache cache = kdep::forward(net, batch);
  const FeatureMatrix bad(1, 2, 0.0);
  kdep::OutputGrads og;
  og.d_logits = &bad;  // no head in this spec
  EXPECT_THROW(kdep::backward(net, cache, og), kdep::ShapeError);
}

namespace {

// Squared-norm losses over features/logits keep the FD oracle exact
// enough for tight tolerances.
double feature_sq_loss(const FeatureMatrix& features, const FeatureMatrix*,
                       FeatureMatrix* d_features, FeatureMatrix*) {
  double acc = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < features.cols(); ++j) {
      acc += features(i, j) * features(i, j);
      if (d_features) (*d_features)(i, j) = 2.0 * features(i, j);
    }
  }
  return acc;
}

double mixed_loss(const FeatureMatrix& features, const FeatureMatrix* logits,
                  FeatureMatrix* d_features, FeatureMatrix* d_logits) {
  double acc = feature_sq_loss(features, nullptr, d_features, nullptr);
  if (logits) {
    for (std::size_t i = 0; i < logits->rows(); ++i) {
      for (std::size_t j = 0; j < logits->cols(); ++j) {
        acc += 0.5 * std::tanh((*logits)(i, j));
        if (d_logits) {
          const double t = std::tanh((*logits)(i, j));
          (*d_logits)(i, j) = 0.5 * (1.0 - t * t);
        }
      }
    }
  }
  return acc;
}

}  // namespace

TEST(GradCheckTest, EveryLayerKindInIsolation) {
  struct Case {
    NetworkSpec spec;
    std::size_t batch_width;
  };
  std::vector<Case> cases;
  cases.push_back({dense_spec(3, 4), 3});

  NetworkSpec relu;
  relu.input = TensorShape::vec(4);
  relu.layers = {{LayerKind::Dense, 4, 4}, {LayerKind::Relu, 0, 0}};
  relu.tap_index = 0;
  cases.push_back({relu, 4});

  NetworkSpec conv;
  conv.input = TensorShape::img(4, 4, 2);
  conv.layers = {{LayerKind::Conv3x3, 2, 3}, {LayerKind::Gap, 0, 0}};
  conv.tap_index = 1;
  cases.push_back({conv, 4 * 4 * 2});

  NetworkSpec head;
  head.input = TensorShape::vec(3);
  head.layers = {{LayerKind::Dense, 3, 3}, {LayerKind::LinearHead, 3, 2}};
  head.tap_index = 0;
  cases.push_back({head, 3});

  std::uint64_t seed = 400;
  for (const Case& c : cases) {
    const Network net = kdep::init_network(c.spec, seed);
    const FeatureMatrix batch = oracle::random_matrix(3, c.batch_width, seed + 1);
    const kdep::GradCheckReport report =
        kdep::grad_check(net, mixed_loss, batch, 1e-4);
    EXPECT_TRUE(report.pass) << "max rel error " << report.max_rel_error
                             << " at param " << report.worst_param;
    seed += 2;
  }
}

TEST(GradCheckTest, ComposedConvNet) {
  const NetworkSpec spec = conv_spec(5, 5, 2, 4, 3);
  const Network net = kdep::init_network(spec, 777);
  const FeatureMatrix batch = oracle::random_matrix(2, 5 * 5 * 2, 778);
  const kdep::GradCheckReport report =
      kdep::grad_check(net, mixed_loss, batch, 1e-4);
  EXPECT_TRUE(report.pass) << "max rel error " << report.max_rel_error;
}

TEST(GradCheckTest, LinearModelQuadraticLossIsExact) {
  const NetworkSpec spec = dense_spec(3, 2);
  const Network net = kdep::init_network(spec, 31);
  const FeatureMatrix batch = oracle::random_matrix(4, 3, 32);
  const kdep::GradCheckReport report =
      kdep::grad_check(net, feature_sq_loss, batch, 1e-9);
  EXPECT_TRUE(report.pass) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-10);
}

TEST(GradCheckTest, ImpossibleToleranceFailsWithWorstOffender) {
  const NetworkSpec spec = mlp_spec(3, 4, 3, 2);
  const Network net = kdep::init_network(spec, 61);
  const FeatureMatrix batch = oracle::random_matrix(3, 3, 62);
  const kdep::GradCheckReport report =
      kdep::grad_check(net, mixed_loss, batch, 0.0);
  EXPECT_FALSE(report.pass);
  EXPECT_LT(report.worst_param, net.params.size());
}

TEST(GradCheckTest, ReluKinkInputsAreNudged) {
  // Mid-network ReLU whose input is exactly 0, with the loss downstream
  // of it, so the finite difference would straddle the kink if unnudged.
  NetworkSpec spec;
  spec.input = TensorShape::vec(2);
  spec.layers = {{LayerKind::Dense, 2, 2},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::Dense, 2, 2}};
  spec.tap_index = 2;
  Network net = kdep::init_network(spec, 71);
  net.params[0] = 1.0;
  net.params[1] = 0.0;
  net.params[2] = 0.0;
  net.params[3] = 1.0;
  net.params[4] = 0.0;
  net.params[5] = 0.0;
  // Identity first layer, zero input: the ReLU sits exactly on its kink.
  const FeatureMatrix batch(1, 2, 0.0);
  const kdep::GradCheckReport report =
      kdep::grad_check(net, feature_sq_loss, batch, 1e-4);
  EXPECT_TRUE(report.nudged_inputs);
  EXPECT_TRUE(report.pass) << report.max_rel_error;
}

TEST(GradCheckTest, BothDistillationLossesThroughTwoLayerNet) {
  // The two training losses composed with a dense+relu+dense+head net.
  const NetworkSpec spec = mlp_spec(4, 6, 3, 4);
  const Network net = kdep::init_network(spec, 81);
  const FeatureMatrix batch = oracle::random_matrix(5, 4, 82);
  const FeatureMatrix targets = oracle::random_matrix(5, 3, 83);
  const FeatureMatrix teacher_logits = oracle::random_matrix(5, 4, 84);

  const auto kdep_fn = [&](const FeatureMatrix& features, const FeatureMatrix*,
                           FeatureMatrix* d_features,
                           FeatureMatrix*) -> double {
    const kdep::LossValue lv = kdep::kdep_loss(features, targets, 2.0);
    if (d_features) *d_features = lv.grads;
    return lv.loss;
  };
  const kdep::GradCheckReport kdep_report =
      kdep::grad_check(net, kdep_fn, batch, 1e-4);
  EXPECT_TRUE(kdep_report.pass) << kdep_report.max_rel_error;

  const auto logits_fn = [&](const FeatureMatrix&, const FeatureMatrix* logits,
                             FeatureMatrix*, FeatureMatrix* d_logits) -> double {
    const kdep::LossValue lv = kdep::logits_kd_loss(*logits, teacher_logits, 2.5);
    if (d_logits) *d_logits = lv.grads;
    return lv.loss;
  };
  const kdep::GradCheckReport logits_report =
      kdep::grad_check(net, logits_fn, batch, 1e-4);
  EXPECT_TRUE(logits_report.pass) << logits_report.max_rel_error;
}

TEST(NetworkSerializationTest, RoundTripPreservesForward) {
  const NetworkSpec spec = mlp_spec(5, 7, 4, 3);
  const Network net = kdep::init_network(spec, 91);
  const std::string bytes = kdep::serialize_container(kdep::to_container(net));
  const Network back = kdep::network_from_container(kdep::parse_container(bytes));
  EXPECT_EQ(back.params, net.params);
  const FeatureMatrix batch = oracle::random_matrix(3, 5, 92);
  EXPECT_TRUE(kdep::forward(net, batch).logits == kdep::forward(back, batch).logits);
}
