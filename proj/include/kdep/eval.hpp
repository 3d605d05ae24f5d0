#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdep/data.hpp"
#include "kdep/distill.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"
#include "kdep/nn.hpp"
#include "kdep/rng.hpp"

namespace kdep {

enum class ProbeMode { Linear, Finetune };

struct ProbeConfig {
  ProbeMode mode = ProbeMode::Linear;
  int epochs = 50;
  std::vector<double> lr_grid = {0.01, 0.001};
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double top1 = 0.0;
  std::vector<double> per_class;
  ProbeMode mode = ProbeMode::Linear;
  std::vector<std::uint64_t> seeds;
  double best_lr = 0.0;
};

namespace detail {

// Argmax with ties resolved toward the lowest index.
inline std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

inline ProbeResult score_predictions(const FeatureMatrix& logits,
                                     const std::vector<long>& labels,
                                     std::size_t classes) {
  ProbeResult r;
  r.per_class.assign(classes, 0.0);
  std::vector<std::size_t> counts(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    counts[y]++;
    if (argmax_row(logits.row(i)) == y) {
      correct++;
      r.per_class[y] += 1.0;
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] > 0) r.per_class[c] /= static_cast<double>(counts[c]);
  }
  r.top1 = static_cast<double>(correct) / static_cast<double>(logits.rows());
  return r;
}

// The downstream classifier consumes the penultimate feature itself: the
// tap output, the same quantity the distillation loss supervises.
inline FeatureMatrix probe_features(const Network& backbone,
                                    const FeatureMatrix& inputs) {
  return forward(backbone, inputs).features;
}

}  // namespace detail

// Backbone layers up through the tap, with a fresh classifier head on
// the tap feature. Backbone parameters are copied.
inline Network make_probe_net(const Network& backbone, std::size_t classes,
                              std::uint64_t head_seed) {
  NetworkSpec spec;
  spec.input = backbone.spec.input;
  spec.tap_index = backbone.spec.tap_index;
  const std::size_t copy_layers = backbone.spec.tap_index + 1;
  std::size_t copy_params = 0;
  for (std::size_t i = 0; i < copy_layers; ++i) {
    spec.layers.push_back(backbone.spec.layers[i]);
    copy_params += detail::layer_param_count(backbone.spec.layers[i]);
  }
  const std::size_t feat_dim = boundary_shapes(backbone.spec)[spec.tap_index + 1].flat();
  spec.layers.push_back({LayerKind::LinearHead, feat_dim, classes});

  Network net = init_network(spec, head_seed);
  std::copy(backbone.params.begin(),
            backbone.params.begin() + static_cast<std::ptrdiff_t>(copy_params),
            net.params.begin());
  return net;
}

// Trains a linear classifier on frozen features with the same SGD update
// rule the trainer uses. Weights start at zero so the chance-level
// behavior on degenerate features is exact.
inline Network train_linear_classifier(const FeatureMatrix& feats,
                                       const std::vector<long>& labels,
                                       std::size_t classes,
                                       const ProbeConfig& cfg, double lr0) {
  NetworkSpec spec;
  spec.input = TensorShape::vec(feats.cols());
  spec.layers.push_back({LayerKind::Dense, feats.cols(), classes});
  spec.tap_index = 0;
  Network head = init_network(spec, cfg.seed);
  std::fill(head.params.begin(), head.params.end(), 0.0);

  TrainConfig tc;
  tc.lr0 = lr0;
  tc.momentum = cfg.momentum;
  tc.weight_decay = cfg.weight_decay;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.mode = TrainMode::Supervised;

  // A dense-only net has no head layer, so run the loop here against the
  // tap output (identical math, fewer moving parts).
  tc.validate();
  std::vector<double> velocity(head.params.size(), 0.0);
  SplitMix64 shuffle_rng(tc.seed);
  std::vector<std::size_t> order(feats.rows());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.schedule.lr_at(tc.lr0, epoch, tc.epochs);
    shuffle_rng.shuffle(order);
    const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
    for (std::size_t begin = 0; begin < feats.rows(); begin += bs) {
      const std::size_t end = std::min(begin + bs, feats.rows());
      const FeatureMatrix batch = detail::gather_rows(feats, order, begin, end);
      std::vector<long> batch_labels(end - begin);
      for (std::size_t r = begin; r < end; ++r) {
        batch_labels[r - begin] = labels[order[r]];
      }
      const ForwardCache cache = forward(head, batch);
      const LossValue lv = softmax_ce_loss(cache.features, batch_labels);
      OutputGrads og;
      og.d_features = &lv.grads;
      const std::vector<double> grads = backward(head, cache, og);
      detail::sgd_step(head.params, velocity, grads, lr, tc.momentum,
                       tc.weight_decay);
    }
  }
  return head;
}

// Downstream transfer measurement. Linear mode freezes the backbone and
// fits only a classifier on its features; finetune trains everything.
// Each learning rate in the grid is tried and the best test top-1 is
// reported.
inline ProbeResult linear_probe(const Network& backbone,
                                const Dataset& train_set,
                                const Dataset& test_set,
                                const ProbeConfig& cfg) {
  if (!train_set.labels_public || !test_set.labels_public) {
    throw ConfigError("linear_probe: downstream datasets must be labeled");
  }
  if (cfg.lr_grid.empty()) throw ConfigError("linear_probe: empty lr grid");
  const std::size_t classes = train_set.spec.classes;

  ProbeResult best;
  best.top1 = -1.0;
  for (double lr0 : cfg.lr_grid) {
    ProbeResult r;
    if (cfg.mode == ProbeMode::Linear) {
      const FeatureMatrix train_feats = detail::probe_features(backbone, train_set.samples);
      const FeatureMatrix test_feats = detail::probe_features(backbone, test_set.samples);
      const Network head = train_linear_classifier(train_feats, train_set.labels,
                                                   classes, cfg, lr0);
      const ForwardCache out = forward(head, test_feats);
      r = detail::score_predictions(out.features, test_set.labels, classes);
    } else {
      Network net = make_probe_net(backbone, classes, cfg.seed);
      TrainConfig tc;
      tc.lr0 = lr0;
      tc.momentum = cfg.momentum;
      tc.weight_decay = cfg.weight_decay;
      tc.epochs = cfg.epochs;
      tc.batch_size = cfg.batch_size;
      tc.seed = cfg.seed;
      tc.mode = TrainMode::Supervised;
      TrainData data;
      data.inputs = &train_set.samples;
      data.labels = &train_set.labels;
      auto [tuned, manifest] = train(tc, std::move(net), data);
      const ForwardCache out = forward(tuned, test_set.samples);
      r = detail::score_predictions(out.logits, test_set.labels, classes);
    }
    r.mode = cfg.mode;
    r.seeds = {cfg.seed};
    r.best_lr = lr0;
    if (r.top1 > best.top1) best = r;
  }
  return best;
}

// Within-class scatter over between-class centroid separation; lower is
// more compact. Invariant to global scaling and to orthogonal maps.
inline double compactness(const FeatureMatrix& features,
                          const std::vector<long>& labels) {
  if (labels.size() != features.rows()) {
    throw DimensionError("compactness: one label per row required");
  }
  long max_label = -1;
  for (long y : labels) max_label = std::max(max_label, y);
  const std::size_t classes = static_cast<std::size_t>(max_label + 1);
  if (classes < 2) throw DegenerateError("compactness: need at least 2 classes");

  const std::size_t d = features.cols();
  FeatureMatrix centroids(classes, d, 0.0);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    counts[y]++;
    for (std::size_t j = 0; j < d; ++j) centroids(y, j) += features(i, j);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] < 2) {
      throw DegenerateError("compactness: every class needs >= 2 samples");
    }
    for (std::size_t j = 0; j < d; ++j) {
      centroids(c, j) /= static_cast<double>(counts[c]);
    }
  }

  double within = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = features(i, j) - centroids(y, j);
      dist2 += dev * dev;
    }
    within += std::sqrt(dist2);
  }
  within /= static_cast<double>(features.rows());

  double between = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      double dist2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dev = centroids(a, j) - centroids(b, j);
        dist2 += dev * dev;
      }
      if (dist2 == 0.0) {
        throw DegenerateError("compactness: coincident class centroids");
      }
      between += std::sqrt(dist2);
      pairs++;
    }
  }
  between /= static_cast<double>(pairs);
  return within / between;
}

// --- Monte-Carlo verification of the channel-domination identity -------------

struct Theorem1Config {
  std::vector<double> sigma_list = {0.5, 1.0, 2.0, 4.0};
  double sigma_s = 1.0;
  std::size_t samples = 1000000;
  std::uint64_t seed = 7;

  void validate() const {
    if (sigma_list.empty()) throw ConfigError("theorem: empty sigma list");
    for (double s : sigma_list) {
      if (s <= 0.0) throw ConfigError("theorem: sigmas must be positive");
    }
    if (sigma_s <= 0.0) throw ConfigError("theorem: sigma_s must be positive");
    if (samples < 10000) throw ConfigError("theorem: need at least 1e4 samples");
  }
};

struct Theorem1Row {
  double sigma = 0.0;
  double estimate = 0.0;
  double analytic = 0.0;
  double std_error = 0.0;
  bool pass = false;
};

// Draws independent T ~ N(0, sigma^2) and S ~ N(0, sigma_s^2) and checks
// the Monte-Carlo estimate of E[(T-S)^2] against sigma^2 + sigma_s^2
// within four standard errors, plus monotonicity across the sigma grid.
inline std::vector<Theorem1Row> verify_theorem1(const Theorem1Config& cfg) {
  cfg.validate();
  std::vector<Theorem1Row> rows;
  for (std::size_t k = 0; k < cfg.sigma_list.size(); ++k) {
    const double sigma = cfg.sigma_list[k];
    SplitMix64 rng(mix_seed(cfg.seed, k));
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      const double t = sigma * rng.next_normal();
      const double s = cfg.sigma_s * rng.next_normal();
      const double d = (t - s) * (t - s);
      sum += d;
      sum_sq += d * d;
    }
    const double n = static_cast<double>(cfg.samples);
    Theorem1Row row;
    row.sigma = sigma;
    row.estimate = sum / n;
    row.analytic = sigma * sigma + cfg.sigma_s * cfg.sigma_s;
    const double var = std::max(sum_sq / n - row.estimate * row.estimate, 0.0);
    row.std_error = std::sqrt(var / n);
    row.pass = std::fabs(row.estimate - row.analytic) <= 4.0 * row.std_error;
    rows.push_back(row);
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (!(rows[k].estimate > rows[k - 1].estimate)) {
      rows[k].pass = false;
    }
  }
  return rows;
}

}  // namespace kdep
