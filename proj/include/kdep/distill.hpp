#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <charconv>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "kdep/align.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"
#include "kdep/nn.hpp"
#include "kdep/rng.hpp"
#include "kdep/transform.hpp"

namespace kdep {

// --- losses -----------------------------------------------------------------

struct LossValue {
  double loss = 0.0;
  FeatureMatrix grads;  // d loss / d inputs, same shape as the first argument
};

// Feature regression objective: w * (1/B) * sum_i ||f_i - t_i||^2, summed
// over channels, averaged over the batch.
inline LossValue kdep_loss(const FeatureMatrix& student_feats,
                           const FeatureMatrix& targets, double w) {
  if (student_feats.rows() != targets.rows() ||
      student_feats.cols() != targets.cols()) {
    throw ShapeError("kdep_loss: feature/target shapes differ");
  }
  const double b = static_cast<double>(student_feats.rows());
  LossValue out;
  out.grads = FeatureMatrix(student_feats.rows(), student_feats.cols());
  double acc = 0.0;
  for (std::size_t i = 0; i < student_feats.rows(); ++i) {
    for (std::size_t j = 0; j < student_feats.cols(); ++j) {
      const double diff = student_feats(i, j) - targets(i, j);
      acc += diff * diff;
      out.grads(i, j) = (w * 2.0 / b) * diff;
    }
  }
  out.loss = w * (acc / b);
  return out;
}

namespace detail {

// Row-wise log-softmax, numerically stable.
inline void log_softmax_row(std::span<const double> logits,
                            std::vector<double>& out) {
  const std::size_t c = logits.size();
  out.resize(c);
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits[j] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < c; ++j) out[j] = logits[j] - lse;
}

}  // namespace detail

// Classical response distillation on temperature-softened distributions:
// tau^2 * (1/B) * sum_i KL(softmax(t_i/tau) || softmax(s_i/tau)). No
// ground-truth label term; the distillation corpus is unlabeled.
inline LossValue logits_kd_loss(const FeatureMatrix& student_logits,
                                const FeatureMatrix& teacher_logits,
                                double tau) {
  if (student_logits.rows() != teacher_logits.rows() ||
      student_logits.cols() != teacher_logits.cols()) {
    throw ShapeError("logits_kd_loss: logit shapes differ");
  }
  if (tau <= 0.0) throw ParamError("logits_kd_loss: tau must be positive");
  const std::size_t b = student_logits.rows();
  const std::size_t c = student_logits.cols();
  LossValue out;
  out.grads = FeatureMatrix(b, c);
  std::vector<double> ls, lt, srow(c), trow(c);
  double acc = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      srow[j] = student_logits(i, j) / tau;
      trow[j] = teacher_logits(i, j) / tau;
    }
    detail::log_softmax_row(srow, ls);
    detail::log_softmax_row(trow, lt);
    for (std::size_t j = 0; j < c; ++j) {
      const double pt = std::exp(lt[j]);
      const double ps = std::exp(ls[j]);
      acc += pt * (lt[j] - ls[j]);
      // d/ds of tau^2 * KL / B, with the inner 1/tau from the softened input.
      out.grads(i, j) = tau * (ps - pt) / static_cast<double>(b);
    }
  }
  out.loss = tau * tau * acc / static_cast<double>(b);
  return out;
}

// Mean softmax cross-entropy for the supervised baseline and the probes.
inline LossValue softmax_ce_loss(const FeatureMatrix& logits,
                                 const std::vector<long>& labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_ce_loss: one label per row required");
  }
  const std::size_t b = logits.rows();
  const std::size_t c = logits.cols();
  LossValue out;
  out.grads = FeatureMatrix(b, c);
  std::vector<double> ls;
  double acc = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const long y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ShapeError("softmax_ce_loss: label out of range");
    }
    detail::log_softmax_row(logits.row(i), ls);
    acc -= ls[static_cast<std::size_t>(y)];
    for (std::size_t j = 0; j < c; ++j) {
      out.grads(i, j) = (std::exp(ls[j]) -
                         (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) /
                        static_cast<double>(b);
    }
  }
  out.loss = acc / static_cast<double>(b);
  return out;
}

// --- parametric baseline head -----------------------------------------------

// Learnable linear map D_s -> D_t followed by per-channel normalization
// with learnable scale/shift. Batch statistics during training, running
// averages (momentum 0.9) at evaluation.
struct ParametricHead {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  HeadPosition position = HeadPosition::PreRelu;
  std::vector<double> weight;  // d_in x d_out, row-major
  std::vector<double> bias;    // d_out
  std::vector<double> gamma;   // d_out
  std::vector<double> beta;    // d_out
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  struct Cache {
    FeatureMatrix input;       // head input (B x d_in)
    FeatureMatrix linear_out;  // u = xW + b
    FeatureMatrix normalized;  // x_hat
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
  };

  std::size_t param_count() const { return d_in * d_out + 3 * d_out; }
};

inline ParametricHead init_parametric_head(const ParametricHeadSpec& spec,
                                           std::uint64_t seed) {
  ParametricHead h;
  h.d_in = spec.d_in;
  h.d_out = spec.d_out;
  h.position = spec.position;
  h.weight.assign(h.d_in * h.d_out, 0.0);
  h.bias.assign(h.d_out, 0.0);
  h.gamma.assign(h.d_out, 1.0);
  h.beta.assign(h.d_out, 0.0);
  h.running_mean.assign(h.d_out, 0.0);
  h.running_var.assign(h.d_out, 1.0);
  SplitMix64 rng(seed);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(h.d_in));
  for (double& w : h.weight) w = std_dev * rng.next_normal();
  return h;
}

// What the head consumes: the tap feature as-is (pre-ReLU position) or
// clamped through the ReLU that follows the tap (post-ReLU position).
inline FeatureMatrix head_input_features(const FeatureMatrix& tap_features,
                                         HeadPosition position) {
  if (position == HeadPosition::PreRelu) return tap_features;
  FeatureMatrix out = tap_features;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out(i, j) = std::max(out(i, j), 0.0);
    }
  }
  return out;
}

inline FeatureMatrix head_forward(ParametricHead& head, const FeatureMatrix& x,
                                  bool training, ParametricHead::Cache* cache) {
  if (x.cols() != head.d_in) throw ShapeError("head_forward: width mismatch");
  const std::size_t b = x.rows();
  FeatureMatrix u(b, head.d_out);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t o = 0; o < head.d_out; ++o) u(r, o) = head.bias[o];
    for (std::size_t i = 0; i < head.d_in; ++i) {
      const double xi = x(r, i);
      const double* wrow = head.weight.data() + i * head.d_out;
      for (std::size_t o = 0; o < head.d_out; ++o) u(r, o) += xi * wrow[o];
    }
  }
  std::vector<double> mean(head.d_out, 0.0), var(head.d_out, 0.0);
  if (training) {
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t o = 0; o < head.d_out; ++o) mean[o] += u(r, o);
    }
    for (std::size_t o = 0; o < head.d_out; ++o) mean[o] /= static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t o = 0; o < head.d_out; ++o) {
        const double dev = u(r, o) - mean[o];
        var[o] += dev * dev;
      }
    }
    for (std::size_t o = 0; o < head.d_out; ++o) var[o] /= static_cast<double>(b);
    for (std::size_t o = 0; o < head.d_out; ++o) {
      head.running_mean[o] =
          head.bn_momentum * head.running_mean[o] + (1.0 - head.bn_momentum) * mean[o];
      head.running_var[o] =
          head.bn_momentum * head.running_var[o] + (1.0 - head.bn_momentum) * var[o];
    }
  } else {
    mean = head.running_mean;
    var = head.running_var;
  }
  FeatureMatrix xhat(b, head.d_out);
  FeatureMatrix y(b, head.d_out);
  for (std::size_t o = 0; o < head.d_out; ++o) {
    const double inv = 1.0 / std::sqrt(var[o] + head.bn_eps);
    for (std::size_t r = 0; r < b; ++r) {
      xhat(r, o) = (u(r, o) - mean[o]) * inv;
      y(r, o) = head.gamma[o] * xhat(r, o) + head.beta[o];
    }
  }
  if (cache) {
    cache->input = x;
    cache->linear_out = std::move(u);
    cache->normalized = xhat;
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return y;
}

struct HeadGrads {
  std::vector<double> weight, bias, gamma, beta;
  FeatureMatrix d_input;
};

// Backward through scale/shift, batch normalization, and the linear map.
inline HeadGrads head_backward(const ParametricHead& head,
                               const ParametricHead::Cache& cache,
                               const FeatureMatrix& d_out) {
  const std::size_t b = d_out.rows();
  const std::size_t dn = head.d_out;
  HeadGrads g;
  g.weight.assign(head.d_in * dn, 0.0);
  g.bias.assign(dn, 0.0);
  g.gamma.assign(dn, 0.0);
  g.beta.assign(dn, 0.0);
  g.d_input = FeatureMatrix(b, head.d_in, 0.0);

  FeatureMatrix du(b, dn);
  for (std::size_t o = 0; o < dn; ++o) {
    const double inv = 1.0 / std::sqrt(cache.batch_var[o] + head.bn_eps);
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      const double dy = d_out(r, o);
      g.beta[o] += dy;
      g.gamma[o] += dy * cache.normalized(r, o);
    }
    for (std::size_t r = 0; r < b; ++r) {
      const double dxhat = d_out(r, o) * head.gamma[o];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * cache.normalized(r, o);
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
      const double dxhat = d_out(r, o) * head.gamma[o];
      du(r, o) = inv * (dxhat - inv_b * sum_dxhat -
                        cache.normalized(r, o) * inv_b * sum_dxhat_xhat);
    }
  }
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t i = 0; i < head.d_in; ++i) {
      const double xi = cache.input(r, i);
      double acc = 0.0;
      const double* wrow = head.weight.data() + i * dn;
      double* grow = g.weight.data() + i * dn;
      for (std::size_t o = 0; o < dn; ++o) {
        grow[o] += xi * du(r, o);
        acc += wrow[o] * du(r, o);
      }
      g.d_input(r, i) = acc;
    }
    for (std::size_t o = 0; o < dn; ++o) g.bias[o] += du(r, o);
  }
  return g;
}

// --- training ---------------------------------------------------------------

enum class TrainMode { Kdep, Supervised, LogitsKd, ParametricKdep };

// Step decay: the learning rate drops by `factor` at each 1/phases
// boundary of the epoch budget (default: 10x drops at 1/3 and 2/3).
struct StepDecaySchedule {
  double factor = 0.1;
  int phases = 3;

  double lr_at(double lr0, int epoch, int total_epochs) const {
    int stage = (epoch * phases) / std::max(total_epochs, 1);
    stage = std::min(stage, phases - 1);
    return lr0 * std::pow(factor, stage);
  }
};

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 10;
  int batch_size = 64;
  double loss_weight = 1.0;  // w multiplying the feature loss
  std::uint64_t seed = 1;
  StepDecaySchedule schedule;
  TrainMode mode = TrainMode::Kdep;
  double temperature = 4.0;  // logits KD only

  void validate() const {
    if (lr0 <= 0.0) throw ConfigError("train: lr0 must be positive");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("train: momentum must lie in [0, 1)");
    }
    if (loss_weight <= 0.0) throw ConfigError("train: loss_weight must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (mode == TrainMode::LogitsKd && temperature <= 0.0) {
      throw ConfigError("train: temperature must be positive");
    }
  }
};

struct EpochMetric {
  double mean_loss = 0.0;
  double lr = 0.0;
};

// Complete deterministic record of a run. Everything except the wall
// clock is reproducible from the config and input hashes.
struct RunManifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<EpochMetric> epochs;
  std::vector<std::pair<std::string, std::string>> hashes;
  double wall_clock_seconds = 0.0;
};

// Shortest decimal form that round-trips the exact double; keeps
// manifests byte-stable and readable.
inline std::string format_double(double v) {
  char buf[40];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

inline std::string manifest_text(const RunManifest& m) {
  std::string out = "# kdep run manifest\n[config]\n";
  for (const auto& [k, v] : m.config) out += k + "=" + v + "\n";
  out += "[hashes]\n";
  for (const auto& [k, v] : m.hashes) out += k + "=" + v + "\n";
  out += "[metrics]\nepoch,mean_loss,lr\n";
  for (std::size_t e = 0; e < m.epochs.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(m.epochs[e].mean_loss) +
           "," + format_double(m.epochs[e].lr) + "\n";
  }
  out += "[timing]\nwall_clock_seconds=" + format_double(m.wall_clock_seconds) + "\n";
  return out;
}

// Mode-specific inputs for train(). `inputs` is always required; exactly
// one of the supervision fields must match the mode.
struct TrainData {
  const FeatureMatrix* inputs = nullptr;
  const FeatureMatrix* targets = nullptr;           // kdep: aligned+transformed
  const std::vector<long>* labels = nullptr;        // supervised
  const FeatureMatrix* teacher_logits = nullptr;    // logits KD
  const FeatureMatrix* teacher_features = nullptr;  // parametric: raw D_t
  ParametricHead* head = nullptr;                   // parametric
};

// Precomputes the distillation targets: teacher forward, non-parametric
// alignment, then the fitted statistics transform, row for row.
inline FeatureMatrix precompute_targets(const Network& teacher,
                                        const FeatureMatrix& inputs,
                                        const AlignmentArtifact& artifact,
                                        const TargetTransform& transform) {
  const ForwardCache cache = forward(teacher, inputs);
  if (cache.features.cols() != artifact.d_teacher) {
    throw DimensionError(
        "precompute_targets: teacher tap width does not match artifact");
  }
  return apply_transform(transform, apply_alignment(artifact, cache.features));
}

namespace detail {

inline void sgd_step(std::vector<double>& params, std::vector<double>& velocity,
                     const std::vector<double>& grads, double lr,
                     double momentum, double weight_decay,
                     const std::vector<std::uint8_t>* decay_mask = nullptr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double wd = (decay_mask && !(*decay_mask)[i]) ? 0.0 : weight_decay;
    velocity[i] = momentum * velocity[i] + grads[i] + wd * params[i];
    params[i] -= lr * velocity[i];
  }
}

inline FeatureMatrix gather_rows(const FeatureMatrix& m,
                                 const std::vector<std::size_t>& idx,
                                 std::size_t begin, std::size_t end) {
  FeatureMatrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    const auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r - begin).begin());
  }
  return out;
}

}  // namespace detail

// SGD with momentum over a seeded epoch shuffle:
//   v <- m*v + g + wd*theta;  theta <- theta - lr*v
// The last incomplete batch is kept. Teacher-side artifacts are read-only.
inline std::pair<Network, RunManifest> train(const TrainConfig& config,
                                             Network student,
                                             const TrainData& data) {
  config.validate();
  if (!data.inputs) throw ConfigError("train: inputs missing");
  const std::size_t n = data.inputs->rows();
  switch (config.mode) {
    case TrainMode::Kdep:
      if (!data.targets || data.targets->rows() != n) {
        throw ConfigError("train: kdep mode requires per-sample targets");
      }
      break;
    case TrainMode::Supervised:
      if (!data.labels || data.labels->size() != n) {
        throw ConfigError("train: supervised mode requires labels");
      }
      if (!spec_has_head(student.spec)) {
        throw ConfigError("train: supervised mode requires a head layer");
      }
      break;
    case TrainMode::LogitsKd:
      if (!data.teacher_logits || data.teacher_logits->rows() != n) {
        throw ConfigError("train: logits KD requires teacher logits");
      }
      if (!spec_has_head(student.spec)) {
        throw ConfigError("train: logits KD requires a head layer");
      }
      break;
    case TrainMode::ParametricKdep:
      if (!data.teacher_features || data.teacher_features->rows() != n ||
          !data.head) {
        throw ConfigError(
            "train: parametric mode requires raw teacher features and a head");
      }
      if (data.head->d_out != data.teacher_features->cols()) {
        throw ConfigError("train: head output width must match teacher features");
      }
      break;
  }

  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  std::vector<double> velocity(student.params.size(), 0.0);
  std::vector<double> head_velocity;
  std::vector<std::uint8_t> head_decay_mask;
  std::vector<double> head_params;  // packed W|b|gamma|beta view for the step
  if (config.mode == TrainMode::ParametricKdep) {
    const ParametricHead& h = *data.head;
    head_velocity.assign(h.param_count(), 0.0);
    // Normalization scale/shift are excluded from weight decay.
    head_decay_mask.assign(h.param_count(), 1);
    std::fill(head_decay_mask.begin() +
                  static_cast<std::ptrdiff_t>(h.d_in * h.d_out + h.d_out),
              head_decay_mask.end(), 0);
  }

  SplitMix64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.lr_at(config.lr0, epoch, config.epochs);
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const std::size_t end = std::min(begin + bs, n);
      const FeatureMatrix batch = detail::gather_rows(*data.inputs, order, begin, end);
      const ForwardCache cache = forward(student, batch);

      LossValue lv;
      OutputGrads og;
      HeadGrads hg;
      switch (config.mode) {
        case TrainMode::Kdep: {
          const FeatureMatrix targets =
              detail::gather_rows(*data.targets, order, begin, end);
          lv = kdep_loss(cache.features, targets, config.loss_weight);
          og.d_features = &lv.grads;
          break;
        }
        case TrainMode::Supervised: {
          std::vector<long> labels(end - begin);
          for (std::size_t r = begin; r < end; ++r) {
            labels[r - begin] = (*data.labels)[order[r]];
          }
          lv = softmax_ce_loss(cache.logits, labels);
          og.d_logits = &lv.grads;
          break;
        }
        case TrainMode::LogitsKd: {
          const FeatureMatrix tlogits =
              detail::gather_rows(*data.teacher_logits, order, begin, end);
          lv = logits_kd_loss(cache.logits, tlogits, config.temperature);
          og.d_logits = &lv.grads;
          break;
        }
        case TrainMode::ParametricKdep: {
          ParametricHead& head = *data.head;
          FeatureMatrix head_in = head_input_features(cache.features, head.position);
          ParametricHead::Cache hcache;
          const FeatureMatrix pred = head_forward(head, head_in, true, &hcache);
          const FeatureMatrix tfeats =
              detail::gather_rows(*data.teacher_features, order, begin, end);
          lv = kdep_loss(pred, tfeats, config.loss_weight);
          hg = head_backward(head, hcache, lv.grads);
          if (head.position == HeadPosition::PostRelu) {
            for (std::size_t r = 0; r < hg.d_input.rows(); ++r) {
              for (std::size_t c = 0; c < hg.d_input.cols(); ++c) {
                if (cache.features(r, c) <= 0.0) hg.d_input(r, c) = 0.0;
              }
            }
          }
          lv.grads = std::move(hg.d_input);
          og.d_features = &lv.grads;
          break;
        }
      }

      const std::vector<double> grads = backward(student, cache, og);
      detail::sgd_step(student.params, velocity, grads, lr, config.momentum,
                       config.weight_decay);
      if (config.mode == TrainMode::ParametricKdep) {
        ParametricHead& head = *data.head;
        head_params.clear();
        head_params.insert(head_params.end(), head.weight.begin(), head.weight.end());
        head_params.insert(head_params.end(), head.bias.begin(), head.bias.end());
        head_params.insert(head_params.end(), head.gamma.begin(), head.gamma.end());
        head_params.insert(head_params.end(), head.beta.begin(), head.beta.end());
        std::vector<double> head_grads;
        head_grads.reserve(head_params.size());
        head_grads.insert(head_grads.end(), hg.weight.begin(), hg.weight.end());
        head_grads.insert(head_grads.end(), hg.bias.begin(), hg.bias.end());
        head_grads.insert(head_grads.end(), hg.gamma.begin(), hg.gamma.end());
        head_grads.insert(head_grads.end(), hg.beta.begin(), hg.beta.end());
        detail::sgd_step(head_params, head_velocity, head_grads, lr,
                         config.momentum, config.weight_decay, &head_decay_mask);
        auto it = head_params.begin();
        std::copy(it, it + static_cast<std::ptrdiff_t>(head.weight.size()),
                  head.weight.begin());
        it += static_cast<std::ptrdiff_t>(head.weight.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(head.bias.size()),
                  head.bias.begin());
        it += static_cast<std::ptrdiff_t>(head.bias.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(head.gamma.size()),
                  head.gamma.begin());
        it += static_cast<std::ptrdiff_t>(head.gamma.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(head.beta.size()),
                  head.beta.begin());
      }
      loss_sum += lv.loss * static_cast<double>(end - begin);
    }
    manifest.epochs.push_back({loss_sum / static_cast<double>(n), lr});
  }

  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(student), std::move(manifest)};
}

// --- head serialization ------------------------------------------------------

inline TensorContainer to_container(const ParametricHead& h) {
  TensorContainer c;
  c.sections.push_back(make_i64_section(
      "head", {3},
      {static_cast<std::int64_t>(h.d_in), static_cast<std::int64_t>(h.d_out),
       static_cast<std::int64_t>(h.position)}));
  c.sections.push_back(make_f64_section("weight", {h.d_in, h.d_out}, h.weight));
  c.sections.push_back(vector_section("bias", h.bias));
  c.sections.push_back(vector_section("gamma", h.gamma));
  c.sections.push_back(vector_section("beta", h.beta));
  c.sections.push_back(vector_section("running_mean", h.running_mean));
  c.sections.push_back(vector_section("running_var", h.running_var));
  return c;
}

}  // namespace kdep
