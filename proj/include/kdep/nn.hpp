#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kdep/container.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"
#include "kdep/rng.hpp"

namespace kdep {

// Minimal differentiable stack with manual backpropagation. Exactly one
// layer is designated the feature tap; its output is the pre-activation
// penultimate feature the distillation loss lands on. Only a suffix of
// [relu][linear_head] may follow the tap, so the tap always sits at the
// boundary before the final ReLU-or-head.

enum class LayerKind : std::int64_t {
  Dense = 0,
  Conv3x3 = 1,
  Relu = 2,
  Gap = 3,
  LinearHead = 4,
};

struct LayerSpec {
  LayerKind kind;
  std::size_t a = 0;  // dense/head: in width; conv: in channels
  std::size_t b = 0;  // dense: out width; conv: out channels; head: classes
};

// Shape flowing between layers: a flat vector or an image tensor stored
// row-major as (y, x, channel).
struct TensorShape {
  bool image = false;
  std::size_t dim = 0;
  std::size_t h = 0, w = 0, ch = 0;

  static TensorShape vec(std::size_t d) { return {false, d, 0, 0, 0}; }
  static TensorShape img(std::size_t h, std::size_t w, std::size_t ch) {
    return {true, h * w * ch, h, w, ch};
  }
  std::size_t flat() const { return image ? h * w * ch : dim; }
  bool operator==(const TensorShape&) const = default;
};

struct NetworkSpec {
  TensorShape input;
  std::vector<LayerSpec> layers;
  std::size_t tap_index = 0;  // layer whose output is the feature
};

namespace detail {

inline std::size_t layer_param_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Dense:
    case LayerKind::LinearHead:
      return l.a * l.b + l.b;
    case LayerKind::Conv3x3:
      return l.b * l.a * 9 + l.b;
    case LayerKind::Relu:
    case LayerKind::Gap:
      return 0;
  }
  return 0;
}

inline std::size_t layer_fan_in(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Dense:
    case LayerKind::LinearHead:
      return l.a;
    case LayerKind::Conv3x3:
      return l.a * 9;
    default:
      return 0;
  }
}

}  // namespace detail

// Validates the layer sequence and returns the shape after each layer
// (boundaries[0] is the input shape).
inline std::vector<TensorShape> boundary_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw SpecError("network needs at least one layer");
  std::vector<TensorShape> shapes;
  shapes.push_back(spec.input);
  for (const LayerSpec& l : spec.layers) {
    const TensorShape& in = shapes.back();
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::LinearHead:
        if (in.image) {
          throw SpecError("dense/head layer needs a vector input (add gap)");
        }
        if (in.dim != l.a) {
          throw SpecError("dense/head in-width " + std::to_string(l.a) +
                          " does not match incoming " + std::to_string(in.dim));
        }
        shapes.push_back(TensorShape::vec(l.b));
        break;
      case LayerKind::Conv3x3:
        if (!in.image) throw SpecError("conv layer needs an image input");
        if (in.ch != l.a) {
          throw SpecError("conv in-channels mismatch");
        }
        shapes.push_back(TensorShape::img(in.h, in.w, l.b));
        break;
      case LayerKind::Relu:
        shapes.push_back(in);
        break;
      case LayerKind::Gap:
        if (!in.image) throw SpecError("gap needs an image input");
        shapes.push_back(TensorShape::vec(in.ch));
        break;
    }
  }
  // Tap checks: output must be a vector and only [relu][head] may follow.
  if (spec.tap_index >= spec.layers.size()) {
    throw SpecError("tap_index out of range");
  }
  if (shapes[spec.tap_index + 1].image) {
    throw SpecError("feature tap must produce a vector");
  }
  bool head_seen = false;
  for (std::size_t i = spec.tap_index + 1; i < spec.layers.size(); ++i) {
    const LayerKind k = spec.layers[i].kind;
    if (head_seen || (k != LayerKind::Relu && k != LayerKind::LinearHead)) {
      throw SpecError("only relu and a final linear_head may follow the tap");
    }
    if (k == LayerKind::LinearHead) head_seen = true;
  }
  return shapes;
}

inline bool spec_has_head(const NetworkSpec& spec) {
  return !spec.layers.empty() &&
         spec.layers.back().kind == LayerKind::LinearHead;
}

struct Network {
  NetworkSpec spec;
  std::vector<double> params;
  std::uint64_t rng_seed = 0;
  std::vector<std::size_t> offsets;  // per-layer offset into params

  std::size_t param_count() const { return params.size(); }
};

// He initialization: weights ~ Normal(0, 2/fan_in), biases exactly zero.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  boundary_shapes(spec);  // validates
  Network net;
  net.spec = spec;
  net.rng_seed = seed;
  std::size_t total = 0;
  for (const LayerSpec& l : spec.layers) {
    net.offsets.push_back(total);
    total += detail::layer_param_count(l);
  }
  net.params.assign(total, 0.0);
  SplitMix64 rng(seed);
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const std::size_t count = detail::layer_param_count(l);
    if (count == 0) continue;
    const std::size_t fan_in = detail::layer_fan_in(l);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    const std::size_t weights = count - l.b;  // biases stay zero
    double* p = net.params.data() + net.offsets[li];
    for (std::size_t i = 0; i < weights; ++i) {
      p[i] = std_dev * rng.next_normal();
    }
  }
  return net;
}

struct ForwardCache {
  std::vector<FeatureMatrix> acts;  // acts[0] = input, acts[i+1] = layer i out
  FeatureMatrix features;           // tap output, batch x D
  bool has_logits = false;
  FeatureMatrix logits;
};

namespace detail {

// Weight layout -- dense/head: w[in][out] row-major then bias[out];
// conv3x3: w[oc][ic][ky][kx] then bias[oc]. Image tensors index as
// (y * w + x) * ch + c. Convolutions use stride 1 and zero padding 1.

inline void dense_forward(const LayerSpec& l, const double* p,
                          const FeatureMatrix& in, FeatureMatrix& out) {
  const double* bias = p + l.a * l.b;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t o = 0; o < l.b; ++o) out(r, o) = bias[o];
    for (std::size_t i = 0; i < l.a; ++i) {
      const double x = in(r, i);
      if (x == 0.0) continue;
      const double* wrow = p + i * l.b;
      for (std::size_t o = 0; o < l.b; ++o) out(r, o) += x * wrow[o];
    }
  }
}

inline void dense_backward(const LayerSpec& l, const double* p,
                           const FeatureMatrix& in, const FeatureMatrix& gout,
                           double* pgrad, FeatureMatrix& gin) {
  double* bias_grad = pgrad + l.a * l.b;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t o = 0; o < l.b; ++o) bias_grad[o] += gout(r, o);
    for (std::size_t i = 0; i < l.a; ++i) {
      const double x = in(r, i);
      const double* wrow = p + i * l.b;
      double* grow = pgrad + i * l.b;
      double acc = 0.0;
      for (std::size_t o = 0; o < l.b; ++o) {
        grow[o] += x * gout(r, o);
        acc += wrow[o] * gout(r, o);
      }
      gin(r, i) = acc;
    }
  }
}

inline void conv3x3_forward(const LayerSpec& l, const TensorShape& in_shape,
                            const double* p, const FeatureMatrix& in,
                            FeatureMatrix& out) {
  const std::size_t h = in_shape.h, w = in_shape.w;
  const std::size_t ci = l.a, co = l.b;
  const double* bias = p + co * ci * 9;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const double* x = in.row(r).data();
    double* y = out.row(r).data();
    for (std::size_t py = 0; py < h; ++py) {
      for (std::size_t px = 0; px < w; ++px) {
        for (std::size_t oc = 0; oc < co; ++oc) {
          double acc = bias[oc];
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = static_cast<int>(py) + ky - 1;
            if (sy < 0 || sy >= static_cast<int>(h)) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = static_cast<int>(px) + kx - 1;
              if (sx < 0 || sx >= static_cast<int>(w)) continue;
              const double* xpix =
                  x + (static_cast<std::size_t>(sy) * w +
                       static_cast<std::size_t>(sx)) * ci;
              const double* kker =
                  p + ((oc * ci) * 9 + static_cast<std::size_t>(ky * 3 + kx));
              for (std::size_t ic = 0; ic < ci; ++ic) {
                acc += xpix[ic] * kker[ic * 9];
              }
            }
          }
          y[(py * w + px) * co + oc] = acc;
        }
      }
    }
  }
}

inline void conv3x3_backward(const LayerSpec& l, const TensorShape& in_shape,
                             const double* p, const FeatureMatrix& in,
                             const FeatureMatrix& gout, double* pgrad,
                             FeatureMatrix& gin) {
  const std::size_t h = in_shape.h, w = in_shape.w;
  const std::size_t ci = l.a, co = l.b;
  double* bias_grad = pgrad + co * ci * 9;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const double* x = in.row(r).data();
    const double* gy = gout.row(r).data();
    double* gx = gin.row(r).data();
    for (std::size_t py = 0; py < h; ++py) {
      for (std::size_t px = 0; px < w; ++px) {
        for (std::size_t oc = 0; oc < co; ++oc) {
          const double g = gy[(py * w + px) * co + oc];
          if (g == 0.0) continue;
          bias_grad[oc] += g;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = static_cast<int>(py) + ky - 1;
            if (sy < 0 || sy >= static_cast<int>(h)) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = static_cast<int>(px) + kx - 1;
              if (sx < 0 || sx >= static_cast<int>(w)) continue;
              const std::size_t pix =
                  (static_cast<std::size_t>(sy) * w +
                   static_cast<std::size_t>(sx)) * ci;
              const std::size_t koff = (oc * ci) * 9 +
                                       static_cast<std::size_t>(ky * 3 + kx);
              for (std::size_t ic = 0; ic < ci; ++ic) {
                pgrad[koff + ic * 9] += x[pix + ic] * g;
                gx[pix + ic] += p[koff + ic * 9] * g;
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

inline ForwardCache forward(const Network& net, const FeatureMatrix& batch) {
  const std::vector<TensorShape> shapes = boundary_shapes(net.spec);
  if (batch.cols() != shapes[0].flat()) {
    throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                     " does not match input shape " +
                     std::to_string(shapes[0].flat()));
  }
  ForwardCache cache;
  cache.acts.reserve(net.spec.layers.size() + 1);
  cache.acts.push_back(batch);
  for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
    const LayerSpec& l = net.spec.layers[li];
    const FeatureMatrix& in = cache.acts.back();
    const TensorShape& in_shape = shapes[li];
    FeatureMatrix out(batch.rows(), shapes[li + 1].flat());
    const double* p = net.params.data() + net.offsets[li];
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::LinearHead:
        detail::dense_forward(l, p, in, out);
        break;
      case LayerKind::Conv3x3:
        detail::conv3x3_forward(l, in_shape, p, in, out);
        break;
      case LayerKind::Relu:
        for (std::size_t i = 0; i < in.rows(); ++i) {
          for (std::size_t j = 0; j < in.cols(); ++j) {
            out(i, j) = in(i, j) > 0.0 ? in(i, j) : 0.0;
          }
        }
        break;
      case LayerKind::Gap: {
        const std::size_t area = in_shape.h * in_shape.w;
        const std::size_t ch = in_shape.ch;
        for (std::size_t r = 0; r < in.rows(); ++r) {
          for (std::size_t c = 0; c < ch; ++c) out(r, c) = 0.0;
          for (std::size_t pix = 0; pix < area; ++pix) {
            for (std::size_t c = 0; c < ch; ++c) {
              out(r, c) += in(r, pix * ch + c);
            }
          }
          for (std::size_t c = 0; c < ch; ++c) {
            out(r, c) /= static_cast<double>(area);
          }
        }
        break;
      }
    }
    cache.acts.push_back(std::move(out));
  }
  cache.features = cache.acts[net.spec.tap_index + 1];
  if (spec_has_head(net.spec)) {
    cache.has_logits = true;
    cache.logits = cache.acts.back();
  }
  return cache;
}

// Gradients arriving from the losses. Either pointer may be null; feature
// gradients are injected at the tap, logit gradients at the head output.
struct OutputGrads {
  const FeatureMatrix* d_features = nullptr;
  const FeatureMatrix* d_logits = nullptr;
};

inline std::vector<double> backward(const Network& net,
                                    const ForwardCache& cache,
                                    const OutputGrads& grads) {
  const std::vector<TensorShape> shapes = boundary_shapes(net.spec);
  const std::size_t batch = cache.acts[0].rows();
  const std::size_t n_layers = net.spec.layers.size();
  if (grads.d_logits && !cache.has_logits) {
    throw ShapeError("backward: logit gradients supplied but spec has no head");
  }
  if (grads.d_logits && (grads.d_logits->rows() != batch ||
                         grads.d_logits->cols() != cache.logits.cols())) {
    throw ShapeError("backward: logit gradient shape mismatch");
  }
  if (grads.d_features && (grads.d_features->rows() != batch ||
                           grads.d_features->cols() != cache.features.cols())) {
    throw ShapeError("backward: feature gradient shape mismatch");
  }

  std::vector<double> pgrads(net.params.size(), 0.0);
  FeatureMatrix g(batch, shapes[n_layers].flat(), 0.0);
  if (grads.d_logits) g = *grads.d_logits;

  for (std::size_t li = n_layers; li-- > 0;) {
    if (li == net.spec.tap_index && grads.d_features) {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          g(r, c) += (*grads.d_features)(r, c);
        }
      }
    }
    const LayerSpec& l = net.spec.layers[li];
    const FeatureMatrix& in = cache.acts[li];
    const TensorShape& in_shape = shapes[li];
    FeatureMatrix gin(batch, in_shape.flat(), 0.0);
    const double* p = net.params.data() + net.offsets[li];
    double* pg = pgrads.data() + net.offsets[li];
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::LinearHead:
        detail::dense_backward(l, p, in, g, pg, gin);
        break;
      case LayerKind::Conv3x3:
        detail::conv3x3_backward(l, in_shape, p, in, g, pg, gin);
        break;
      case LayerKind::Relu:
        // Subgradient at exactly 0 is defined as 0.
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t c = 0; c < in.cols(); ++c) {
            gin(r, c) = in(r, c) > 0.0 ? g(r, c) : 0.0;
          }
        }
        break;
      case LayerKind::Gap: {
        const std::size_t area = in_shape.h * in_shape.w;
        const std::size_t ch = in_shape.ch;
        const double inv = 1.0 / static_cast<double>(area);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t pix = 0; pix < area; ++pix) {
            for (std::size_t c = 0; c < ch; ++c) {
              gin(r, pix * ch + c) = g(r, c) * inv;
            }
          }
        }
        break;
      }
    }
    g = std::move(gin);
  }
  return pgrads;
}

// --- gradient checking ------------------------------------------------------

// Loss hook for grad_check: sees the tapped features and (if present) the
// logits, returns the scalar loss and fills the gradients it uses.
using LossFn = std::function<double(const FeatureMatrix& features,
                                    const FeatureMatrix* logits,
                                    FeatureMatrix* d_features,
                                    FeatureMatrix* d_logits)>;

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  bool nudged_inputs = false;  // batch was shifted off a ReLU kink
};

inline GradCheckReport grad_check(const Network& net, const LossFn& loss_fn,
                                  const FeatureMatrix& batch, double tol) {
  // FD across the ReLU kink is meaningless, so a batch that puts any ReLU
  // input exactly at 0 is nudged by +-1e-3 before checking.
  auto has_relu_zero = [&](const FeatureMatrix& b) {
    const ForwardCache cache = forward(net, b);
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
      if (net.spec.layers[li].kind != LayerKind::Relu) continue;
      const FeatureMatrix& in = cache.acts[li];
      for (std::size_t r = 0; r < in.rows(); ++r) {
        for (std::size_t c = 0; c < in.cols(); ++c) {
          if (in(r, c) == 0.0) return true;
        }
      }
    }
    return false;
  };

  FeatureMatrix checked = batch;
  GradCheckReport report;
  if (has_relu_zero(checked)) {
    report.nudged_inputs = true;
    for (double delta : {1e-3, -1e-3}) {
      FeatureMatrix shifted = batch;
      for (std::size_t r = 0; r < shifted.rows(); ++r) {
        for (std::size_t c = 0; c < shifted.cols(); ++c) {
          shifted(r, c) += delta;
        }
      }
      if (!has_relu_zero(shifted)) {
        checked = std::move(shifted);
        break;
      }
    }
  }

  auto eval = [&](const Network& n, FeatureMatrix* d_feat,
                  FeatureMatrix* d_log) {
    const ForwardCache cache = forward(n, checked);
    return loss_fn(cache.features, cache.has_logits ? &cache.logits : nullptr,
                   d_feat, d_log);
  };

  FeatureMatrix d_features(checked.rows(),
                           boundary_shapes(net.spec)[net.spec.tap_index + 1].flat(),
                           0.0);
  FeatureMatrix d_logits;
  FeatureMatrix* d_logits_ptr = nullptr;
  if (spec_has_head(net.spec)) {
    d_logits = FeatureMatrix(checked.rows(), net.spec.layers.back().b, 0.0);
    d_logits_ptr = &d_logits;
  }
  eval(net, &d_features, d_logits_ptr);
  const ForwardCache cache = forward(net, checked);
  OutputGrads og;
  og.d_features = &d_features;
  og.d_logits = d_logits_ptr;
  const std::vector<double> analytic = backward(net, cache, og);

  Network probe = net;
  report.pass = true;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const double theta = net.params[i];
    const double h = 1e-5 * std::max(1.0, std::fabs(theta));
    probe.params[i] = theta + h;
    const double lp = eval(probe, nullptr, nullptr);
    probe.params[i] = theta - h;
    const double lm = eval(probe, nullptr, nullptr);
    probe.params[i] = theta;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::fabs(analytic[i] - fd) /
                       std::max(1e-8, std::fabs(analytic[i]) + std::fabs(fd));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = i;
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

// --- serialization ----------------------------------------------------------

inline TensorContainer to_container(const Network& net) {
  TensorContainer c;
  std::vector<std::int64_t> input = {
      net.spec.input.image ? 1 : 0,
      static_cast<std::int64_t>(net.spec.input.image ? net.spec.input.h
                                                     : net.spec.input.dim),
      static_cast<std::int64_t>(net.spec.input.w),
      static_cast<std::int64_t>(net.spec.input.ch)};
  c.sections.push_back(make_i64_section("input", {4}, input));
  std::vector<std::int64_t> layers;
  for (const LayerSpec& l : net.spec.layers) {
    layers.push_back(static_cast<std::int64_t>(l.kind));
    layers.push_back(static_cast<std::int64_t>(l.a));
    layers.push_back(static_cast<std::int64_t>(l.b));
  }
  c.sections.push_back(
      make_i64_section("layers", {net.spec.layers.size(), 3}, layers));
  c.sections.push_back(
      scalar_i64_section("tap_index", static_cast<std::int64_t>(net.spec.tap_index)));
  c.sections.push_back(make_f64_section("params", {net.params.size()}, net.params));
  c.sections.push_back(
      scalar_i64_section("rng_seed", static_cast<std::int64_t>(net.rng_seed)));
  return c;
}

inline Network network_from_container(const TensorContainer& c) {
  NetworkSpec spec;
  const auto& input = c.require("input").i64;
  if (input.size() != 4) throw FormatError("input section must have 4 entries", 0);
  if (input[0] != 0) {
    spec.input = TensorShape::img(static_cast<std::size_t>(input[1]),
                                  static_cast<std::size_t>(input[2]),
                                  static_cast<std::size_t>(input[3]));
  } else {
    spec.input = TensorShape::vec(static_cast<std::size_t>(input[1]));
  }
  const TensorSection& layers = c.require("layers");
  if (layers.dims.size() != 2 || layers.dims[1] != 3) {
    throw FormatError("layers section must be n x 3", 0);
  }
  for (std::size_t i = 0; i < layers.dims[0]; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(layers.i64[i * 3]);
    l.a = static_cast<std::size_t>(layers.i64[i * 3 + 1]);
    l.b = static_cast<std::size_t>(layers.i64[i * 3 + 2]);
    spec.layers.push_back(l);
  }
  spec.tap_index = static_cast<std::size_t>(section_scalar_i64(c.require("tap_index")));

  Network net;
  net.spec = spec;
  net.rng_seed = static_cast<std::uint64_t>(section_scalar_i64(c.require("rng_seed")));
  net.params = c.require("params").f64;
  std::size_t total = 0;
  for (const LayerSpec& l : spec.layers) {
    net.offsets.push_back(total);
    total += detail::layer_param_count(l);
  }
  if (net.params.size() != total) {
    throw FormatError("params section size does not match spec", 0);
  }
  boundary_shapes(spec);
  return net;
}

}  // namespace kdep
