#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kdep/container.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"

namespace kdep {

enum class TransformKind : std::int64_t { Identity = 0, SN = 1, SM = 2, PTS = 3 };

constexpr double kStdFloor = 1e-12;

// A fitted statistics correction applied to aligned teacher features
// before they become regression targets. Fitted offline on the full
// distillation set and frozen; never applied to student features.
struct TargetTransform {
  TransformKind kind = TransformKind::Identity;
  std::vector<double> stds;         // SN
  std::vector<double> source_stds;  // SM
  std::vector<double> target_stds;  // SM
  double temperature = 0.1;         // PTS
  double exponent = 3.0;            // PTS
};

// Power temperature scaling: sign(f) * |f/T|^(1/n). Odd, globally
// nondecreasing, compresses large magnitudes and expands small ones.
inline double pts_value(double f, double temperature, double exponent) {
  if (f == 0.0) return 0.0;
  const double mag = std::pow(std::fabs(f) / temperature, 1.0 / exponent);
  return f > 0.0 ? mag : -mag;
}

inline FeatureMatrix pts(const FeatureMatrix& values, double temperature,
                         double exponent) {
  if (temperature <= 0.0) throw ParamError("pts: T must be positive");
  if (exponent < 1.0) throw ParamError("pts: n must be at least 1");
  FeatureMatrix out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      out(i, j) = pts_value(values(i, j), temperature, exponent);
    }
  }
  return out;
}

// Divide channel j by max(stds[j], floor).
inline FeatureMatrix scale_normalize(const FeatureMatrix& values,
                                     const std::vector<double>& stds) {
  if (stds.size() != values.cols()) {
    throw DimensionError("scale_normalize: stds length must match width");
  }
  FeatureMatrix out(values.rows(), values.cols());
  for (std::size_t j = 0; j < values.cols(); ++j) {
    const double inv = 1.0 / std::max(stds[j], kStdFloor);
    for (std::size_t i = 0; i < values.rows(); ++i) {
      out(i, j) = values(i, j) * inv;
    }
  }
  return out;
}

// Rescale channel j by target_stds[j] / max(source_stds[j], floor).
inline FeatureMatrix std_match(const FeatureMatrix& values,
                               const std::vector<double>& source_stds,
                               const std::vector<double>& target_stds) {
  if (source_stds.size() != values.cols() ||
      target_stds.size() != values.cols()) {
    throw DimensionError("std_match: std vectors must match width");
  }
  FeatureMatrix out(values.rows(), values.cols());
  for (std::size_t j = 0; j < values.cols(); ++j) {
    const double scale = target_stds[j] / std::max(source_stds[j], kStdFloor);
    for (std::size_t i = 0; i < values.rows(); ++i) {
      out(i, j) = values(i, j) * scale;
    }
  }
  return out;
}

// Fits a transform on the aligned teacher features. SM additionally needs
// the channel statistics of the raw (pre-projection) teacher features: the
// targets are the D_s largest pre-projection stds, sorted descending.
inline TargetTransform fit_transform(
    const FeatureMatrix& aligned, TransformKind kind,
    const std::optional<ChannelStats>& pre_svd_stats = std::nullopt,
    double temperature = 0.1, double exponent = 3.0) {
  TargetTransform t;
  t.kind = kind;
  switch (kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::SN:
      t.stds = channel_stats(aligned).stds;
      break;
    case TransformKind::SM: {
      if (!pre_svd_stats.has_value()) {
        throw MissingStatsError(
            "fit_transform: SM requires pre-projection channel stats");
      }
      if (pre_svd_stats->stds.size() < aligned.cols()) {
        throw DimensionError(
            "fit_transform: pre-projection stats have fewer channels than "
            "the aligned width");
      }
      t.source_stds = channel_stats(aligned).stds;
      t.target_stds = pre_svd_stats->stds;
      std::sort(t.target_stds.begin(), t.target_stds.end(),
                std::greater<double>());
      t.target_stds.resize(aligned.cols());
      break;
    }
    case TransformKind::PTS:
      if (temperature <= 0.0) throw ParamError("fit_transform: T must be positive");
      if (exponent < 1.0) throw ParamError("fit_transform: n must be at least 1");
      t.temperature = temperature;
      t.exponent = exponent;
      break;
  }
  return t;
}

inline FeatureMatrix apply_transform(const TargetTransform& t,
                                     const FeatureMatrix& values) {
  switch (t.kind) {
    case TransformKind::Identity:
      return values;
    case TransformKind::SN:
      return scale_normalize(values, t.stds);
    case TransformKind::SM:
      return std_match(values, t.source_stds, t.target_stds);
    case TransformKind::PTS:
      return pts(values, t.temperature, t.exponent);
  }
  throw KindError("apply_transform: unknown transform kind");
}

// --- serialization ---------------------------------------------------------

inline TensorContainer to_container(const TargetTransform& t) {
  TensorContainer c;
  c.sections.push_back(scalar_i64_section("kind", static_cast<std::int64_t>(t.kind)));
  switch (t.kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::SN:
      c.sections.push_back(vector_section("stds", t.stds));
      break;
    case TransformKind::SM:
      c.sections.push_back(vector_section("source_stds", t.source_stds));
      c.sections.push_back(vector_section("target_stds", t.target_stds));
      break;
    case TransformKind::PTS:
      c.sections.push_back(scalar_f64_section("temperature", t.temperature));
      c.sections.push_back(scalar_f64_section("exponent", t.exponent));
      break;
  }
  return c;
}

inline TargetTransform transform_from_container(const TensorContainer& c) {
  TargetTransform t;
  t.kind = static_cast<TransformKind>(section_scalar_i64(c.require("kind")));
  switch (t.kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::SN:
      t.stds = section_vector(c.require("stds"));
      break;
    case TransformKind::SM:
      t.source_stds = section_vector(c.require("source_stds"));
      t.target_stds = section_vector(c.require("target_stds"));
      break;
    case TransformKind::PTS:
      t.temperature = section_scalar_f64(c.require("temperature"));
      t.exponent = section_scalar_f64(c.require("exponent"));
      break;
  }
  return t;
}

}  // namespace kdep
