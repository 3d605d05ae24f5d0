#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdep/container.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"
#include "kdep/rng.hpp"

namespace kdep {

enum class DataRole : std::int64_t {
  PretrainUnlabeled = 0,
  DownstreamTrain = 1,
  DownstreamTest = 2,
};

struct DataShape {
  bool image = false;
  std::size_t dim = 0;
  std::size_t h = 0, w = 0, ch = 0;

  static DataShape vec(std::size_t d) { return {false, d, 0, 0, 0}; }
  static DataShape img(std::size_t h, std::size_t w, std::size_t ch) {
    return {true, h * w * ch, h, w, ch};
  }
  std::size_t flat() const { return image ? h * w * ch : dim; }
};

struct DatasetSpec {
  std::size_t classes = 2;
  DataShape shape = DataShape::vec(2);
  std::size_t per_class = 1;
  double spread = 0.1;  // within-class std, relative to unit centroid norm
  std::uint64_t seed = 0;
  DataRole role = DataRole::DownstreamTrain;

  void validate() const {
    if (classes < 2) throw SpecError("dataset: need at least 2 classes");
    if (per_class < 1) throw SpecError("dataset: need at least 1 sample per class");
    if (spread <= 0.0) throw SpecError("dataset: spread must be positive");
    if (shape.flat() < 1) throw SpecError("dataset: empty sample shape");
  }
};

// Synthetic Gaussian-cluster dataset. `labels` always carries the class
// ids; `labels_public` is false for the unlabeled pretraining role, where
// the ids exist only for stratified subsampling (and as the supervision
// the teacher itself was trained with, before the distillation stage
// abandons them).
struct Dataset {
  DatasetSpec spec;
  FeatureMatrix samples;
  std::vector<long> labels;
  bool labels_public = true;

  std::size_t size() const { return samples.rows(); }
};

// Class centroids uniform on the unit sphere, samples centroid +
// Normal(0, spread^2) per coordinate, in fixed class-major order.
// Seed streams: the pretraining corpus and the downstream task draw
// their centroids from disjoint streams even under one seed value, while
// the two downstream roles share one task (same centroids) and differ
// only in the sample-noise stream.
inline Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.shape.flat();
  const std::uint64_t centroid_salt =
      spec.role == DataRole::PretrainUnlabeled ? 0x9E0DULL : 0xD01AULL;
  SplitMix64 centroid_rng(mix_seed(spec.seed, centroid_salt));
  SplitMix64 noise_rng(
      mix_seed(spec.seed, 0x5A17ULL + static_cast<std::uint64_t>(spec.role)));

  FeatureMatrix centroids(spec.classes, dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        centroids(c, j) = centroid_rng.next_normal();
        norm2 += centroids(c, j) * centroids(c, j);
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < dim; ++j) centroids(c, j) *= inv;
  }

  Dataset ds;
  ds.spec = spec;
  ds.samples = FeatureMatrix(spec.classes * spec.per_class, dim);
  ds.labels.resize(spec.classes * spec.per_class);
  ds.labels_public = spec.role != DataRole::PretrainUnlabeled;
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        ds.samples(row, j) = centroids(c, j) + spec.spread * noise_rng.next_normal();
      }
      ds.labels[row] = static_cast<long>(c);
    }
  }
  return ds;
}

// Per-class stratified subsample of ceil(fraction * class_size) items,
// preserving the original sample order. The small bias guard keeps
// exact products like 0.1 * 100 from rounding up to 11.
inline Dataset subsample(const Dataset& dataset, double fraction,
                         std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw SpecError("subsample: fraction must lie in (0, 1]");
  }
  if (fraction == 1.0) return dataset;

  std::vector<std::vector<std::size_t>> by_class(dataset.spec.classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const long c = dataset.labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= dataset.spec.classes) {
      throw SpecError("subsample: class id out of range");
    }
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }

  SplitMix64 rng(seed);
  std::vector<std::size_t> keep;
  std::size_t uniform_take = 0;
  bool takes_uniform = true;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const std::size_t n = by_class[c].size();
    if (n == 0) continue;
    const auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-9));
    const std::size_t take = std::min(std::max<std::size_t>(want, 1), n);
    if (uniform_take == 0) {
      uniform_take = take;
    } else if (take != uniform_take) {
      takes_uniform = false;
    }
    for (std::size_t pick : rng.sample_without_replacement(n, take)) {
      keep.push_back(by_class[c][pick]);
    }
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.spec = dataset.spec;
  out.spec.per_class = takes_uniform ? uniform_take : 0;
  out.labels_public = dataset.labels_public;
  out.samples = FeatureMatrix(keep.size(), dataset.samples.cols());
  out.labels.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto src = dataset.samples.row(keep[r]);
    std::copy(src.begin(), src.end(), out.samples.row(r).begin());
    out.labels[r] = dataset.labels[keep[r]];
  }
  return out;
}

// --- serialization ----------------------------------------------------------

inline TensorContainer to_container(const Dataset& ds) {
  TensorContainer c;
  c.sections.push_back(matrix_section("samples", ds.samples));
  std::vector<std::int64_t> labels(ds.labels.begin(), ds.labels.end());
  c.sections.push_back(make_i64_section(
      ds.labels_public ? "labels" : "hidden_ids", {labels.size()}, labels));
  c.sections.push_back(make_i64_section(
      "spec", {7},
      {static_cast<std::int64_t>(ds.spec.classes), ds.spec.shape.image ? 1 : 0,
       static_cast<std::int64_t>(ds.spec.shape.image ? ds.spec.shape.h
                                                     : ds.spec.shape.dim),
       static_cast<std::int64_t>(ds.spec.shape.w),
       static_cast<std::int64_t>(ds.spec.shape.ch),
       static_cast<std::int64_t>(ds.spec.per_class),
       static_cast<std::int64_t>(ds.spec.role)}));
  c.sections.push_back(scalar_f64_section("spread", ds.spec.spread));
  c.sections.push_back(
      scalar_i64_section("seed", static_cast<std::int64_t>(ds.spec.seed)));
  return c;
}

inline Dataset dataset_from_container(const TensorContainer& c) {
  Dataset ds;
  ds.samples = section_matrix(c.require("samples"));
  const TensorSection* labels = c.find("labels");
  ds.labels_public = labels != nullptr;
  if (!labels) labels = &c.require("hidden_ids");
  ds.labels.assign(labels->i64.begin(), labels->i64.end());
  const auto& spec = c.require("spec").i64;
  if (spec.size() != 7) throw FormatError("spec section must have 7 entries", 0);
  ds.spec.classes = static_cast<std::size_t>(spec[0]);
  if (spec[1] != 0) {
    ds.spec.shape = DataShape::img(static_cast<std::size_t>(spec[2]),
                                   static_cast<std::size_t>(spec[3]),
                                   static_cast<std::size_t>(spec[4]));
  } else {
    ds.spec.shape = DataShape::vec(static_cast<std::size_t>(spec[2]));
  }
  ds.spec.per_class = static_cast<std::size_t>(spec[5]);
  ds.spec.role = static_cast<DataRole>(spec[6]);
  ds.spec.spread = section_scalar_f64(c.require("spread"));
  ds.spec.seed = static_cast<std::uint64_t>(section_scalar_i64(c.require("seed")));
  return ds;
}

}  // namespace kdep
