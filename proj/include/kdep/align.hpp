#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "kdep/container.hpp"
#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"
#include "kdep/rng.hpp"
#include "kdep/svd.hpp"

namespace kdep {

enum class AlignKind : std::int64_t {
  SvdProject = 0,
  ChannelSelectVar = 1,
  ChannelSelectRand = 2,
  Interpolate = 3,
  ParametricHead = 4,
};

enum class HeadPosition : std::int64_t { PreRelu = 0, PostRelu = 1 };

// Descriptor for the learnable projection baseline: a linear map from the
// student width up to the teacher width followed by per-channel
// normalization with learnable scale and shift. On globally pooled
// feature vectors a 1x1 convolution is exactly this linear map. The
// parameters themselves live in the training graph, not here.
struct ParametricHeadSpec {
  std::size_t d_in = 0;   // student width
  std::size_t d_out = 0;  // teacher width
  HeadPosition position = HeadPosition::PreRelu;
};

// A fitted teacher-to-student dimension map. Which fields are meaningful
// depends on `kind`; serialization stores one section per field.
struct AlignmentArtifact {
  AlignKind kind = AlignKind::SvdProject;
  std::size_t d_teacher = 0;
  std::size_t d_student = 0;
  std::vector<double> mean;          // SvdProject
  SvdFactors factors;                // SvdProject
  std::vector<std::size_t> indices;  // ChannelSelect*
  std::uint64_t seed = 0;            // ChannelSelectRand
  ParametricHeadSpec head_spec;      // ParametricHead
};

// Centers the teacher features and keeps the top d_student right singular
// vectors of the centered matrix, so every projected channel has exactly
// zero mean over the fitting set.
inline AlignmentArtifact fit_svd_projector(const FeatureMatrix& teacher_feats,
                                           std::size_t d_student) {
  const std::size_t n = teacher_feats.rows();
  const std::size_t d_t = teacher_feats.cols();
  if (d_student < 1 || d_student > d_t) {
    throw DimensionError("fit_svd_projector: d_student must lie in [1, D_t]");
  }
  if (n < d_student) {
    throw DimensionError("fit_svd_projector: need at least d_student samples");
  }
  AlignmentArtifact a;
  a.kind = AlignKind::SvdProject;
  a.d_teacher = d_t;
  a.d_student = d_student;

  const ChannelStats stats = channel_stats(teacher_feats);
  a.mean = stats.means;
  FeatureMatrix centered(n, d_t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_t; ++j) {
      centered(i, j) = teacher_feats(i, j) - a.mean[j];
    }
  }
  a.factors = svd_topk(centered, d_student);
  return a;
}

inline AlignmentArtifact fit_channel_select(const FeatureMatrix& teacher_feats,
                                            std::size_t d_student, bool random,
                                            std::uint64_t seed = 0) {
  const std::size_t d_t = teacher_feats.cols();
  if (d_student < 1 || d_student > d_t) {
    throw DimensionError("fit_channel_select: d_student must lie in [1, D_t]");
  }
  AlignmentArtifact a;
  a.d_teacher = d_t;
  a.d_student = d_student;
  if (random) {
    a.kind = AlignKind::ChannelSelectRand;
    a.seed = seed;
    SplitMix64 rng(seed);
    a.indices = rng.sample_without_replacement(d_t, d_student);
  } else {
    a.kind = AlignKind::ChannelSelectVar;
    const ChannelStats stats = channel_stats(teacher_feats);
    std::vector<std::size_t> order(d_t);
    std::iota(order.begin(), order.end(), 0);
    // Rank by variance descending; equal variances keep the lower index.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) {
                       return stats.stds[x] > stats.stds[y];
                     });
    a.indices.assign(order.begin(),
                     order.begin() + static_cast<std::ptrdiff_t>(d_student));
    std::sort(a.indices.begin(), a.indices.end());
  }
  return a;
}

inline AlignmentArtifact make_parametric_head(std::size_t d_student,
                                              std::size_t d_teacher,
                                              HeadPosition position) {
  if (d_student < 1 || d_teacher < 1) {
    throw DimensionError("make_parametric_head: dims must be positive");
  }
  AlignmentArtifact a;
  a.kind = AlignKind::ParametricHead;
  a.d_teacher = d_teacher;
  a.d_student = d_student;
  a.head_spec = ParametricHeadSpec{d_student, d_teacher, position};
  return a;
}

inline FeatureMatrix apply_alignment(const AlignmentArtifact& artifact,
                                     const FeatureMatrix& feats) {
  if (feats.cols() != artifact.d_teacher) {
    throw DimensionError("apply_alignment: width mismatch with artifact");
  }
  const std::size_t n = feats.rows();
  const std::size_t d_s = artifact.d_student;
  switch (artifact.kind) {
    case AlignKind::SvdProject: {
      FeatureMatrix out(n, d_s);
      const FeatureMatrix& v = artifact.factors.right_vectors;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d_s; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < artifact.d_teacher; ++j) {
            acc += (feats(i, j) - artifact.mean[j]) * v(j, c);
          }
          out(i, c) = acc;
        }
      }
      return out;
    }
    case AlignKind::ChannelSelectVar:
    case AlignKind::ChannelSelectRand: {
      FeatureMatrix out(n, d_s);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d_s; ++c) {
          out(i, c) = feats(i, artifact.indices[c]);
        }
      }
      return out;
    }
    case AlignKind::Interpolate: {
      // Nearest neighbor with half-pixel offset: output column j reads
      // input column floor((j + 0.5) * D_t / D_s).
      FeatureMatrix out(n, d_s);
      for (std::size_t c = 0; c < d_s; ++c) {
        auto src = static_cast<std::size_t>(
            (static_cast<double>(c) + 0.5) *
            static_cast<double>(artifact.d_teacher) /
            static_cast<double>(d_s));
        if (src >= artifact.d_teacher) src = artifact.d_teacher - 1;
        for (std::size_t i = 0; i < n; ++i) out(i, c) = feats(i, src);
      }
      return out;
    }
    case AlignKind::ParametricHead:
      throw KindError(
          "apply_alignment: parametric head is learned inside the training "
          "graph, not applied as a fixed map");
  }
  throw KindError("apply_alignment: unknown artifact kind");
}

inline AlignmentArtifact make_interpolate(std::size_t d_teacher,
                                          std::size_t d_student) {
  if (d_student < 1 || d_student > d_teacher) {
    throw DimensionError("make_interpolate: d_student must lie in [1, D_t]");
  }
  AlignmentArtifact a;
  a.kind = AlignKind::Interpolate;
  a.d_teacher = d_teacher;
  a.d_student = d_student;
  return a;
}

// --- serialization ---------------------------------------------------------

inline TensorContainer to_container(const AlignmentArtifact& a) {
  TensorContainer c;
  c.sections.push_back(scalar_i64_section("kind", static_cast<std::int64_t>(a.kind)));
  c.sections.push_back(scalar_i64_section("d_teacher", static_cast<std::int64_t>(a.d_teacher)));
  c.sections.push_back(scalar_i64_section("d_student", static_cast<std::int64_t>(a.d_student)));
  switch (a.kind) {
    case AlignKind::SvdProject:
      c.sections.push_back(vector_section("mean", a.mean));
      c.sections.push_back(vector_section("singular_values", a.factors.singular_values));
      c.sections.push_back(matrix_section("right_vectors", a.factors.right_vectors));
      break;
    case AlignKind::ChannelSelectVar:
    case AlignKind::ChannelSelectRand: {
      std::vector<std::int64_t> idx(a.indices.begin(), a.indices.end());
      c.sections.push_back(make_i64_section("indices", {idx.size()}, idx));
      c.sections.push_back(scalar_i64_section("seed", static_cast<std::int64_t>(a.seed)));
      break;
    }
    case AlignKind::Interpolate:
      break;
    case AlignKind::ParametricHead:
      c.sections.push_back(make_i64_section(
          "head", {3},
          {static_cast<std::int64_t>(a.head_spec.d_in),
           static_cast<std::int64_t>(a.head_spec.d_out),
           static_cast<std::int64_t>(a.head_spec.position)}));
      break;
  }
  return c;
}

inline AlignmentArtifact alignment_from_container(const TensorContainer& c) {
  AlignmentArtifact a;
  a.kind = static_cast<AlignKind>(section_scalar_i64(c.require("kind")));
  a.d_teacher = static_cast<std::size_t>(section_scalar_i64(c.require("d_teacher")));
  a.d_student = static_cast<std::size_t>(section_scalar_i64(c.require("d_student")));
  switch (a.kind) {
    case AlignKind::SvdProject:
      a.mean = section_vector(c.require("mean"));
      a.factors.singular_values = section_vector(c.require("singular_values"));
      a.factors.right_vectors = section_matrix(c.require("right_vectors"));
      a.factors.k = a.factors.singular_values.size();
      break;
    case AlignKind::ChannelSelectVar:
    case AlignKind::ChannelSelectRand: {
      const auto& idx = c.require("indices").i64;
      a.indices.assign(idx.begin(), idx.end());
      a.seed = static_cast<std::uint64_t>(section_scalar_i64(c.require("seed")));
      break;
    }
    case AlignKind::Interpolate:
      break;
    case AlignKind::ParametricHead: {
      const auto& h = c.require("head").i64;
      if (h.size() != 3) throw FormatError("head section must have 3 entries", 0);
      a.head_spec.d_in = static_cast<std::size_t>(h[0]);
      a.head_spec.d_out = static_cast<std::size_t>(h[1]);
      a.head_spec.position = static_cast<HeadPosition>(h[2]);
      break;
    }
  }
  return a;
}

}  // namespace kdep
