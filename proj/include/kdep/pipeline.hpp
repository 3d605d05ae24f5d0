#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kdep/align.hpp"
#include "kdep/config.hpp"
#include "kdep/container.hpp"
#include "kdep/data.hpp"
#include "kdep/distill.hpp"
#include "kdep/errors.hpp"
#include "kdep/eval.hpp"
#include "kdep/hash.hpp"
#include "kdep/matrix.hpp"
#include "kdep/nn.hpp"
#include "kdep/transform.hpp"

namespace kdep {

// Stage orchestration. Every stage writes into a run directory named by
// the hash of the config keys it depends on, so reruns with unchanged
// inputs become cache hits and independent settings never collide.
// Downstream stages locate upstream artifacts by recomputing the same
// hashes from the shared resolved config.

namespace fs = std::filesystem;

inline fs::path run_root() {
  if (const char* env = std::getenv("KDEP_RUN_ROOT")) return fs::path(env);
  return fs::path("runs");
}

struct StageKeys {
  static std::vector<std::string> gen_data() { return {"data."}; }
  static std::vector<std::string> teacher() { return {"data.", "teacher."}; }
  static std::vector<std::string> fit_align() {
    return {"data.", "teacher.", "student.", "align.", "transform."};
  }
  static std::vector<std::string> distill() {
    return {"data.", "teacher.", "student.", "align.", "transform.", "train."};
  }
  static std::vector<std::string> probe() {
    return {"data.", "teacher.", "student.", "align.", "transform.", "train.",
            "probe."};
  }
  static std::vector<std::string> theorem() { return {"theorem."}; }
};

inline fs::path stage_dir(const CliConfig& cfg,
                          const std::vector<std::string>& prefixes,
                          const std::string& stage) {
  return run_root() / (stage + "-" + cfg.hash_for(prefixes));
}

inline bool cache_hit(const fs::path& file, std::ostream& log) {
  if (fs::exists(file)) {
    log << "cache hit: " << file.string() << "\n";
    return true;
  }
  return false;
}

// Echoes the fully resolved config into a manifest.
inline void snapshot_config(const CliConfig& cfg, RunManifest& manifest) {
  for (const auto& [k, v] : cfg.values()) manifest.config.emplace_back(k, v);
}

inline std::string container_hash(const TensorContainer& c) {
  const std::string bytes = serialize_container(c);
  return hash_bytes_hex(bytes.data(), bytes.size());
}

// --- gen-data ----------------------------------------------------------------

struct DataPaths {
  fs::path dir, pretrain, down_train, down_test;
};

inline DataPaths data_paths(const CliConfig& cfg) {
  DataPaths p;
  p.dir = stage_dir(cfg, StageKeys::gen_data(), "data");
  p.pretrain = p.dir / "pretrain.tc";
  p.down_train = p.dir / "downstream_train.tc";
  p.down_test = p.dir / "downstream_test.tc";
  return p;
}

inline DatasetSpec pretrain_spec(const CliConfig& cfg) {
  DatasetSpec s;
  s.classes = static_cast<std::size_t>(cfg.get_long("data.classes"));
  s.shape = DataShape::vec(static_cast<std::size_t>(cfg.get_long("data.dim")));
  s.per_class = static_cast<std::size_t>(cfg.get_long("data.per_class"));
  s.spread = cfg.get_double("data.spread");
  s.seed = cfg.get_seed("data.seed");
  s.role = DataRole::PretrainUnlabeled;
  return s;
}

inline DatasetSpec downstream_spec(const CliConfig& cfg, DataRole role) {
  DatasetSpec s;
  s.classes = static_cast<std::size_t>(cfg.get_long("data.downstream_classes"));
  s.shape = DataShape::vec(static_cast<std::size_t>(cfg.get_long("data.dim")));
  s.per_class = static_cast<std::size_t>(
      cfg.get_long(role == DataRole::DownstreamTrain
                       ? "data.downstream_per_class"
                       : "data.downstream_test_per_class"));
  s.spread = cfg.get_double("data.downstream_spread");
  s.seed = cfg.get_seed("data.downstream_seed");
  s.role = role;
  return s;
}

inline DataPaths stage_gen_data(const CliConfig& cfg, std::ostream& log) {
  const DataPaths p = data_paths(cfg);
  if (!cache_hit(p.pretrain, log)) {
    write_container(p.pretrain, to_container(generate(pretrain_spec(cfg))));
    log << "wrote " << p.pretrain.string() << "\n";
  }
  if (!cache_hit(p.down_train, log)) {
    write_container(p.down_train,
                    to_container(generate(downstream_spec(cfg, DataRole::DownstreamTrain))));
    log << "wrote " << p.down_train.string() << "\n";
  }
  if (!cache_hit(p.down_test, log)) {
    write_container(p.down_test,
                    to_container(generate(downstream_spec(cfg, DataRole::DownstreamTest))));
    log << "wrote " << p.down_test.string() << "\n";
  }
  return p;
}

// --- teacher -----------------------------------------------------------------

struct TeacherPaths {
  fs::path dir, net, manifest, feats, logits, stats;
};

inline TeacherPaths teacher_paths(const CliConfig& cfg) {
  TeacherPaths p;
  p.dir = stage_dir(cfg, StageKeys::teacher(), "teacher");
  p.net = p.dir / "teacher.tc";
  p.manifest = p.dir / "teacher_manifest.txt";
  p.feats = p.dir / "teacher_features.tc";
  p.logits = p.dir / "teacher_logits.tc";
  p.stats = p.dir / "teacher_stats.tc";
  return p;
}

inline NetworkSpec teacher_net_spec(const CliConfig& cfg) {
  const auto dim = static_cast<std::size_t>(cfg.get_long("data.dim"));
  const auto hidden = static_cast<std::size_t>(cfg.get_long("teacher.hidden"));
  const auto feat = static_cast<std::size_t>(cfg.get_long("teacher.feat_dim"));
  const auto classes = static_cast<std::size_t>(cfg.get_long("data.classes"));
  NetworkSpec spec;
  spec.input = TensorShape::vec(dim);
  spec.layers = {{LayerKind::Dense, dim, hidden},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::Dense, hidden, feat},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::LinearHead, feat, classes}};
  spec.tap_index = 2;
  return spec;
}

inline NetworkSpec student_net_spec(const CliConfig& cfg) {
  const auto dim = static_cast<std::size_t>(cfg.get_long("data.dim"));
  const auto hidden = static_cast<std::size_t>(cfg.get_long("student.hidden"));
  const auto feat = static_cast<std::size_t>(cfg.get_long("student.feat_dim"));
  const auto classes = static_cast<std::size_t>(cfg.get_long("data.classes"));
  NetworkSpec spec;
  spec.input = TensorShape::vec(dim);
  spec.layers = {{LayerKind::Dense, dim, hidden},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::Dense, hidden, feat},
                 {LayerKind::Relu, 0, 0},
                 {LayerKind::LinearHead, feat, classes}};
  spec.tap_index = 2;
  return spec;
}

// Supervised training of the teacher on the pretraining corpus. The
// corpus is nominally unlabeled for distillation; its hidden class ids
// are the supervision the teacher itself is built from.
inline TeacherPaths stage_train_teacher(const CliConfig& cfg, std::ostream& log) {
  stage_gen_data(cfg, log);
  const TeacherPaths p = teacher_paths(cfg);
  if (cache_hit(p.net, log)) return p;

  const Dataset pretrain = dataset_from_container(read_container(data_paths(cfg).pretrain));
  Network teacher = init_network(teacher_net_spec(cfg), cfg.get_seed("teacher.seed"));

  TrainConfig tc;
  tc.mode = TrainMode::Supervised;
  tc.lr0 = cfg.get_double("teacher.lr0");
  tc.epochs = static_cast<int>(cfg.get_long("teacher.epochs"));
  tc.batch_size = static_cast<int>(cfg.get_long("teacher.batch_size"));
  tc.weight_decay = cfg.get_double("teacher.weight_decay");
  tc.seed = cfg.get_seed("teacher.seed");

  TrainData data;
  data.inputs = &pretrain.samples;
  data.labels = &pretrain.labels;
  auto [trained, manifest] = train(tc, std::move(teacher), data);

  snapshot_config(cfg, manifest);
  const TensorContainer net_c = to_container(trained);
  manifest.hashes.emplace_back("teacher", container_hash(net_c));
  write_container(p.net, net_c);
  write_file_atomic(p.manifest, manifest_text(manifest));
  log << "wrote " << p.net.string() << "\n";
  return p;
}

// Teacher accuracy on its own training corpus (argmax over logits).
inline double teacher_pretrain_accuracy(const Network& teacher,
                                        const Dataset& pretrain) {
  const ForwardCache out = forward(teacher, pretrain.samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pretrain.size(); ++i) {
    if (detail::argmax_row(out.logits.row(i)) ==
        static_cast<std::size_t>(pretrain.labels[i])) {
      correct++;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pretrain.size());
}

// --- extract -----------------------------------------------------------------

// Runs the teacher over the (subsampled, unlabeled) distillation corpus
// and caches penultimate features, logits, and raw channel statistics.
inline TeacherPaths stage_extract(const CliConfig& cfg, std::ostream& log) {
  const TeacherPaths p = stage_train_teacher(cfg, log);
  if (cache_hit(p.feats, log)) return p;

  const Network teacher = network_from_container(read_container(p.net));
  Dataset corpus = dataset_from_container(read_container(data_paths(cfg).pretrain));
  corpus = subsample(corpus, cfg.get_double("data.subsample_fraction"),
                     cfg.get_seed("data.subsample_seed"));

  const ForwardCache out = forward(teacher, corpus.samples);
  TensorContainer feats;
  feats.sections.push_back(matrix_section("features", out.features));
  write_container(p.feats, feats);

  TensorContainer logits;
  logits.sections.push_back(matrix_section("logits", out.logits));
  write_container(p.logits, logits);

  const ChannelStats stats = channel_stats(out.features);
  TensorContainer stats_c;
  stats_c.sections.push_back(vector_section("means", stats.means));
  stats_c.sections.push_back(vector_section("stds", stats.stds));
  write_container(p.stats, stats_c);

  log << "wrote " << p.feats.string() << "\n";
  return p;
}

// --- fit-align ---------------------------------------------------------------

struct AlignPaths {
  fs::path dir, artifact, transform, targets, stats_csv;
};

inline AlignPaths align_paths(const CliConfig& cfg) {
  AlignPaths p;
  p.dir = stage_dir(cfg, StageKeys::fit_align(), "align");
  p.artifact = p.dir / "alignment.tc";
  p.transform = p.dir / "transform.tc";
  p.targets = p.dir / "targets.tc";
  p.stats_csv = p.dir / "stats.csv";
  return p;
}

inline AlignKind parse_align_kind(const std::string& v) {
  if (v == "svd") return AlignKind::SvdProject;
  if (v == "cs_var") return AlignKind::ChannelSelectVar;
  if (v == "cs_rand") return AlignKind::ChannelSelectRand;
  if (v == "interp") return AlignKind::Interpolate;
  if (v == "parametric") return AlignKind::ParametricHead;
  throw ConfigError("align.kind: unknown value '" + v + "'");
}

inline TransformKind parse_transform_kind(const std::string& v) {
  if (v == "identity") return TransformKind::Identity;
  if (v == "sn") return TransformKind::SN;
  if (v == "sm") return TransformKind::SM;
  if (v == "pts") return TransformKind::PTS;
  throw ConfigError("transform.kind: unknown value '" + v + "'");
}

inline HeadPosition parse_head_position(const std::string& v) {
  if (v == "pre_relu") return HeadPosition::PreRelu;
  if (v == "post_relu") return HeadPosition::PostRelu;
  throw ConfigError("align.head_position: unknown value '" + v + "'");
}

// Fits the alignment artifact and target transform on the cached teacher
// features, precomputes the distillation targets, and records the
// std-ratio diagnostics (before projection, after projection, after the
// transform).
inline AlignPaths stage_fit_align(const CliConfig& cfg, std::ostream& log) {
  const TeacherPaths tp = stage_extract(cfg, log);
  const AlignPaths p = align_paths(cfg);
  if (cache_hit(p.artifact, log)) return p;

  const FeatureMatrix feats =
      section_matrix(read_container(tp.feats).require("features"));
  const auto d_student = static_cast<std::size_t>(cfg.get_long("student.feat_dim"));
  const AlignKind kind = parse_align_kind(cfg.get("align.kind"));

  AlignmentArtifact artifact;
  switch (kind) {
    case AlignKind::SvdProject:
      artifact = fit_svd_projector(feats, d_student);
      break;
    case AlignKind::ChannelSelectVar:
      artifact = fit_channel_select(feats, d_student, false);
      break;
    case AlignKind::ChannelSelectRand:
      artifact = fit_channel_select(feats, d_student, true, cfg.get_seed("align.seed"));
      break;
    case AlignKind::Interpolate:
      artifact = make_interpolate(feats.cols(), d_student);
      break;
    case AlignKind::ParametricHead:
      artifact = make_parametric_head(d_student, feats.cols(),
                                      parse_head_position(cfg.get("align.head_position")));
      break;
  }
  write_container(p.artifact, to_container(artifact));

  const ChannelStats raw_stats = channel_stats(feats);
  const double ratio_before = std_ratio(raw_stats, kStdFloor);
  double ratio_aligned = ratio_before;
  double ratio_after = ratio_before;

  TargetTransform transform;
  transform.kind = parse_transform_kind(cfg.get("transform.kind"));
  if (artifact.kind != AlignKind::ParametricHead) {
    const FeatureMatrix aligned = apply_alignment(artifact, feats);
    ratio_aligned = std_ratio(channel_stats(aligned), kStdFloor);
    transform = fit_transform(aligned, transform.kind, raw_stats,
                              cfg.get_double("transform.T"),
                              cfg.get_double("transform.n"));
    const FeatureMatrix targets = apply_transform(transform, aligned);
    ratio_after = std_ratio(channel_stats(targets), kStdFloor);
    TensorContainer tc;
    tc.sections.push_back(matrix_section("targets", targets));
    write_container(p.targets, tc);
  } else {
    // The parametric path learns its map inside the training graph; the
    // raw teacher features are the regression target.
    transform = fit_transform(feats, TransformKind::Identity);
  }
  write_container(p.transform, to_container(transform));

  std::string csv = "std_ratio_before,std_ratio_aligned,std_ratio_after\n";
  csv += format_double(ratio_before) + "," + format_double(ratio_aligned) + "," +
         format_double(ratio_after) + "\n";
  write_file_atomic(p.stats_csv, csv);
  log << "wrote " << p.artifact.string() << "\n";
  return p;
}

// --- distill -----------------------------------------------------------------

struct DistillPaths {
  fs::path dir, student, manifest, head;
};

inline DistillPaths distill_paths(const CliConfig& cfg) {
  DistillPaths p;
  p.dir = stage_dir(cfg, StageKeys::distill(), "distill");
  p.student = p.dir / "student.tc";
  p.manifest = p.dir / "manifest.txt";
  p.head = p.dir / "parametric_head.tc";
  return p;
}

inline TrainMode parse_train_mode(const std::string& v) {
  if (v == "kdep") return TrainMode::Kdep;
  if (v == "supervised") return TrainMode::Supervised;
  if (v == "logits_kd") return TrainMode::LogitsKd;
  if (v == "parametric_kdep") return TrainMode::ParametricKdep;
  throw ConfigError("train.mode: unknown value '" + v + "'");
}

inline TrainConfig train_config_from(const CliConfig& cfg) {
  TrainConfig tc;
  tc.lr0 = cfg.get_double("train.lr0");
  tc.momentum = cfg.get_double("train.momentum");
  tc.weight_decay = cfg.get_double("train.weight_decay");
  tc.epochs = static_cast<int>(cfg.get_long("train.epochs"));
  tc.batch_size = static_cast<int>(cfg.get_long("train.batch_size"));
  tc.loss_weight = cfg.get_double("train.loss_weight");
  tc.temperature = cfg.get_double("train.temperature");
  tc.seed = cfg.get_seed("train.seed");
  return tc;
}

// Pre-trains the student under the configured method. `train.mode=none`
// saves the freshly initialized student (the random-init baseline).
inline DistillPaths stage_distill(const CliConfig& cfg, std::ostream& log) {
  const std::string mode_str = cfg.get("train.mode");
  const DistillPaths p = distill_paths(cfg);

  Network student = init_network(student_net_spec(cfg), cfg.get_seed("train.seed"));

  if (mode_str == "none") {
    stage_gen_data(cfg, log);
    if (cache_hit(p.student, log)) return p;
    RunManifest manifest;
    snapshot_config(cfg, manifest);
    const TensorContainer c = to_container(student);
    manifest.hashes.emplace_back("student_final", container_hash(c));
    write_container(p.student, c);
    write_file_atomic(p.manifest, manifest_text(manifest));
    log << "wrote " << p.student.string() << "\n";
    return p;
  }

  const TrainMode mode = parse_train_mode(mode_str);
  const AlignPaths ap = stage_fit_align(cfg, log);
  const TeacherPaths tp = teacher_paths(cfg);
  if (cache_hit(p.student, log)) return p;

  Dataset corpus = dataset_from_container(read_container(data_paths(cfg).pretrain));
  corpus = subsample(corpus, cfg.get_double("data.subsample_fraction"),
                     cfg.get_seed("data.subsample_seed"));

  TrainConfig tc = train_config_from(cfg);
  tc.mode = mode;

  TrainData data;
  data.inputs = &corpus.samples;

  FeatureMatrix targets, teacher_feats, teacher_logits;
  ParametricHead head;
  RunManifest manifest;

  switch (mode) {
    case TrainMode::Kdep:
      targets = section_matrix(read_container(ap.targets).require("targets"));
      data.targets = &targets;
      manifest.hashes.emplace_back("targets", hash_file_hex(ap.targets.string()));
      break;
    case TrainMode::Supervised:
      data.labels = &corpus.labels;
      break;
    case TrainMode::LogitsKd:
      teacher_logits = section_matrix(read_container(tp.logits).require("logits"));
      data.teacher_logits = &teacher_logits;
      manifest.hashes.emplace_back("targets", hash_file_hex(tp.logits.string()));
      break;
    case TrainMode::ParametricKdep: {
      teacher_feats = section_matrix(read_container(tp.feats).require("features"));
      data.teacher_features = &teacher_feats;
      const AlignmentArtifact artifact =
          alignment_from_container(read_container(ap.artifact));
      if (artifact.kind != AlignKind::ParametricHead) {
        throw ConfigError(
            "train.mode=parametric_kdep requires align.kind=parametric");
      }
      head = init_parametric_head(artifact.head_spec, tc.seed);
      data.head = &head;
      manifest.hashes.emplace_back("targets", hash_file_hex(tp.feats.string()));
      break;
    }
  }

  auto [trained, train_manifest] = train(tc, std::move(student), data);
  manifest.epochs = std::move(train_manifest.epochs);
  manifest.wall_clock_seconds = train_manifest.wall_clock_seconds;
  snapshot_config(cfg, manifest);
  manifest.hashes.emplace_back("teacher", hash_file_hex(tp.net.string()));
  manifest.hashes.emplace_back("alignment", hash_file_hex(ap.artifact.string()));
  manifest.hashes.emplace_back("transform", hash_file_hex(ap.transform.string()));
  std::sort(manifest.hashes.begin(), manifest.hashes.end());

  const TensorContainer student_c = to_container(trained);
  manifest.hashes.emplace_back("student_final", container_hash(student_c));
  write_container(p.student, student_c);
  if (mode == TrainMode::ParametricKdep) {
    write_container(p.head, to_container(head));
  }
  write_file_atomic(p.manifest, manifest_text(manifest));
  log << "wrote " << p.student.string() << "\n";
  return p;
}

// --- probe -------------------------------------------------------------------

struct ProbePaths {
  fs::path dir, result;
};

inline ProbePaths probe_paths(const CliConfig& cfg) {
  ProbePaths p;
  p.dir = stage_dir(cfg, StageKeys::probe(), "probe");
  p.result = p.dir / "probe.csv";
  return p;
}

inline ProbeConfig probe_config_from(const CliConfig& cfg) {
  ProbeConfig pc;
  pc.mode = cfg.get("probe.mode") == "finetune" ? ProbeMode::Finetune
                                                : ProbeMode::Linear;
  if (cfg.get("probe.mode") != "linear" && cfg.get("probe.mode") != "finetune") {
    throw ConfigError("probe.mode: unknown value '" + cfg.get("probe.mode") + "'");
  }
  pc.epochs = static_cast<int>(cfg.get_long("probe.epochs"));
  pc.lr_grid = cfg.get_double_list("probe.lr_grid");
  pc.batch_size = static_cast<int>(cfg.get_long("probe.batch_size"));
  pc.seed = cfg.get_seed("probe.seed");
  return pc;
}

inline ProbePaths stage_probe(const CliConfig& cfg, std::ostream& log) {
  const DistillPaths dp = stage_distill(cfg, log);
  const ProbePaths p = probe_paths(cfg);
  if (cache_hit(p.result, log)) return p;

  const Network student = network_from_container(read_container(dp.student));
  const DataPaths paths = data_paths(cfg);
  const Dataset down_train = dataset_from_container(read_container(paths.down_train));
  const Dataset down_test = dataset_from_container(read_container(paths.down_test));

  const ProbeResult r = linear_probe(student, down_train, down_test,
                                     probe_config_from(cfg));
  std::string csv = "top1,mode,best_lr,seed\n";
  csv += format_double(r.top1) + "," +
         (r.mode == ProbeMode::Linear ? std::string("linear") : std::string("finetune")) +
         "," + format_double(r.best_lr) + "," + std::to_string(cfg.get_long("probe.seed")) +
         "\n";
  csv += "per_class\n";
  for (double v : r.per_class) csv += format_double(v) + "\n";
  write_file_atomic(p.result, csv);
  log << "wrote " << p.result.string() << "\n";
  return p;
}

// --- method presets and report -------------------------------------------------

// The comparison axes the report covers: random init, the supervised
// baseline, the learnable 1x1 head, the non-parametric aligners with each
// statistics transform, and classical logits distillation.
inline const std::vector<std::pair<std::string,
                                   std::vector<std::pair<std::string, std::string>>>>&
method_presets() {
  static const std::vector<std::pair<std::string,
                                     std::vector<std::pair<std::string, std::string>>>>
      presets = {
          {"rand_init", {{"train.mode", "none"}}},
          {"sp_baseline", {{"train.mode", "supervised"}}},
          {"parametric_1x1",
           {{"train.mode", "parametric_kdep"}, {"align.kind", "parametric"}}},
          {"svd", {{"align.kind", "svd"}, {"transform.kind", "identity"}}},
          {"svd_sn", {{"align.kind", "svd"}, {"transform.kind", "sn"}}},
          {"svd_sm", {{"align.kind", "svd"}, {"transform.kind", "sm"}}},
          {"svd_pts", {{"align.kind", "svd"}, {"transform.kind", "pts"}}},
          {"logits_kd", {{"train.mode", "logits_kd"}}},
      };
  return presets;
}

inline CliConfig apply_method(const CliConfig& base, const std::string& method) {
  for (const auto& [name, overrides] : method_presets()) {
    if (name == method) {
      CliConfig cfg = base;
      for (const auto& [k, v] : overrides) cfg.set(k, v);
      return cfg;
    }
  }
  throw ConfigError("unknown method preset: " + method);
}

struct ReportRow {
  std::string method;
  double data_fraction = 1.0;
  long epochs = 0;
  long seed = 0;
  double probe_top1 = 0.0;
  double std_ratio_before = 0.0;
  double std_ratio_after = 0.0;
  double compactness_teacher = 0.0;
};

inline std::string report_csv_header() {
  return "method,data_fraction,epochs,seed,probe_top1,std_ratio_before,"
         "std_ratio_after,compactness_teacher";
}

inline std::string report_row_csv(const ReportRow& r) {
  return r.method + "," + format_double(r.data_fraction) + "," +
         std::to_string(r.epochs) + "," + std::to_string(r.seed) + "," +
         format_double(r.probe_top1) + "," + format_double(r.std_ratio_before) + "," +
         format_double(r.std_ratio_after) + "," + format_double(r.compactness_teacher);
}

inline double read_probe_top1(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open probe result: " + csv.string());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  const std::size_t comma = row.find(',');
  if (comma == std::string::npos) throw FormatError("malformed probe csv", 0);
  return std::stod(row.substr(0, comma));
}

// Teacher feature compactness on the pretraining corpus (hidden ids used
// as the class labels for this diagnostic only).
inline double teacher_compactness(const CliConfig& cfg, std::ostream& log) {
  const TeacherPaths tp = stage_extract(cfg, log);
  const FeatureMatrix feats =
      section_matrix(read_container(tp.feats).require("features"));
  Dataset corpus = dataset_from_container(read_container(data_paths(cfg).pretrain));
  corpus = subsample(corpus, cfg.get_double("data.subsample_fraction"),
                     cfg.get_seed("data.subsample_seed"));
  return compactness(feats, corpus.labels);
}

// Runs the full method grid for one base config (typically varying the
// seed outside) and emits report rows in preset order.
inline std::vector<ReportRow> run_report(const CliConfig& base, std::ostream& log) {
  std::vector<ReportRow> rows;
  for (const auto& [method, overrides] : method_presets()) {
    const CliConfig cfg = apply_method(base, method);
    const ProbePaths pp = stage_probe(cfg, log);

    ReportRow row;
    row.method = method;
    row.data_fraction = cfg.get_double("data.subsample_fraction");
    row.epochs = method == "rand_init" ? 0 : cfg.get_long("train.epochs");
    row.seed = cfg.get_long("train.seed");
    row.probe_top1 = read_probe_top1(pp.result);
    row.compactness_teacher = teacher_compactness(cfg, log);

    // Methods that never touch the aligner report the raw teacher ratio
    // in both columns.
    if (method == "rand_init" || method == "sp_baseline" ||
        method == "logits_kd") {
      const TeacherPaths tp = stage_extract(cfg, log);
      const FeatureMatrix feats =
          section_matrix(read_container(tp.feats).require("features"));
      row.std_ratio_before = std_ratio(channel_stats(feats), kStdFloor);
      row.std_ratio_after = row.std_ratio_before;
    } else {
      const AlignPaths ap = align_paths(cfg);
      std::ifstream in(ap.stats_csv);
      std::string header, vals;
      std::getline(in, header);
      std::getline(in, vals);
      std::stringstream ss(vals);
      std::string before, aligned, after;
      std::getline(ss, before, ',');
      std::getline(ss, aligned, ',');
      std::getline(ss, after, ',');
      row.std_ratio_before = std::stod(before);
      row.std_ratio_after = std::stod(after);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace kdep
