// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// pass. Run directories live under a scratch root; the golden directory
// comes in as argv[1].

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
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
#include "kdep/pipeline.hpp"
#include "kdep/svd.hpp"
#include "kdep/transform.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace kdep;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass,
            const std::string& detail = "") {
  std::cout << "[" << index << "] " << name << ": " << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << "  (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

std::string g17(double v) { return format_double(v); }

// --- 1: worked SN/SM example, exact to 1e-12 ---------------------------------

bool criterion_appendix_exact() {
  const auto row = FeatureMatrix::from_rows({{10, 2, 2}});
  const FeatureMatrix sn = scale_normalize(row, {50, 5, 1});
  const FeatureMatrix sm = std_match(row, {50, 5, 1}, {4, 3, 2});
  const double sn_want[3] = {0.2, 0.4, 2.0};
  const double sm_want[3] = {0.8, 1.2, 4.0};
  for (int j = 0; j < 3; ++j) {
    if (std::fabs(sn(0, static_cast<std::size_t>(j)) - sn_want[j]) > 1e-12) return false;
    if (std::fabs(sm(0, static_cast<std::size_t>(j)) - sm_want[j]) > 1e-12) return false;
  }
  return true;
}

// --- 2: Monte-Carlo verifier -------------------------------------------------

bool criterion_theorem(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Theorem1Config cfg;  // sigma {0.5,1,2,4}, sigma_s 1, 1e6 samples
  const std::vector<Theorem1Row> rows = verify_theorem1(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 5.0;
  for (const Theorem1Row& r : rows) {
    ok = ok && r.pass &&
         std::fabs(r.estimate - r.analytic) <= 4.0 * r.std_error;
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ok = ok && rows[i].estimate > rows[i - 1].estimate;
  }
  detail = "runtime " + g17(secs) + " s";
  return ok;
}

// --- 3: SVD optimality vs brute force and channel selection ------------------

bool criterion_svd_optimality(std::string& detail) {
  double worst_rel = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FeatureMatrix x = oracle::random_matrix(50, 16, 2026 + seed);
    const auto g = oracle::gram(x);
    const oracle::EigenPairs eig = oracle::power_iteration_full(g, 16);
    const ChannelStats stats = channel_stats(x);
    for (std::size_t k : {1u, 4u, 8u}) {
      const SvdFactors f = svd_topk(x, k);
      std::vector<std::vector<double>> lib_cols(k, std::vector<double>(16));
      std::vector<std::vector<double>> orc_cols(k, std::vector<double>(16));
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < 16; ++j) {
          lib_cols[c][j] = f.right_vectors(j, c);
          orc_cols[c][j] = eig.vectors[c][j];
        }
      }
      const double lib_err = oracle::projection_residual_fro(x, lib_cols);
      const double orc_err = oracle::projection_residual_fro(x, orc_cols);
      const double rel = std::fabs(lib_err - orc_err) / std::max(orc_err, 1e-30);
      worst_rel = std::max(worst_rel, rel);
      if (rel > 1e-8) return false;

      // Selection reconstructions: unselected channels fall back to their
      // fitted means; the residual is the retained variance mass.
      auto select_err = [&](const std::vector<std::size_t>& keep) {
        std::vector<bool> kept(16, false);
        for (std::size_t i : keep) kept[i] = true;
        double acc = 0.0;
        for (std::size_t j = 0; j < 16; ++j) {
          if (kept[j]) continue;
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const double dev = x(i, j) - stats.means[j];
            acc += dev * dev;
          }
        }
        return std::sqrt(acc);
      };
      const AlignmentArtifact var_a = fit_channel_select(x, k, false);
      const double var_err = select_err(var_a.indices);
      double rand_err = 0.0;
      for (std::uint64_t rs = 0; rs < 20; ++rs) {
        rand_err += select_err(fit_channel_select(x, k, true, rs).indices);
      }
      rand_err /= 20.0;

      // svd reconstructs around the channel means as well (centered
      // projection); compare like with like.
      FeatureMatrix centered(x.rows(), 16);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < 16; ++j) centered(i, j) = x(i, j) - stats.means[j];
      }
      const AlignmentArtifact svd_a = fit_svd_projector(x, k);
      std::vector<std::vector<double>> proj_cols(k, std::vector<double>(16));
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < 16; ++j) {
          proj_cols[c][j] = svd_a.factors.right_vectors(j, c);
        }
      }
      const double svd_err = oracle::projection_residual_fro(centered, proj_cols);
      if (!(svd_err <= var_err + 1e-9)) return false;
      if (!(var_err <= rand_err + 1e-9)) return false;
    }
  }
  detail = "worst brute-force rel dev " + g17(worst_rel);
  return true;
}

// --- 4: gradient checks -------------------------------------------------------

bool criterion_grad_checks(std::string& detail) {
  double worst = 0.0;
  bool ok = true;

  auto run_check = [&](const NetworkSpec& spec, std::size_t width,
                       const LossFn& fn, std::uint64_t seed) {
    const Network net = init_network(spec, seed);
    const FeatureMatrix batch = oracle::random_matrix(3, width, seed + 1);
    const GradCheckReport r = grad_check(net, fn, batch, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.pass;
  };

  const FeatureMatrix targets3 = oracle::random_matrix(3, 3, 7100);
  const FeatureMatrix targets2 = oracle::random_matrix(3, 2, 7101);
  const FeatureMatrix tlogits = oracle::random_matrix(3, 2, 7102);

  const LossFn kdep_fn3 = [&](const FeatureMatrix& f, const FeatureMatrix*,
                              FeatureMatrix* df, FeatureMatrix*) {
    const LossValue lv = kdep_loss(f, targets3, 1.5);
    if (df) *df = lv.grads;
    return lv.loss;
  };
  const LossFn kdep_fn2 = [&](const FeatureMatrix& f, const FeatureMatrix*,
                              FeatureMatrix* df, FeatureMatrix*) {
    const LossValue lv = kdep_loss(f, targets2, 1.5);
    if (df) *df = lv.grads;
    return lv.loss;
  };
  const LossFn logits_fn = [&](const FeatureMatrix&, const FeatureMatrix* logits,
                               FeatureMatrix*, FeatureMatrix* dl) {
    const LossValue lv = logits_kd_loss(*logits, tlogits, 3.0);
    if (dl) *dl = lv.grads;
    return lv.loss;
  };

  // Every layer kind, exercised in two-layer compositions, under the
  // feature loss.
  NetworkSpec dense2;
  dense2.input = TensorShape::vec(4);
  dense2.layers = {{LayerKind::Dense, 4, 5}, {LayerKind::Relu, 0, 0},
                   {LayerKind::Dense, 5, 3}};
  dense2.tap_index = 2;
  run_check(dense2, 4, kdep_fn3, 9000);

  NetworkSpec conv2;
  conv2.input = TensorShape::img(4, 4, 2);
  conv2.layers = {{LayerKind::Conv3x3, 2, 3}, {LayerKind::Relu, 0, 0},
                  {LayerKind::Conv3x3, 3, 2}, {LayerKind::Gap, 0, 0},
                  {LayerKind::Dense, 2, 3}};
  conv2.tap_index = 4;
  run_check(conv2, 4 * 4 * 2, kdep_fn3, 9002);

  // Both losses through a 2-layer net with a head.
  NetworkSpec with_head;
  with_head.input = TensorShape::vec(4);
  with_head.layers = {{LayerKind::Dense, 4, 6}, {LayerKind::Relu, 0, 0},
                      {LayerKind::Dense, 6, 2}, {LayerKind::Relu, 0, 0},
                      {LayerKind::LinearHead, 2, 2}};
  with_head.tap_index = 2;
  run_check(with_head, 4, kdep_fn2, 9004);
  run_check(with_head, 4, logits_fn, 9006);

  detail = "max FD rel error " + g17(worst);
  return ok && worst < 1e-4;
}

// --- 5: PTS statistics --------------------------------------------------------

bool criterion_pts_statistics(std::string& detail) {
  SplitMix64 rng(501);
  const std::size_t n = 500;
  std::vector<double> base(n);
  double mean = 0.0;
  for (double& v : base) {
    v = rng.next_normal();
    mean += v;
  }
  mean /= static_cast<double>(n);
  for (double& v : base) v -= mean;

  FeatureMatrix x(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 50.0 * base[i];
    x(i, 1) = 5.0 * base[i];
    x(i, 2) = 1.0 * base[i];
  }
  const double ratio_before = std_ratio(channel_stats(x), 1e-12);
  const FeatureMatrix y = pts(x, 0.1, 3.0);
  const ChannelStats after = channel_stats(y);
  const double ratio_after = std_ratio(after, 1e-12);

  bool ok = ratio_after < ratio_before;
  ok = ok && after.stds[0] > after.stds[1] && after.stds[1] > after.stds[2];

  // Global nondecrease: f_a <= f_b must imply pts(f_a) <= pts(f_b) for
  // every pair anywhere in the matrix.
  std::vector<double> flat(x.data(), x.data() + x.size());
  std::vector<double> mapped(y.data(), y.data() + y.size());
  for (std::size_t a = 0; a < flat.size() && ok; ++a) {
    for (std::size_t b = a + 1; b < flat.size(); ++b) {
      if ((flat[a] - flat[b]) * (mapped[a] - mapped[b]) < 0.0) {
        ok = false;
        break;
      }
    }
  }
  detail = "std ratio " + g17(ratio_before) + " -> " + g17(ratio_after);
  return ok;
}

// --- 6 & 7: pipeline criteria ---------------------------------------------------

struct PipelineOutcome {
  std::map<std::string, std::vector<double>> top1;  // method -> per-seed
  double teacher_accuracy = 0.0;
  double seconds = 0.0;
};

CliConfig default_base() {
  return CliConfig();
}

PipelineOutcome run_grid(const fs::path& root, const std::vector<long>& seeds) {
  PipelineOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(root);
  setenv("KDEP_RUN_ROOT", root.c_str(), 1);
  std::ostringstream log;

  CliConfig base = default_base();
  const TeacherPaths tp = stage_train_teacher(base, log);
  const Dataset pretrain = dataset_from_container(read_container(data_paths(base).pretrain));
  const Network teacher = network_from_container(read_container(tp.net));
  out.teacher_accuracy = teacher_pretrain_accuracy(teacher, pretrain);

  for (long seed : seeds) {
    CliConfig cfg = default_base();
    cfg.set("train.seed", std::to_string(seed));
    cfg.set("probe.seed", std::to_string(seed));
    for (const auto& [method, overrides] : method_presets()) {
      const CliConfig mcfg = apply_method(cfg, method);
      const ProbePaths pp = stage_probe(mcfg, log);
      out.top1[method].push_back(read_probe_top1(pp.result));
    }
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  unsetenv("KDEP_RUN_ROOT");
  return out;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

bool criterion_directional_trend(const PipelineOutcome& out, std::string& detail) {
  bool ok = out.teacher_accuracy >= 0.95;
  const double svd_pts = mean_of(out.top1.at("svd_pts"));
  const double svd = mean_of(out.top1.at("svd"));
  const double parametric = mean_of(out.top1.at("parametric_1x1"));
  const double rand_init = mean_of(out.top1.at("rand_init"));

  ok = ok && svd_pts >= svd;
  ok = ok && svd >= parametric;
  ok = ok && (svd_pts - parametric >= 0.01);
  for (const std::string& method :
       {"svd", "svd_sn", "svd_sm", "svd_pts", "parametric_1x1", "logits_kd"}) {
    ok = ok && mean_of(out.top1.at(method)) > rand_init;
  }
  ok = ok && out.seconds < 600.0;

  std::ostringstream os;
  os << "teacher acc " << out.teacher_accuracy << "; mean top1: rand "
     << rand_init << ", parametric " << parametric << ", svd " << svd
     << ", svd+pts " << svd_pts << "; " << out.seconds << " s";
  detail = os.str();
  return ok;
}

std::string manifest_metric_block(const fs::path& manifest) {
  std::ifstream in(manifest);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::size_t begin = text.find("[metrics]");
  const std::size_t end = text.find("[timing]");
  if (begin == std::string::npos || end == std::string::npos) return "";
  return text.substr(begin, end - begin);
}

std::string manifest_student_hash(const fs::path& manifest) {
  std::ifstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("student_final=", 0) == 0) return line;
  }
  return "";
}

bool criterion_determinism(std::string& detail) {
  const fs::path root_a = fs::temp_directory_path() / "kdep_accept_det_a";
  const fs::path root_b = fs::temp_directory_path() / "kdep_accept_det_b";
  std::ostringstream log;

  CliConfig cfg = default_base();
  // Small but complete: a full distill manifest in each root.
  cfg.set("data.per_class", "60");
  cfg.set("teacher.epochs", "12");
  cfg.set("train.epochs", "8");

  std::string metrics_a, metrics_b, hash_a, hash_b;
  for (int which = 0; which < 2; ++which) {
    const fs::path& root = which == 0 ? root_a : root_b;
    fs::remove_all(root);
    setenv("KDEP_RUN_ROOT", root.c_str(), 1);
    const DistillPaths dp = stage_distill(cfg, log);
    if (which == 0) {
      metrics_a = manifest_metric_block(dp.manifest);
      hash_a = manifest_student_hash(dp.manifest);
    } else {
      metrics_b = manifest_metric_block(dp.manifest);
      hash_b = manifest_student_hash(dp.manifest);
    }
    unsetenv("KDEP_RUN_ROOT");
  }
  fs::remove_all(root_a);
  fs::remove_all(root_b);

  const bool ok = !metrics_a.empty() && metrics_a == metrics_b &&
                  !hash_a.empty() && hash_a == hash_b;
  detail = ok ? "metric blocks and student hashes identical" : "mismatch";
  return ok;
}

// --- 8: container round trip ---------------------------------------------------

bool criterion_container(const fs::path& golden_dir, std::string& detail) {
  const fs::path golden = golden_dir / "golden_v1.tc";
  if (!fs::exists(golden)) {
    detail = "golden file missing: " + golden.string();
    return false;
  }
  std::ifstream in(golden, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  try {
    const TensorContainer c = parse_container(bytes);
    if (serialize_container(c) != bytes) {
      detail = "reserialization differs";
      return false;
    }
  } catch (const Error& e) {
    detail = e.what();
    return false;
  }

  std::string corrupt = bytes;
  corrupt[0] = 'Z';
  bool rejected_magic = false;
  try {
    parse_container(corrupt);
  } catch (const FormatError& e) {
    rejected_magic = e.offset() == 0;
  }

  std::string truncated = bytes;
  truncated.resize(truncated.size() - 5);
  bool rejected_truncation = false;
  try {
    parse_container(truncated);
  } catch (const FormatError&) {
    rejected_truncation = true;
  }

  detail = "round trip + rejection paths";
  return rejected_magic && rejected_truncation;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path golden_dir = argc > 1 ? fs::path(argv[1]) : fs::path("tests/golden");

  report(1, "worked-example-sn-sm-exact", criterion_appendix_exact());

  std::string detail;
  report(2, "theorem-verifier-4sigma", criterion_theorem(detail), detail);

  detail.clear();
  report(3, "svd-optimality", criterion_svd_optimality(detail), detail);

  detail.clear();
  report(4, "gradient-checks", criterion_grad_checks(detail), detail);

  detail.clear();
  report(5, "pts-statistics", criterion_pts_statistics(detail), detail);

  detail.clear();
  const PipelineOutcome outcome =
      run_grid(fs::temp_directory_path() / "kdep_accept_grid", {1, 2, 3});
  report(6, "directional-kdep-trend", criterion_directional_trend(outcome, detail),
         detail);

  detail.clear();
  report(7, "pipeline-determinism", criterion_determinism(detail), detail);

  detail.clear();
  report(8, "tensor-container-round-trip", criterion_container(golden_dir, detail),
         detail);

  fs::remove_all(fs::temp_directory_path() / "kdep_accept_grid");

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
