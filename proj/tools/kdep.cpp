// kdep — feature-distillation pre-training at desk scale.
//
// Subcommands wire the pipeline end to end over deterministic synthetic
// data: generate datasets, train a teacher, extract its features, fit a
// dimension aligner plus statistics transform, distill a student, probe
// downstream transfer, and aggregate reports.

#include <cstdio>
#include <cstring>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "kdep/config.hpp"
#include "kdep/errors.hpp"
#include "kdep/pipeline.hpp"

namespace {

using namespace kdep;

int usage() {
  std::cout <<
      "usage: kdep <subcommand> [--config FILE] [--key value ...]\n"
      "\n"
      "subcommands:\n"
      "  gen-data        generate the pretraining and downstream datasets\n"
      "  train-teacher   supervised training of the teacher network\n"
      "  extract         cache teacher features/logits over the distillation corpus\n"
      "  fit-align       fit the dimension aligner and target transform\n"
      "  distill         pre-train the student under train.mode\n"
      "  probe           linear-probe (or finetune) the student downstream\n"
      "  stats           print the std-ratio diagnostics for the current aligner\n"
      "  verify-theorem  Monte-Carlo check of the channel-domination identity\n"
      "  report          run every method preset and emit the comparison CSV\n"
      "\n"
      "config keys (file line `key=value`, flag `--key value`; flags win):\n";
  for (const ConfigEntry& e : config_registry()) {
    std::printf("  %-33s default %-12s %s\n", e.key.c_str(),
                e.default_value.c_str(), e.help.c_str());
  }
  std::cout << "\nenvironment: KDEP_RUN_ROOT overrides the output root (default ./runs)\n";
  return 0;
}

CliConfig parse_config(int argc, char** argv) {
  CliConfig cfg;
  // Config file first, then flag overrides.
  for (int i = 2; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0) {
      if (i + 1 >= argc) throw ConfigError("--config needs a file argument");
      cfg.load_file(argv[i + 1]);
      ++i;
    }
  }
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config") {
      ++i;
      continue;
    }
    if (arg.rfind("--", 0) != 0) {
      throw ConfigError("expected --key value, got '" + arg + "'");
    }
    if (i + 1 >= argc) throw ConfigError("flag " + arg + " needs a value");
    cfg.set(arg.substr(2), argv[i + 1]);
    ++i;
  }
  return cfg;
}

int run(int argc, char** argv) {
  const std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") return usage();

  const CliConfig cfg = parse_config(argc, argv);
  std::ostream& log = std::cout;

  if (cmd == "gen-data") {
    stage_gen_data(cfg, log);
  } else if (cmd == "train-teacher") {
    const TeacherPaths p = stage_train_teacher(cfg, log);
    const Dataset pretrain =
        dataset_from_container(read_container(data_paths(cfg).pretrain));
    const Network teacher = network_from_container(read_container(p.net));
    log << "teacher pretrain-set accuracy: "
        << teacher_pretrain_accuracy(teacher, pretrain) << "\n";
  } else if (cmd == "extract") {
    stage_extract(cfg, log);
  } else if (cmd == "fit-align") {
    stage_fit_align(cfg, log);
  } else if (cmd == "distill") {
    stage_distill(cfg, log);
  } else if (cmd == "probe") {
    const ProbePaths p = stage_probe(cfg, log);
    log << "probe top-1: " << read_probe_top1(p.result) << "\n";
  } else if (cmd == "stats") {
    const AlignPaths p = stage_fit_align(cfg, log);
    std::ifstream in(p.stats_csv);
    log << in.rdbuf();
  } else if (cmd == "verify-theorem") {
    Theorem1Config tcfg;
    tcfg.sigma_list = cfg.get_double_list("theorem.sigma_list");
    tcfg.sigma_s = cfg.get_double("theorem.sigma_s");
    tcfg.samples = static_cast<std::size_t>(cfg.get_long("theorem.samples"));
    tcfg.seed = cfg.get_seed("theorem.seed");
    const std::vector<Theorem1Row> rows = verify_theorem1(tcfg);
    std::string csv = "sigma,estimate,analytic,stderr,pass\n";
    for (const Theorem1Row& r : rows) {
      csv += format_double(r.sigma) + "," + format_double(r.estimate) + "," +
             format_double(r.analytic) + "," + format_double(r.std_error) + "," +
             (r.pass ? "1" : "0") + "\n";
    }
    const fs::path dir = stage_dir(cfg, StageKeys::theorem(), "theorem");
    write_file_atomic(dir / "theorem.csv", csv);
    log << csv;
    for (const Theorem1Row& r : rows) {
      if (!r.pass) throw NumericError("theorem verification failed at sigma=" +
                                      format_double(r.sigma));
    }
  } else if (cmd == "report") {
    const std::vector<ReportRow> rows = run_report(cfg, log);
    std::string csv = report_csv_header() + "\n";
    for (const ReportRow& r : rows) csv += report_row_csv(r) + "\n";
    const fs::path out = run_root() / ("report-" + cfg.hash_for({}) + ".csv");
    write_file_atomic(out, csv);
    log << csv << "report written to " << out.string() << "\n";
  } else {
    std::cerr << "unknown subcommand: " << cmd << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return 1;
  }
  try {
    return run(argc, argv);
  } catch (const kdep::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const kdep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
