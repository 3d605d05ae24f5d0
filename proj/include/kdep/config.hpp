#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kdep/errors.hpp"
#include "kdep/hash.hpp"

namespace kdep {

// Run configuration: `key=value` lines from a config file plus `--key
// value` command-line overrides (flags win). Keys are namespaced per
// module; unknown keys are hard errors so typos cannot silently revert a
// setting to its default.

struct ConfigEntry {
  std::string key;
  std::string default_value;
  std::string help;
};

inline const std::vector<ConfigEntry>& config_registry() {
  static const std::vector<ConfigEntry> entries = {
      {"data.classes", "10", "number of classes in the pretraining corpus"},
      {"data.dim", "32", "sample dimensionality"},
      {"data.per_class", "200", "pretraining samples per class"},
      {"data.spread", "0.4", "within-class std of the pretraining corpus"},
      {"data.seed", "1", "seed for the pretraining draw"},
      {"data.subsample_fraction", "1.0", "per-class fraction of the corpus used for distillation"},
      {"data.subsample_seed", "1", "seed for the stratified subsample"},
      {"data.downstream_classes", "10", "number of downstream classes"},
      {"data.downstream_per_class", "60", "downstream training samples per class"},
      {"data.downstream_test_per_class", "150", "downstream test samples per class"},
      {"data.downstream_spread", "0.25", "within-class std of the downstream task"},
      {"data.downstream_seed", "1", "seed for the downstream draws"},
      {"teacher.hidden", "128", "teacher hidden width"},
      {"teacher.feat_dim", "64", "teacher penultimate width D_t"},
      {"teacher.epochs", "120", "teacher supervised training epochs"},
      {"teacher.lr0", "0.1", "teacher initial learning rate"},
      {"teacher.batch_size", "64", "teacher batch size"},
      {"teacher.weight_decay", "0.0", "teacher weight decay"},
      {"teacher.seed", "11", "teacher init/shuffle seed"},
      {"student.hidden", "64", "student hidden width"},
      {"student.feat_dim", "16", "student penultimate width D_s"},
      {"align.kind", "svd", "alignment: svd | cs_var | cs_rand | interp | parametric"},
      {"align.seed", "5", "seed for random channel selection"},
      {"align.head_position", "pre_relu", "parametric head input: pre_relu | post_relu"},
      {"transform.kind", "pts", "target transform: identity | sn | sm | pts"},
      {"transform.T", "0.1", "power temperature scaling T"},
      {"transform.n", "3", "power temperature scaling exponent n"},
      {"train.mode", "kdep", "kdep | supervised | logits_kd | parametric_kdep | none"},
      {"train.lr0", "0.01", "student initial learning rate"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.weight_decay", "0.0005", "student weight decay"},
      {"train.epochs", "120", "student training epochs"},
      {"train.batch_size", "64", "student batch size"},
      {"train.loss_weight", "1.0", "feature loss weight w"},
      {"train.temperature", "4.0", "logits KD temperature tau"},
      {"train.seed", "1", "student init/shuffle seed"},
      {"probe.mode", "linear", "probe mode: linear | finetune"},
      {"probe.epochs", "50", "probe training epochs"},
      {"probe.lr_grid", "0.01,0.001", "comma-separated probe learning rates (best-of)"},
      {"probe.batch_size", "64", "probe batch size"},
      {"probe.seed", "1", "probe init/shuffle seed"},
      {"theorem.sigma_list", "0.5,1,2,4", "comma-separated sigma grid"},
      {"theorem.sigma_s", "1.0", "student-side sigma"},
      {"theorem.samples", "1000000", "Monte-Carlo samples per grid point"},
      {"theorem.seed", "7", "Monte-Carlo seed"},
  };
  return entries;
}

class CliConfig {
 public:
  CliConfig() {
    for (const ConfigEntry& e : config_registry()) {
      values_[e.key] = e.default_value;
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end()) {
      throw ConfigError("unknown config key: " + key);
    }
    values_[key] = value;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      // Trim.
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected key=value");
      }
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      auto trim = [](std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
      };
      trim(key);
      trim(value);
      set(key, value);
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw ConfigError("");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: '" + v + "'");
    }
  }

  long get_long(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const long d = std::stol(v, &used);
      if (used != v.size()) throw ConfigError("");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an integer: '" + v + "'");
    }
  }

  std::uint64_t get_seed(const std::string& key) const {
    return static_cast<std::uint64_t>(get_long(key));
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError("config key " + key + " has a bad list entry: '" + tok + "'");
      }
    }
    if (out.empty()) throw ConfigError("config key " + key + " is an empty list");
    return out;
  }

  // Sorted key=value serialization of the keys with a given prefix set;
  // this string is what run-directory hashes are computed from.
  std::string serialize(const std::vector<std::string>& prefixes = {}) const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (!prefixes.empty()) {
        bool hit = false;
        for (const std::string& p : prefixes) {
          if (k.rfind(p, 0) == 0) {
            hit = true;
            break;
          }
        }
        if (!hit) continue;
      }
      out += k + "=" + v + "\n";
    }
    return out;
  }

  std::string hash_for(const std::vector<std::string>& prefixes) const {
    return hash_hex(fnv1a(serialize(prefixes)));
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace kdep
