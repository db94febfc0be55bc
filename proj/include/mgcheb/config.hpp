#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace mgcheb {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  Schedule schedule;  // base lr 0.001, decay at 25/35/45
  double weight_decay = 1e-4;
};

/// Everything a run needs. Serialized as flat `key = value` text, one entry per line.
struct ExperimentConfig {
  std::string dataset_name = "MUTAG";
  std::string dataset_dir = "data/MUTAG";
  ModelConfig model;
  TrainConfig train;
  std::size_t folds = 10;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const {
    model.validate();
    if (train.epochs == 0) throw ConfigError("epochs", "must be positive");
    if (train.batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (!(train.schedule.base_lr >= 0.0)) throw ConfigError("lr", "must be non-negative");
    if (!(train.schedule.gamma > 0.0 && train.schedule.gamma <= 1.0)) throw ConfigError("gamma", "must be in (0, 1]");
    if (!(train.weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
    for (std::size_t i = 1; i < train.schedule.milestones.size(); ++i)
      if (train.schedule.milestones[i] <= train.schedule.milestones[i - 1])
        throw ConfigError("milestones", "must be strictly increasing");
    if (folds < 2) throw ConfigError("folds", "must be >= 2");
    if (repeats == 0) throw ConfigError("repeats", "must be positive");
    if (jobs == 0) throw ConfigError("jobs", "must be positive");
  }
};

/// Keys accepted in configuration files, in echo order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "dataset_name", "dataset_dir", "fusion",      "k_order",     "conv_widths",       "fc_width",
      "n_classes",    "dropout",     "lr",          "gamma",       "epochs",            "milestones",
      "batch_size",   "weight_decay", "proj_hidden", "edge_hidden", "use_learned_edges", "learned_edge_recompute",
      "folds",        "repeats",     "seed",        "jobs"};
  return keys;
}

namespace detail {
inline double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw ConfigError(key, "bad number '" + value + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key, "bad number '" + value + "'");
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are rejected.
inline void apply_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto one_size = [&] {
    const auto v = detail::parse_size_list(key, value);
    if (v.size() != 1) throw ConfigError(key, "expected one positive integer");
    return v[0];
  };
  if (key == "dataset_name") {
    c.dataset_name = value;
  } else if (key == "dataset_dir") {
    c.dataset_dir = value;
  } else if (key == "lr") {
    c.train.schedule.base_lr = detail::parse_real(key, value);
  } else if (key == "gamma") {
    c.train.schedule.gamma = detail::parse_real(key, value);
  } else if (key == "epochs") {
    c.train.epochs = one_size();
  } else if (key == "milestones") {
    c.train.schedule.milestones = value.empty() ? std::vector<std::size_t>{} : detail::parse_size_list(key, value);
  } else if (key == "batch_size") {
    c.train.batch_size = one_size();
  } else if (key == "weight_decay") {
    c.train.weight_decay = detail::parse_real(key, value);
  } else if (key == "folds") {
    c.folds = one_size();
  } else if (key == "repeats") {
    c.repeats = one_size();
  } else if (key == "jobs") {
    c.jobs = one_size();
  } else if (key == "seed") {
    try {
      std::size_t pos = 0;
      c.seed = std::stoull(value, &pos);
      if (pos != value.size() || value.front() == '-') throw ConfigError(key, "bad seed '" + value + "'");
    } catch (const std::logic_error&) {
      throw ConfigError(key, "bad seed '" + value + "'");
    }
  } else if (key == "annotated_relations" || !apply_model_entry(c.model, key, value)) {
    throw ConfigError(key, "unknown key");
  }
}

/// Parses config text. Architecture defaults come from the dataset preset named by
/// `dataset_name` (if present), then every listed key overrides them. Errors name the key and line.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  std::vector<std::tuple<std::size_t, std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno), "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError(key, source + ":" + std::to_string(lineno) + ": duplicate key (first on line " +
                                 std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    entries.emplace_back(lineno, key, value);
  }
  ExperimentConfig c;
  for (const auto& [ln, key, value] : entries)
    if (key == "dataset_name") c.model = preset_config(value);
  for (const auto& [ln, key, value] : entries) {
    try {
      apply_entry(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key, source + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

/// Effective configuration in file syntax; parse_config_text() of this text reproduces `c`.
inline std::string config_echo(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : model_config_entries(c.model)) kv[k] = v;
  kv["dataset_name"] = c.dataset_name;
  kv["dataset_dir"] = c.dataset_dir;
  kv["lr"] = format_double(c.train.schedule.base_lr);
  kv["gamma"] = format_double(c.train.schedule.gamma);
  kv["epochs"] = std::to_string(c.train.epochs);
  kv["milestones"] = join_sizes(c.train.schedule.milestones);
  kv["batch_size"] = std::to_string(c.train.batch_size);
  kv["weight_decay"] = format_double(c.train.weight_decay);
  kv["folds"] = std::to_string(c.folds);
  kv["repeats"] = std::to_string(c.repeats);
  kv["seed"] = std::to_string(c.seed);
  kv["jobs"] = std::to_string(c.jobs);
  std::string out;
  for (const auto& k : config_keys()) out += k + " = " + kv.at(k) + "\n";
  return out;
}

}  // namespace mgcheb
