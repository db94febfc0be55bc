// Command-line front end: train, eval, sweep, bench, analyze eigvals.
//
// Every configuration key is also a flag (`--k_order 5`). Flags override the file given with
// --config. All outputs go under --out (default: out).
//
// Exit codes: 0 success, 1 configuration or usage error, 2 dataset error, 3 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mgcheb/mgcheb.hpp"

namespace fs = std::filesystem;
using namespace mgcheb;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  std::map<std::string, std::string> overrides;  // filled from the per-key flags
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("config", "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string line_key(const std::string& raw) {
  std::string line = raw.substr(0, raw.find('#'));
  const auto eq = line.find('=');
  if (eq == std::string::npos) return "";
  return detail::trim(line.substr(0, eq));
}

// File lines for overridden keys are commented out rather than removed, so errors in the
// remaining lines keep their original line numbers. When a dataset name is given but no
// directory, the directory defaults to data/<name>.
ExperimentConfig resolve_config(const Common& common) {
  const std::string source = common.config_path.empty() ? "<flags>" : common.config_path;
  std::string file_text = common.config_path.empty() ? "" : read_file(common.config_path);
  std::string merged;
  std::istringstream in(file_text);
  std::string line;
  bool has_dir = common.overrides.count("dataset_dir") > 0;
  std::string name;
  while (std::getline(in, line)) {
    const std::string key = line_key(line);
    if (key == "dataset_dir") has_dir = true;
    if (key == "dataset_name") name = detail::trim(line.substr(line.find('=') + 1, line.find('#') - line.find('=') - 1));
    merged += (common.overrides.count(key) ? "# " : "") + line + "\n";
  }
  for (const auto& [k, v] : common.overrides) {
    merged += k + " = " + v + "\n";
    if (k == "dataset_name") name = v;
  }
  if (!has_dir && !name.empty()) merged += "dataset_dir = " + (fs::path("data") / name).string() + "\n";
  ExperimentConfig cfg = parse_config_text(merged, source);
  cfg.validate();
  return cfg;
}

Dataset load_dataset(const ExperimentConfig& cfg) { return parse_tu(cfg.dataset_dir, cfg.dataset_name); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

fs::path prepare_out(const Common& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

std::vector<std::size_t> size_list(const std::string& flag, const std::string& s) {
  return detail::parse_size_list(flag, s);
}

std::vector<FusionMethod> fusion_list(const std::string& s) {
  std::vector<FusionMethod> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto f = parse_fusion(detail::trim(tok));
    if (!f) throw ConfigError("fusion", "unknown fusion '" + tok + "'");
    out.push_back(*f);
  }
  if (out.empty()) throw ConfigError("fusion", "empty list");
  return out;
}

std::string all_fusions_csv() {
  std::string s;
  for (auto f : kAllFusions) s += (s.empty() ? "" : ",") + std::string(to_string(f));
  return s;
}

int cmd_train(const Common& common) {
  const ExperimentConfig cfg = resolve_config(common);
  const Dataset ds = load_dataset(cfg);
  const fs::path out = prepare_out(common);
  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);
  std::mutex io;
  const RunReport rep = cross_validate(cfg, ds, [&](const FoldRecord& r, Model& m) {
    save_checkpoint(m, ckpt_dir / ("repeat" + std::to_string(r.repeat) + "_fold" + std::to_string(r.fold) + ".ckpt"));
    std::lock_guard<std::mutex> lock(io);
    std::fprintf(stderr, "repeat %zu fold %zu: test %.4f train %.4f\n", r.repeat, r.fold, r.test_accuracy,
                 r.train_accuracy);
  });
  write_text(out / "report.txt", rep.to_text());
  write_text(out / "report.csv", rep.to_csv());
  write_text(out / "timing.txt", "wall_seconds = " + format_double(rep.wall_seconds) + "\njobs = " +
                                     std::to_string(cfg.jobs) + "\n");
  std::printf("%s: %zu runs, accuracy %.2f +- %.2f %%\n", cfg.dataset_name.c_str(), rep.runs.size(), 100.0 * rep.mean(),
              100.0 * rep.stddev());
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, std::optional<std::size_t> repeat,
             std::optional<std::size_t> fold) {
  const ExperimentConfig cfg = resolve_config(common);
  const Dataset ds = load_dataset(cfg);
  Model model = load_checkpoint(checkpoint);
  if (model.x_in() != ds.x_in)
    throw ConfigError("checkpoint", "model expects " + std::to_string(model.x_in()) + " input features, dataset has " +
                                        std::to_string(ds.x_in));
  if (model.config().n_classes != ds.n_classes) throw ConfigError("n_classes", "checkpoint and dataset disagree");
  std::vector<const GraphRecord*> subset;
  std::string scope = "all graphs";
  if (fold) {
    // Rebuilds the same split cross_validate used for this (repeat, fold).
    const std::size_t r = repeat.value_or(0);
    if (*fold >= cfg.folds) throw ConfigError("fold", "must be < folds");
    const auto plan = stratified_folds(ds.labels(), cfg.folds, derive_seed(cfg.seed, r, 0));
    for (auto i : plan.folds[*fold]) subset.push_back(&ds.graphs[i]);
    scope = "repeat " + std::to_string(r) + " fold " + std::to_string(*fold) + " test split";
  } else {
    for (const auto& g : ds.graphs) subset.push_back(&g);
  }
  const double acc = accuracy(model, subset);
  const fs::path out = prepare_out(common);
  write_text(out / "eval.txt", "checkpoint = " + checkpoint + "\nscope = " + scope + "\ngraphs = " +
                                   std::to_string(subset.size()) + "\naccuracy = " + format_double(acc) + "\n");
  std::printf("accuracy %.4f on %zu graphs (%s)\n", acc, subset.size(), scope.c_str());
  return 0;
}

int cmd_sweep(const Common& common, const std::string& ks, const std::string& fusions) {
  const ExperimentConfig cfg = resolve_config(common);
  const Dataset ds = load_dataset(cfg);
  const SweepResult res = fusion_sweep(cfg, ds, size_list("k", ks), fusion_list(fusions));
  const fs::path out = prepare_out(common);
  write_text(out / "sweep.csv", res.to_csv());
  write_text(out / "sweep_summary.txt", res.summary() + "\n[config]\n" + config_echo(cfg));
  std::printf("%s", res.summary().c_str());
  return 0;
}

int cmd_bench(const Common& common, const std::string& fusions, const std::string& ks, const std::string& ns,
              const BenchOptions& opts) {
  const ExperimentConfig cfg = resolve_config(common);
  const BenchResult res = bench_forward(fusion_list(fusions), size_list("k", ks), size_list("n", ns), cfg.seed, opts);
  const fs::path out = prepare_out(common);
  write_text(out / "bench.csv", res.to_csv());
  std::ostringstream s;
  for (const auto& r : res.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-16s K=%zu N=%-7zu %10.3f ms (mad %.3f)\n", std::string(to_string(r.fusion)).c_str(),
                  r.k_order, r.n, r.median_ms, r.mad_ms);
    s << line;
  }
  write_text(out / "bench_summary.txt", s.str());
  std::printf("%s", s.str().c_str());
  return 0;
}

int cmd_eigvals(const Common& common, const std::string& powers_s, std::size_t bins) {
  const ExperimentConfig cfg = resolve_config(common);
  const Dataset ds = load_dataset(cfg);
  std::vector<int> powers;
  for (auto p : size_list("powers", powers_s)) powers.push_back(static_cast<int>(p));
  const EigenHistogram h = eigen_histogram(ds.graphs, powers, bins);
  const fs::path out = prepare_out(common);
  write_text(out / "eigvals.csv", h.to_csv());
  std::ostringstream s;
  s << "dataset = " << cfg.dataset_name << "\neigenvalues = " << h.total << "\nmin = " << format_double(h.min_value)
    << "\nmax = " << format_double(h.max_value) << "\n";
  for (std::size_t p = 0; p < powers.size(); ++p)
    s << "central_mass_power_" << powers[p] << " = " << format_double(h.central_mass(p)) << "\n";
  write_text(out / "eigvals_summary.txt", s.str());
  std::printf("%s", s.str().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multigraph Chebyshev graph convolution: training, evaluation and analysis"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "key = value configuration file");
  app.add_option("--out", common.out_dir, "output directory")->capture_default_str();

  std::map<std::string, std::string> flag_values;
  for (const auto& key : config_keys()) {
    std::string names = "--" + key;
    if (key == "dataset_name") names += ",--dataset";
    app.add_option(names, flag_values[key], "overrides '" + key + "' from the config file")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  auto* train = app.add_subcommand("train", "repeated k-fold cross-validation; writes reports and checkpoints");

  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
  std::string checkpoint;
  std::optional<std::size_t> eval_repeat, eval_fold;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--repeat", eval_repeat, "repeat index of the split (with --fold)");
  eval->add_option("--fold", eval_fold, "score only this fold's test split");

  auto* sweep = app.add_subcommand("sweep", "every fusion and K on identical folds");
  std::string sweep_k = "2,3,4,5,6", sweep_fusions = all_fusions_csv();
  sweep->add_option("--k", sweep_k, "comma-separated K values")->capture_default_str();
  sweep->add_option("--fusion", sweep_fusions, "comma-separated fusion methods")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "forward-pass timing on random graphs");
  std::string bench_fusions = "single,concat,2d", bench_k = "4", bench_n = "100,1000,10000";
  BenchOptions bench_opts;
  bench->add_option("--fusion", bench_fusions, "comma-separated fusion methods")->capture_default_str();
  bench->add_option("--k", bench_k, "comma-separated K values")->capture_default_str();
  bench->add_option("--n", bench_n, "comma-separated node counts")->capture_default_str();
  bench->add_option("--iterations", bench_opts.iterations, "timed iterations (>= 20)")->capture_default_str();
  bench->add_option("--warmup", bench_opts.warmup, "untimed warmup iterations (>= 3)")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "dataset analyses");
  analyze->require_subcommand(1);
  auto* eigvals = analyze->add_subcommand("eigvals", "histogram of rescaled-Laplacian eigenvalue powers");
  std::string powers = "1,2,3";
  std::size_t bins = 21;
  eigvals->add_option("--powers", powers, "comma-separated powers")->capture_default_str();
  eigvals->add_option("--bins", bins, "histogram bins over [-1, 1]")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (const auto& key : config_keys())
    if (app.count("--" + key) > 0) common.overrides[key] = flag_values[key];

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, eval_repeat, eval_fold);
    if (*sweep) return cmd_sweep(common, sweep_k, sweep_fusions);
    if (*bench) return cmd_bench(common, bench_fusions, bench_k, bench_n, bench_opts);
    if (*eigvals) return cmd_eigvals(common, powers, bins);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
