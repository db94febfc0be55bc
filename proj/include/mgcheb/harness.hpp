#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "data_tu.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace mgcheb {

inline double accuracy(Model& model, const std::vector<const GraphRecord*>& records, std::size_t chunk = 32) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < records.size(); b += chunk) {
    const std::vector<const GraphRecord*> part(records.begin() + static_cast<std::ptrdiff_t>(b),
                                               records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), b + chunk)));
    const Batch batch = make_batch(part);
    const auto pred = argmax_rows(predict_logits(model, batch));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

struct FoldOutcome {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double final_loss = 0.0;  // mean training loss over the last epoch
};

/// Trains a fresh model on `train` for the configured epochs (shuffled mini-batches, Adam, step
/// decay) and scores the final-epoch model on `test`. Fully determined by `seed`.
/// If `trained` is non-null the model is moved into it.
inline FoldOutcome train_fold(const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t x_in,
                              const std::vector<const GraphRecord*>& train, const std::vector<const GraphRecord*>& test,
                              std::uint64_t seed, std::optional<Model>* trained = nullptr) {
  if (train.empty()) throw Error("train_fold: empty training set");
  Model model = Model::build(mcfg, x_in, derive_seed(seed, 1));
  Rng order_rng(derive_seed(seed, 2));
  Rng dropout_rng(derive_seed(seed, 3));
  Adam adam(tcfg.weight_decay);
  const auto params = model.parameters();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  FoldOutcome out;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    const double lr = tcfg.schedule.lr(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += tcfg.batch_size) {
      std::vector<const GraphRecord*> part;
      for (std::size_t i = b; i < std::min(order.size(), b + tcfg.batch_size); ++i) part.push_back(train[order[i]]);
      const Batch batch = make_batch(part);
      model.zero_grad();
      Tape tape;
      const Var loss = classification_loss(model.forward(tape, batch, true, &dropout_rng), batch);
      tape.backward(loss);
      adam.step(params, lr);
      loss_sum += loss.value()[0];
      ++batches;
    }
    out.final_loss = loss_sum / static_cast<double>(batches);
  }
  out.test_accuracy = accuracy(model, test);
  out.train_accuracy = accuracy(model, train);
  if (trained) trained->emplace(std::move(model));
  return out;
}

struct FoldRecord {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::size_t test_size = 0;
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
};

/// Results of repeated k-fold cross-validation.
///
/// to_text() and to_csv() depend only on the configuration, the seed and the accuracies, so
/// identical seeds give byte-identical output. Wall-clock time is kept out of both and
/// written separately.
struct RunReport {
  std::string config_echo;
  std::uint64_t master_seed = 0;
  std::vector<FoldRecord> runs;
  double wall_seconds = 0.0;

  std::vector<double> accuracies() const {
    std::vector<double> a;
    for (const auto& r : runs) a.push_back(r.test_accuracy);
    return a;
  }

  double mean() const {
    const auto a = accuracies();
    if (a.empty()) return 0.0;
    return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  }

  /// Population standard deviation over all fold-level accuracies.
  double stddev() const {
    const auto a = accuracies();
    if (a.empty()) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : a) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(a.size()));
  }

  /// Mean test accuracy of each fold index over repeats.
  std::vector<double> per_fold_means(std::size_t folds) const {
    std::vector<double> sum(folds, 0.0);
    std::vector<std::size_t> cnt(folds, 0);
    for (const auto& r : runs) {
      sum[r.fold] += r.test_accuracy;
      ++cnt[r.fold];
    }
    for (std::size_t f = 0; f < folds; ++f) sum[f] = cnt[f] ? sum[f] / static_cast<double>(cnt[f]) : 0.0;
    return sum;
  }

  /// Columns: repeat,fold,seed,test_size,test_accuracy,train_accuracy
  std::string to_csv() const {
    std::string s = "repeat,fold,seed,test_size,test_accuracy,train_accuracy\n";
    for (const auto& r : runs)
      s += std::to_string(r.repeat) + "," + std::to_string(r.fold) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.test_size) + "," + format_double(r.test_accuracy) + "," + format_double(r.train_accuracy) +
           "\n";
    return s;
  }

  std::string to_text() const {
    std::ostringstream o;
    o << "# run report\n";
    o << "master_seed = " << master_seed << "\n";
    o << "runs = " << runs.size() << "\n";
    o << "mean_accuracy = " << format_double(mean()) << "\n";
    o << "std_accuracy = " << format_double(stddev()) << "\n";
    char pct[64];
    std::snprintf(pct, sizeof pct, "%.2f +- %.2f %%", 100.0 * mean(), 100.0 * stddev());
    o << "summary = " << pct << "\n";
    o << "\n[config]\n" << config_echo;
    o << "\n[runs]\n" << to_csv();
    return o.str();
  }
};

/// Runs `n_tasks` independent jobs on up to `jobs` threads; results land by index so ordering
/// never depends on scheduling. The first exception is rethrown after all workers finish.
inline void run_parallel(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n_tasks));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n_tasks;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

/// Called after each fold finishes (possibly from a worker thread) with the trained model.
using FoldCallback = std::function<void(const FoldRecord&, Model&)>;

/// k folds × repeats. Repeat r uses a fresh stratified split seeded from the master seed; each
/// (repeat, fold) run gets its own derived training seed.
inline RunReport cross_validate(const ExperimentConfig& cfg, const Dataset& ds, const FoldCallback& on_fold = {}) {
  cfg.validate();
  if (cfg.model.n_classes != ds.n_classes)
    throw ConfigError("n_classes", "model has " + std::to_string(cfg.model.n_classes) + " classes, dataset has " +
                                       std::to_string(ds.n_classes));
  const auto start = std::chrono::steady_clock::now();
  const auto labels = ds.labels();
  std::vector<FoldPlan> plans;
  for (std::size_t r = 0; r < cfg.repeats; ++r) plans.push_back(stratified_folds(labels, cfg.folds, derive_seed(cfg.seed, r, 0)));

  RunReport report;
  report.config_echo = config_echo(cfg);
  report.master_seed = cfg.seed;
  report.runs.resize(cfg.repeats * cfg.folds);
  run_parallel(report.runs.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t r = task / cfg.folds, f = task % cfg.folds;
    std::vector<const GraphRecord*> train, test;
    for (auto i : plans[r].train_indices(f)) train.push_back(&ds.graphs[i]);
    for (auto i : plans[r].folds[f]) test.push_back(&ds.graphs[i]);
    FoldRecord rec;
    rec.repeat = r;
    rec.fold = f;
    rec.seed = derive_seed(cfg.seed, r, f + 1);
    rec.test_size = test.size();
    std::optional<Model> trained;
    const auto outcome = train_fold(cfg.model, cfg.train, ds.x_in, train, test, rec.seed, on_fold ? &trained : nullptr);
    rec.test_accuracy = outcome.test_accuracy;
    rec.train_accuracy = outcome.train_accuracy;
    report.runs[task] = rec;
    if (on_fold) on_fold(rec, *trained);
  });
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct SweepRow {
  FusionMethod fusion;
  std::size_t k_order;
  double mean_accuracy;
  double std_accuracy;
  std::size_t wins;
  std::vector<double> fold_accuracy;  // per fold, averaged over repeats
};

struct SweepResult {
  std::vector<SweepRow> rows;

  /// Columns: fusion,k,mean_accuracy,std_accuracy,wins
  std::string to_csv() const {
    std::string s = "fusion,k,mean_accuracy,std_accuracy,wins\n";
    for (const auto& r : rows)
      s += std::string(to_string(r.fusion)) + "," + std::to_string(r.k_order) + "," + format_double(r.mean_accuracy) +
           "," + format_double(r.std_accuracy) + "," + std::to_string(r.wins) + "\n";
    return s;
  }

  /// Best (highest mean) row per fusion method, for a quick read.
  std::string summary() const {
    std::ostringstream o;
    for (auto f : kAllFusions) {
      const SweepRow* best = nullptr;
      for (const auto& r : rows)
        if (r.fusion == f && (!best || r.mean_accuracy > best->mean_accuracy)) best = &r;
      if (!best) continue;
      char line[128];
      std::snprintf(line, sizeof line, "%-16s best K=%zu  %.2f +- %.2f %%\n", std::string(to_string(f)).c_str(),
                    best->k_order, 100.0 * best->mean_accuracy, 100.0 * best->std_accuracy);
      o << line;
    }
    return o.str();
  }
};

/// Cross-validates every (fusion, K) pair with identical fold plans. The single-edge baseline
/// uses annotated edges only; every other fusion adds the learned relation. For each K and
/// each fold, the fusion with the highest fold accuracy (first listed on ties) scores a win.
inline SweepResult fusion_sweep(const ExperimentConfig& base, const Dataset& ds, const std::vector<std::size_t>& k_orders,
                                const std::vector<FusionMethod>& fusions) {
  SweepResult out;
  for (auto k : k_orders) {
    const std::size_t first = out.rows.size();
    for (auto f : fusions) {
      ExperimentConfig cfg = base;
      cfg.model.fusion = f;
      cfg.model.k_order = k;
      cfg.model.use_learned_edges = f != FusionMethod::SingleEdge;
      const RunReport rep = cross_validate(cfg, ds);
      out.rows.push_back({f, k, rep.mean(), rep.stddev(), 0, rep.per_fold_means(cfg.folds)});
    }
    for (std::size_t fold = 0; fold < base.folds; ++fold) {
      std::size_t best = first;
      for (std::size_t i = first; i < out.rows.size(); ++i)
        if (out.rows[i].fold_accuracy[fold] > out.rows[best].fold_accuracy[fold]) best = i;
      if (best < out.rows.size()) ++out.rows[best].wins;
    }
  }
  return out;
}

}  // namespace mgcheb
