#include "tml/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <stdexcept>

#include "tml/common.hpp"

namespace tml {

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - r.mean) * (x - r.mean);
  r.stdev = std::sqrt(var / static_cast<double>(xs.size()));
  return r;
}

// Runs `tasks` with at most `jobs` in flight; results land at their index.
template <typename T, typename F>
std::vector<T> run_jobs(int count, int jobs, F&& task) {
  std::vector<T> results(static_cast<size_t>(count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) results[static_cast<size_t>(i)] = task(i);
    return results;
  }
  for (int start = 0; start < count; start += jobs) {
    const int end = std::min(count, start + jobs);
    std::vector<std::future<T>> futs;
    for (int i = start; i < end; ++i) {
      futs.push_back(std::async(std::launch::async, [&task, i] { return task(i); }));
    }
    for (int i = start; i < end; ++i) results[static_cast<size_t>(i)] = futs[static_cast<size_t>(i - start)].get();
  }
  return results;
}

void merge_event_rows(std::vector<EventGroupRow>& into, const std::vector<EventGroupRow>& add) {
  for (size_t i = 0; i < into.size(); ++i) {
    into[i].total += add[i].total;
    into[i].detected += add[i].detected;
  }
}

}  // namespace

void EvalConfig::validate() const {
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("threshold must lie in [0,1]");
  if (recall_targets.empty()) throw ConfigError("recall_targets must not be empty");
  for (double t : recall_targets) {
    if (t < 0.0 || t > 1.0) throw ConfigError("recall target " + format_double(t) + " outside [0,1]");
  }
  if (min_negative_ratio < 0.0) throw ConfigError("min_negative_ratio must be >= 0");
}

CvReport cross_validate(const Dataset& data, const TrainConfig& train_config,
                        const EvalConfig& eval_config, int k, uint64_t seed, int jobs) {
  train_config.validate();
  eval_config.validate();
  const FoldAssignment fa = split_by_procedure(data.manifest, k, mix_seed(seed, 0x5b717));

  auto run_fold = [&](int f) -> FoldReport {
    try {
      const std::vector<int> train_procs = fa.train_procedures(f);
      const std::vector<int>& test_procs = fa.procedures_in_fold[static_cast<size_t>(f)];
      {
        std::set<int> train_set(train_procs.begin(), train_procs.end());
        for (int pid : test_procs) {
          if (train_set.count(pid)) {
            throw std::logic_error("procedure " + std::to_string(pid) + " leaked into training");
          }
        }
      }
      TrainConfig cfg = train_config;
      cfg.seed = mix_seed(train_config.seed, 0xf01d0 + static_cast<uint64_t>(f));
      TrainResult tr = train(cfg, data, make_train_view(data.manifest, train_procs));

      FoldReport rep;
      rep.fold = f;
      rep.test_procedures = test_procs;
      rep.scored = score_procedures(tr.model, data, test_procs);
      rep.history = std::move(tr.history);
      for (const ScoredFrame& s : rep.scored) (s.label == 1 ? rep.test_positives : rep.test_negatives) += 1;
      rep.auc = roc_and_auc(rep.scored).auc;
      rep.at_threshold = threshold_metrics(rep.scored, eval_config.threshold);
      for (double target : eval_config.recall_targets) {
        rep.recall_at[target] = recall_at_specificity(rep.scored, target);
      }
      return rep;
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
    }
  };

  CvReport report;
  report.folds = run_jobs<FoldReport>(k, jobs, run_fold);

  std::vector<double> aucs, accs, sens, specs, precs;
  for (const FoldReport& rep : report.folds) {
    aucs.push_back(rep.auc);
    accs.push_back(rep.at_threshold.accuracy);
    sens.push_back(rep.at_threshold.sensitivity);
    specs.push_back(rep.at_threshold.specificity);
    precs.push_back(rep.at_threshold.precision);
    if (rep.test_positives > 0 &&
        static_cast<double>(rep.test_negatives) / static_cast<double>(rep.test_positives) <
            eval_config.min_negative_ratio) {
      report.warnings.push_back(
          "fold " + std::to_string(rep.fold) + ": test negative:positive ratio " +
          format_double(static_cast<double>(rep.test_negatives) /
                        static_cast<double>(rep.test_positives)) +
          " below floor " + format_double(eval_config.min_negative_ratio));
    }
  }
  report.auc = mean_std(aucs);
  report.accuracy = mean_std(accs);
  report.sensitivity = mean_std(sens);
  report.specificity = mean_std(specs);
  report.precision = mean_std(precs);
  for (double target : eval_config.recall_targets) {
    std::vector<double> rs;
    for (const FoldReport& rep : report.folds) rs.push_back(rep.recall_at.at(target).recall);
    report.recall_at[target] = mean_std(rs);
  }

  for (double target : eval_config.recall_targets) {
    EventDetectionReport pooled;
    pooled.target_specificity = target;
    pooled.threshold = std::nan("");  // thresholds are per fold
    pooled.by_size = {{"small"}, {"medium"}, {"large"}};
    pooled.by_morphology = {{"sessile"}, {"pedunculated"}, {"undefined"}};
    for (const FoldReport& rep : report.folds) {
      const EventDetectionReport r = event_detection(rep.scored, target, data.manifest.events);
      pooled.total_events += r.total_events;
      pooled.detected_events += r.detected_events;
      merge_event_rows(pooled.by_size, r.by_size);
      merge_event_rows(pooled.by_morphology, r.by_morphology);
      pooled.per_event.insert(pooled.per_event.end(), r.per_event.begin(), r.per_event.end());
    }
    std::sort(pooled.per_event.begin(), pooled.per_event.end());
    report.events_at[target] = std::move(pooled);
  }
  return report;
}

ImbalanceReport imbalance_sweep(const Dataset& data, const TrainConfig& train_config,
                                const EvalConfig& eval_config, const std::vector<int>& degrees,
                                int repeats, uint64_t seed, int jobs) {
  train_config.validate();
  eval_config.validate();
  if (train_config.method == TrainMethod::CrossEntropyBaseline) {
    throw ConfigError("imbalance sweep compares the baseline against a triplet method; "
                      "set method to triplet_batch_all or triplet_batch_hard");
  }
  if (degrees.empty()) throw ConfigError("imbalance sweep needs at least one degree");
  for (int d : degrees) {
    if (d < 1) throw ConfigError("imbalance degree must be >= 1");
  }
  if (repeats < 1) throw ConfigError("repeats must be >= 1");

  // fixed common test split: one fold held out once
  const FoldAssignment fa = split_by_procedure(data.manifest, 5, mix_seed(seed, 0x77e57));
  const std::vector<int> test_procs = fa.procedures_in_fold[0];
  const std::vector<int> train_procs = fa.train_procedures(0);
  const TrainView base = make_train_view(data.manifest, train_procs);

  const long long P = static_cast<long long>(base.positives.size());
  const long long N = base.negative_count();
  if (P == 0) throw ConfigError("imbalance sweep: no positive frames in the training pool");
  const double available_ratio = static_cast<double>(N) / static_cast<double>(P);
  for (int d : degrees) {
    if (static_cast<long long>(d) * P > N) {
      throw ConfigError("imbalance degree " + std::to_string(d) + " unrealizable: only " +
                        format_double(available_ratio) + " negatives per positive available");
    }
  }

  // flat negative list in (procedure, frame) order for reproducible subsampling
  std::vector<std::pair<int, int>> all_negs;
  for (const auto& [pid, frames] : base.negatives_by_proc) {
    for (int f : frames) all_negs.emplace_back(pid, f);
  }

  struct Cell {
    int degree;
    int repeat;
    TrainMethod method;
  };
  std::vector<Cell> todo;
  for (int d : degrees) {
    for (int r = 0; r < repeats; ++r) {
      todo.push_back({d, r, TrainMethod::CrossEntropyBaseline});
      todo.push_back({d, r, train_config.method});
    }
  }

  auto run_cell = [&](int idx) -> SweepCell {
    const Cell& cell = todo[static_cast<size_t>(idx)];
    try {
      const uint64_t cell_seed =
          mix_seed(mix_seed(seed, static_cast<uint64_t>(cell.degree)), static_cast<uint64_t>(cell.repeat));

      // the negative subsample is shared by both methods of a repeat
      std::vector<std::pair<int, int>> pool = all_negs;
      Rng sub_rng(mix_seed(cell_seed, 0x5b5));
      const size_t need = static_cast<size_t>(cell.degree) * static_cast<size_t>(P);
      for (size_t i = 0; i < need; ++i) {
        const size_t j = i + sub_rng.index(pool.size() - i);
        std::swap(pool[i], pool[j]);
      }
      pool.resize(need);
      // stratified batches need two procedures with negatives
      if (need >= 2) {
        std::set<int> procs;
        for (auto& [pid, f] : pool) procs.insert(pid);
        if (procs.size() < 2 && base.negatives_by_proc.size() >= 2) {
          for (const auto& [pid, frames] : base.negatives_by_proc) {
            if (pid != pool.front().first) {
              pool.back() = {pid, frames.front()};
              break;
            }
          }
        }
      }
      TrainView view;
      view.positives = base.positives;
      for (auto& [pid, f] : pool) view.negatives_by_proc[pid].push_back(f);
      for (auto& [pid, frames] : view.negatives_by_proc) std::sort(frames.begin(), frames.end());

      TrainConfig cfg = train_config;
      cfg.method = cell.method;
      cfg.seed = mix_seed(cell_seed, cell.method == TrainMethod::CrossEntropyBaseline ? 0xbce : 0x711);
      const TrainResult tr = train(cfg, data, view);
      const double auc = roc_and_auc(score_procedures(tr.model, data, test_procs)).auc;
      return {cell.degree, cell.repeat, cell.method, auc};
    } catch (const std::exception& e) {
      throw std::runtime_error("sweep degree " + std::to_string(cell.degree) + " repeat " +
                               std::to_string(cell.repeat) + " (" + to_string(cell.method) +
                               "): " + e.what());
    }
  };

  ImbalanceReport report;
  report.test_procedures = test_procs;
  report.cells = run_jobs<SweepCell>(static_cast<int>(todo.size()), jobs, run_cell);

  for (int d : degrees) {
    for (TrainMethod m : {TrainMethod::CrossEntropyBaseline, train_config.method}) {
      std::vector<double> aucs;
      for (const SweepCell& c : report.cells) {
        if (c.degree == d && c.method == m) aucs.push_back(c.auc);
      }
      report.rows.push_back({d, m, mean_std(aucs)});
    }
  }
  return report;
}

}  // namespace tml
