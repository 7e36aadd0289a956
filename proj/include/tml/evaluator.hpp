#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tml/metrics.hpp"
#include "tml/trainer.hpp"

namespace tml {

struct EvalConfig {
  double threshold = 0.5;  // operating point for the accuracy block
  std::vector<double> recall_targets = {0.80, 0.90, 0.95};
  double min_negative_ratio = 100.0;  // test neg:pos floor before a warning

  void validate() const;
};

struct FoldReport {
  int fold = 0;
  double auc = 0.0;
  ThresholdMetrics at_threshold{};
  std::map<double, OperatingPoint> recall_at;  // target -> operating point
  long long test_positives = 0;
  long long test_negatives = 0;
  std::vector<int> test_procedures;
  std::vector<ScoredFrame> scored;
  TrainHistory history;
};

struct MeanStd {
  double mean = 0.0;
  double stdev = 0.0;  // population standard deviation over folds
};

struct CvReport {
  std::vector<FoldReport> folds;
  MeanStd auc, accuracy, sensitivity, specificity, precision;
  std::map<double, MeanStd> recall_at;
  // events pooled across folds, each judged at its own fold's threshold
  std::map<double, EventDetectionReport> events_at;
  std::vector<std::string> warnings;
};

CvReport cross_validate(const Dataset& data, const TrainConfig& train_config,
                        const EvalConfig& eval_config, int k, uint64_t seed, int jobs = 1);

struct SweepCell {
  int degree = 0;
  int repeat = 0;
  TrainMethod method{};
  double auc = 0.0;
};

struct ImbalanceRow {
  int degree = 0;
  TrainMethod method{};
  MeanStd auc;
};

struct ImbalanceReport {
  std::vector<SweepCell> cells;
  std::vector<ImbalanceRow> rows;  // degree-major, baseline before the TL method
  std::vector<int> test_procedures;
};

// Fixed common test split; per degree and repeat, rebuilds the training pool
// with `degree` negatives per positive (fresh subsample each repeat) and
// trains both the BCE baseline and the configured triplet method.
ImbalanceReport imbalance_sweep(const Dataset& data, const TrainConfig& train_config,
                                const EvalConfig& eval_config, const std::vector<int>& degrees,
                                int repeats, uint64_t seed, int jobs = 1);

}  // namespace tml
