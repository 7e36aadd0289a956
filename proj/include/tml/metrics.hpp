#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tml/synthdata.hpp"

namespace tml {

struct ScoredFrame {
  int procedure_id;
  int frame_index;
  int event_id;  // -1 for negatives
  int label;     // 0 or 1
  double score;  // in [0,1]
};

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending: (0,0) first, (1,1) last
  double auc = 0.0;
};

// Sweeps every distinct score plus a -1 sentinel (predicted positive means
// score > threshold). Trapezoidal area equals the Mann-Whitney statistic
// with half credit for ties.
RocCurve roc_and_auc(const std::vector<ScoredFrame>& scored);

struct OperatingPoint {
  double recall;
  double threshold;
  double specificity;  // achieved, >= the target
};

// Among thresholds reaching the target specificity, picks the one with the
// highest recall (equivalently the lowest such threshold).
OperatingPoint recall_at_specificity(const std::vector<ScoredFrame>& scored,
                                     double target_specificity);

struct ThresholdMetrics {
  double accuracy;
  double sensitivity;
  double specificity;
  double precision;
  long long tp, fp, tn, fn;
};

// Confusion-matrix rates at a fixed threshold; empty denominators yield 0.
ThresholdMetrics threshold_metrics(const std::vector<ScoredFrame>& scored, double threshold);

struct EventGroupRow {
  std::string group;
  int total = 0;
  int detected = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(detected) / total; }
};

struct EventDetectionReport {
  double target_specificity = 0.0;
  double threshold = 0.0;
  int total_events = 0;
  int detected_events = 0;
  std::vector<EventGroupRow> by_size;        // small, medium, large
  std::vector<EventGroupRow> by_morphology;  // sessile, pedunculated, undefined
  std::vector<std::pair<int, bool>> per_event;
  double overall_rate() const {
    return total_events == 0 ? 0.0 : static_cast<double>(detected_events) / total_events;
  }
};

// An event counts as detected when at least one of its frames scores above
// the operating threshold for the target specificity. Only events with
// frames present in `scored` are counted.
EventDetectionReport event_detection(const std::vector<ScoredFrame>& scored,
                                     double target_specificity,
                                     const std::vector<EventAnnotation>& events);

}  // namespace tml
