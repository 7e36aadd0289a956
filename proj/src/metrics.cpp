#include "tml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "tml/common.hpp"

namespace tml {

namespace {

void check_scores(const std::vector<ScoredFrame>& scored) {
  for (const ScoredFrame& s : scored) {
    if (!std::isfinite(s.score)) throw std::invalid_argument("non-finite score in evaluation input");
    if (s.label != 0 && s.label != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
}

std::pair<long long, long long> class_counts(const std::vector<ScoredFrame>& scored) {
  long long pos = 0, neg = 0;
  for (const ScoredFrame& s : scored) (s.label == 1 ? pos : neg) += 1;
  return {pos, neg};
}

// thresholds ascending: all distinct scores plus the -1 everything-positive sentinel
std::vector<double> candidate_thresholds(const std::vector<ScoredFrame>& scored) {
  std::set<double> t;
  t.insert(-1.0);
  for (const ScoredFrame& s : scored) t.insert(s.score);
  return {t.begin(), t.end()};
}

}  // namespace

RocCurve roc_and_auc(const std::vector<ScoredFrame>& scored) {
  check_scores(scored);
  auto [pos, neg] = class_counts(scored);
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_and_auc: need both classes, got " + std::to_string(pos) +
                                " positives and " + std::to_string(neg) + " negatives");
  }

  // count, per distinct score, how many positives/negatives sit at it
  std::map<double, std::pair<long long, long long>> at_score;
  for (const ScoredFrame& s : scored) {
    auto& c = at_score[s.score];
    (s.label == 1 ? c.first : c.second) += 1;
  }

  // walk thresholds descending; score > t flips to positive as t drops below it
  RocCurve curve;
  long long tp = 0, fp = 0;
  curve.points.push_back({at_score.rbegin()->first, 0.0, 0.0});
  for (auto it = at_score.rbegin(); it != at_score.rend(); ++it) {
    tp += it->second.first;
    fp += it->second.second;
    auto next = std::next(it);
    const double threshold = next == at_score.rend() ? -1.0 : next->first;
    curve.points.push_back({threshold,
                            static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
  }

  double auc = 0.0;
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

OperatingPoint recall_at_specificity(const std::vector<ScoredFrame>& scored,
                                     double target_specificity) {
  check_scores(scored);
  if (target_specificity < 0.0 || target_specificity > 1.0) {
    throw std::invalid_argument("target specificity must lie in [0,1]");
  }
  auto [pos, neg] = class_counts(scored);
  if (pos == 0) throw std::invalid_argument("recall_at_specificity: no positive frames, recall undefined");
  if (neg == 0) throw std::invalid_argument("recall_at_specificity: no negative frames, specificity undefined");

  for (double t : candidate_thresholds(scored)) {
    long long tn = 0, tp = 0;
    for (const ScoredFrame& s : scored) {
      const bool predicted = s.score > t;
      if (s.label == 0 && !predicted) tn += 1;
      if (s.label == 1 && predicted) tp += 1;
    }
    const double spec = static_cast<double>(tn) / static_cast<double>(neg);
    if (spec >= target_specificity) {
      return {static_cast<double>(tp) / static_cast<double>(pos), t, spec};
    }
  }
  // unreachable: the largest score yields specificity 1
  throw std::logic_error("recall_at_specificity: no threshold reached the target");
}

ThresholdMetrics threshold_metrics(const std::vector<ScoredFrame>& scored, double threshold) {
  check_scores(scored);
  ThresholdMetrics m{0, 0, 0, 0, 0, 0, 0, 0};
  for (const ScoredFrame& s : scored) {
    const bool predicted = s.score > threshold;
    if (s.label == 1) {
      (predicted ? m.tp : m.fn) += 1;
    } else {
      (predicted ? m.fp : m.tn) += 1;
    }
  }
  auto rate = [](long long num, long long den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = rate(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn);
  m.sensitivity = rate(m.tp, m.tp + m.fn);
  m.specificity = rate(m.tn, m.tn + m.fp);
  m.precision = rate(m.tp, m.tp + m.fp);
  return m;
}

EventDetectionReport event_detection(const std::vector<ScoredFrame>& scored,
                                     double target_specificity,
                                     const std::vector<EventAnnotation>& events) {
  for (const ScoredFrame& s : scored) {
    if (s.label == 1 && s.event_id < 0) {
      throw std::invalid_argument("event_detection: positive frame without an event id (procedure " +
                                  std::to_string(s.procedure_id) + ", frame " +
                                  std::to_string(s.frame_index) + ")");
    }
  }
  const OperatingPoint op = recall_at_specificity(scored, target_specificity);

  std::map<int, bool> hit;  // event_id -> any frame above threshold
  for (const ScoredFrame& s : scored) {
    if (s.label != 1) continue;
    bool& h = hit[s.event_id];
    h = h || s.score > op.threshold;
  }

  EventDetectionReport rep;
  rep.target_specificity = target_specificity;
  rep.threshold = op.threshold;
  rep.by_size = {{"small"}, {"medium"}, {"large"}};
  rep.by_morphology = {{"sessile"}, {"pedunculated"}, {"undefined"}};
  for (const EventAnnotation& e : events) {
    if (e.frame_indices.empty()) {
      throw ConfigError("event " + std::to_string(e.event_id) + " has zero frames");
    }
    auto it = hit.find(e.event_id);
    if (it == hit.end()) continue;  // event not present in this scored set
    const bool detected = it->second;
    rep.total_events += 1;
    rep.detected_events += detected ? 1 : 0;
    rep.per_event.emplace_back(e.event_id, detected);
    EventGroupRow& srow = rep.by_size[static_cast<size_t>(e.size_class)];
    EventGroupRow& mrow = rep.by_morphology[static_cast<size_t>(e.morphology)];
    srow.total += 1;
    srow.detected += detected ? 1 : 0;
    mrow.total += 1;
    mrow.detected += detected ? 1 : 0;
  }
  return rep;
}

}  // namespace tml
