#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tml/metrics.hpp"
#include "tml/nn.hpp"
#include "tml/sampler.hpp"
#include "tml/synthdata.hpp"

namespace tml {

enum class TrainMethod { CrossEntropyBaseline, TripletBatchAll, TripletBatchHard };

const char* to_string(TrainMethod m);
TrainMethod train_method_from_string(const std::string& s);

struct TrainConfig {
  TrainMethod method = TrainMethod::TripletBatchAll;
  double margin = 0.2;
  int embedding_head = 0;  // 0: classify on the pooled features directly
  double learning_rate = 1e-3;
  int epochs = 50;         // metric-learning stage (or the whole baseline run)
  int stage2_epochs = 10;  // classifier stage on the frozen backbone
  double weight_decay = 0.0;
  bool normalize_embeddings = false;
  BatchPlan plan;
  uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch;   // 1-based, counts across stages
  int stage;   // 1 = embedding/backbone stage, 2 = classifier stage
  double loss;
  double active_fraction;  // NaN when not applicable
  double val_auc;          // NaN when no validation split was given
};

struct TrainHistory {
  std::vector<EpochRecord> records;
  std::string to_csv() const;  // epoch,stage,loss,active_fraction,val_auc
};

struct TrainResult {
  ModelState model;
  TrainHistory history;
};

// Two-stage run for the triplet methods: stage 1 shapes the backbone (and
// embedding head) with the triplet loss injected at the embedding; stage 2
// fits only the classifier with BCE on the frozen backbone. The baseline
// trains everything with BCE for the same total epoch budget, drawing its
// batches uniformly from the pool instead of the stratified scheduler.
TrainResult train(const TrainConfig& config, const Dataset& data, const TrainView& view,
                  const std::vector<int>* val_procedures = nullptr);

std::vector<double> score_frames(const ModelState& model, const std::vector<Tensor>& frames);

// Scores every frame of the listed procedures (no augmentation, ever).
std::vector<ScoredFrame> score_procedures(const ModelState& model, const Dataset& data,
                                          const std::vector<int>& procedures);

}  // namespace tml
