#pragma once

#include <map>
#include <vector>

#include "tml/rng.hpp"
#include "tml/synthdata.hpp"

namespace tml {

struct FrameRef {
  int procedure_id;
  int frame_index;
  int label;  // 1 = event frame

  bool operator==(const FrameRef&) const = default;
};

struct BatchPlan {
  int batch_size = 64;
  double positive_fraction = 0.2;
  bool augment = true;

  int positives_per_batch() const;
  void validate() const;
};

// The frames a training run may draw from. Negatives are grouped by
// procedure so batch composition can stratify across procedures.
struct TrainView {
  std::vector<FrameRef> positives;
  std::map<int, std::vector<int>> negatives_by_proc;

  long long negative_count() const;
};

TrainView make_train_view(const DatasetManifest& manifest, const std::vector<int>& procedures);

// Stratified negatives: each slot draws a procedure uniformly among those
// with frames still unused in this call, then a frame uniformly within it.
// No frame repeats within one call.
std::vector<FrameRef> sample_negatives(const TrainView& view, int count, Rng& rng);

// One epoch: every positive exactly once (shuffled), chunked into batches of
// positives_per_batch, each filled with stratified negatives up to
// batch_size. A short last chunk is padded with extra negatives.
std::vector<std::vector<FrameRef>> epoch_batches(const TrainView& view, const BatchPlan& plan,
                                                 Rng& rng);

// Uniform draw from the whole pool (positives and negatives alike) without
// replacement within the batch. Used by the plain cross-entropy baseline.
std::vector<FrameRef> uniform_batch(const TrainView& view, int batch_size, Rng& rng);

}  // namespace tml
