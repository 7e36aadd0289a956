#include "tml/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tml/common.hpp"

namespace tml {

int BatchPlan::positives_per_batch() const {
  return static_cast<int>(std::lround(batch_size * positive_fraction));
}

void BatchPlan::validate() const {
  if (batch_size < 3) throw ConfigError("batch_size must be >= 3");
  if (positive_fraction <= 0.0 || positive_fraction > 1.0) {
    throw ConfigError("positive_fraction must lie in (0,1]");
  }
  const int pos = positives_per_batch();
  if (pos < 2) {
    throw ConfigError("no valid triplet possible: batch plan yields " + std::to_string(pos) +
                      " positives per batch, need >= 2");
  }
  if (pos >= batch_size) {
    throw ConfigError("no valid triplet possible: batch plan leaves no room for negatives (" +
                      std::to_string(pos) + " positives in a batch of " +
                      std::to_string(batch_size) + ")");
  }
}

long long TrainView::negative_count() const {
  long long n = 0;
  for (auto& [proc, frames] : negatives_by_proc) n += static_cast<long long>(frames.size());
  return n;
}

TrainView make_train_view(const DatasetManifest& manifest, const std::vector<int>& procedures) {
  TrainView view;
  for (int pid : procedures) {
    if (pid < 0 || pid >= static_cast<int>(manifest.procedures.size())) {
      throw std::invalid_argument("make_train_view: unknown procedure " + std::to_string(pid));
    }
    const ProcedureInfo& p = manifest.procedures[static_cast<size_t>(pid)];
    std::vector<int> negs;
    for (int f = 0; f < p.num_frames; ++f) {
      if (manifest.is_positive(pid, f)) {
        view.positives.push_back({pid, f, 1});
      } else {
        negs.push_back(f);
      }
    }
    if (!negs.empty()) view.negatives_by_proc[pid] = std::move(negs);
  }
  return view;
}

std::vector<FrameRef> sample_negatives(const TrainView& view, int count, Rng& rng) {
  if (count == 0) return {};
  if (view.negative_count() < count) {
    throw ConfigError("not enough negative frames (" + std::to_string(view.negative_count()) +
                      ") to fill a batch needing " + std::to_string(count));
  }
  // copy-on-draw pools so one call never repeats a frame
  std::vector<int> procs;
  std::vector<std::vector<int>> pools;
  for (auto& [pid, frames] : view.negatives_by_proc) {
    procs.push_back(pid);
    pools.push_back(frames);
  }
  std::vector<int> eligible(procs.size());
  for (size_t i = 0; i < procs.size(); ++i) eligible[i] = static_cast<int>(i);

  std::vector<FrameRef> out;
  out.reserve(static_cast<size_t>(count));
  for (int s = 0; s < count; ++s) {
    const size_t pick = rng.index(eligible.size());
    const int pi = eligible[pick];
    std::vector<int>& pool = pools[static_cast<size_t>(pi)];
    const size_t fi = rng.index(pool.size());
    out.push_back({procs[static_cast<size_t>(pi)], pool[fi], 0});
    pool[fi] = pool.back();
    pool.pop_back();
    if (pool.empty()) {
      eligible[pick] = eligible.back();
      eligible.pop_back();
    }
  }
  return out;
}

std::vector<std::vector<FrameRef>> epoch_batches(const TrainView& view, const BatchPlan& plan,
                                                 Rng& rng) {
  plan.validate();
  if (view.positives.empty()) throw ConfigError("epoch_batches: no positive frames in training split");
  if (view.negatives_by_proc.size() < 2) {
    throw ConfigError("epoch_batches: need negatives from at least 2 procedures, have " +
                      std::to_string(view.negatives_by_proc.size()));
  }

  std::vector<FrameRef> order = view.positives;
  rng.shuffle(order);

  const int per_batch = plan.positives_per_batch();
  std::vector<std::vector<FrameRef>> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(per_batch)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(per_batch));
    std::vector<FrameRef> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                order.begin() + static_cast<std::ptrdiff_t>(end));
    const int negatives = plan.batch_size - static_cast<int>(batch.size());
    for (FrameRef& ref : sample_negatives(view, negatives, rng)) batch.push_back(ref);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<FrameRef> uniform_batch(const TrainView& view, int batch_size, Rng& rng) {
  std::vector<FrameRef> pool = view.positives;
  for (auto& [pid, frames] : view.negatives_by_proc) {
    for (int f : frames) pool.push_back({pid, f, 0});
  }
  if (static_cast<int>(pool.size()) < batch_size) {
    throw ConfigError("uniform_batch: pool of " + std::to_string(pool.size()) +
                      " frames cannot fill a batch of " + std::to_string(batch_size));
  }
  // partial Fisher-Yates: first batch_size entries are a uniform sample
  std::vector<FrameRef> out;
  out.reserve(static_cast<size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const size_t j = static_cast<size_t>(i) + rng.index(pool.size() - static_cast<size_t>(i));
    std::swap(pool[static_cast<size_t>(i)], pool[j]);
    out.push_back(pool[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace tml
