#pragma once

#include <utility>
#include <vector>

#include "tml/tensor.hpp"

namespace tml {

struct EmbeddingBatch {
  Tensor embeddings;        // (N, d)
  std::vector<int> labels;  // 0 or 1 per row

  int k0 = 0;  // class-0 count
  int k1 = 0;

  EmbeddingBatch(Tensor emb, std::vector<int> lab);
};

struct BceResult {
  double loss;
  double dloss_dp;  // with respect to the clamped probability
};

// Probabilities are clamped to [1e-12, 1-1e-12] before the logs.
BceResult bce_loss(double p, int y);

// max(0, |a-p|^2 - |a-n|^2 + alpha), squared distances throughout.
double triplet_term(const std::vector<double>& f_a, const std::vector<double>& f_p,
                    const std::vector<double>& f_n, double alpha);

struct BatchAllResult {
  double loss_sum = 0.0;
  double loss_mean_active = 0.0;  // loss_sum / active, 0 when nothing is active
  long long total_triplets = 0;
  long long active_triplets = 0;
  Tensor grad_sum;          // gradient of loss_sum w.r.t. embeddings
  Tensor grad_mean_active;  // gradient of loss_mean_active
};

// Sums the hinge term over every valid (anchor, positive, negative) with
// anchors drawn from both classes. `normalize` maps embeddings to the unit
// sphere first and chains the gradient through the projection.
BatchAllResult batch_all_loss(const EmbeddingBatch& batch, double alpha, bool normalize = false);

struct BatchHardResult {
  double loss_sum = 0.0;
  double loss_mean = 0.0;  // mean over anchors
  int num_anchors = 0;
  long long active_terms = 0;
  Tensor grad_sum;
  Tensor grad_mean;
  std::vector<std::pair<int, int>> selected;  // per anchor: (hardest positive, hardest negative)
};

// One term per anchor using its farthest same-class and nearest other-class
// sample; ties resolve to the lowest index.
BatchHardResult batch_hard_loss(const EmbeddingBatch& batch, double alpha, bool normalize = false);

}  // namespace tml
