#include "tml/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tml/common.hpp"

namespace tml {

namespace {

constexpr double kProbFloor = 1e-12;

// pairwise squared distances, (N,N) row-major
std::vector<double> pairwise_sq(const Tensor& emb) {
  const int n = emb.dim(0), d = emb.dim(1);
  std::vector<double> d2(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* fi = &emb.at(i, 0);
    for (int j = i + 1; j < n; ++j) {
      const double* fj = &emb.at(j, 0);
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = fi[k] - fj[k];
        s += diff * diff;
      }
      d2[static_cast<size_t>(i) * n + j] = s;
      d2[static_cast<size_t>(j) * n + i] = s;
    }
  }
  return d2;
}

// grad_a += 2(n-p), grad_p += 2(p-a), grad_n += 2(a-n), scaled by w
void add_triplet_grad(Tensor& grad, const Tensor& emb, int a, int p, int n, double w) {
  const int d = emb.dim(1);
  const double* fa = &emb.at(a, 0);
  const double* fp = &emb.at(p, 0);
  const double* fn = &emb.at(n, 0);
  double* ga = &grad.at(a, 0);
  double* gp = &grad.at(p, 0);
  double* gn = &grad.at(n, 0);
  for (int k = 0; k < d; ++k) {
    ga[k] += w * 2.0 * (fn[k] - fp[k]);
    gp[k] += w * 2.0 * (fp[k] - fa[k]);
    gn[k] += w * 2.0 * (fa[k] - fn[k]);
  }
}

// Unit-sphere projection u = f/r with r = max(|f|, 1e-12); returns the
// projected batch and the radii needed to chain gradients back.
std::pair<Tensor, std::vector<double>> project_unit(const Tensor& emb) {
  const int n = emb.dim(0), d = emb.dim(1);
  Tensor u = emb;
  std::vector<double> radii(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += emb.at(i, k) * emb.at(i, k);
    const double r = std::max(std::sqrt(s), 1e-12);
    radii[static_cast<size_t>(i)] = r;
    for (int k = 0; k < d; ++k) u.at(i, k) = emb.at(i, k) / r;
  }
  return {std::move(u), std::move(radii)};
}

// dL/df = (dL/du - (dL/du . u) u) / r
void chain_unit_grad(Tensor& grad, const Tensor& u, const std::vector<double>& radii) {
  const int n = grad.dim(0), d = grad.dim(1);
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int k = 0; k < d; ++k) dot += grad.at(i, k) * u.at(i, k);
    const double inv_r = 1.0 / radii[static_cast<size_t>(i)];
    for (int k = 0; k < d; ++k) grad.at(i, k) = (grad.at(i, k) - dot * u.at(i, k)) * inv_r;
  }
}

void check_alpha(double alpha) {
  if (alpha < 0.0) throw ConfigError("margin alpha must be >= 0");
}

}  // namespace

EmbeddingBatch::EmbeddingBatch(Tensor emb, std::vector<int> lab)
    : embeddings(std::move(emb)), labels(std::move(lab)) {
  if (embeddings.rank() != 2) {
    throw std::invalid_argument("EmbeddingBatch: embeddings must be (N,d), got " +
                                embeddings.shape_str());
  }
  if (static_cast<size_t>(embeddings.dim(0)) != labels.size()) {
    throw std::invalid_argument("EmbeddingBatch: " + std::to_string(embeddings.dim(0)) +
                                " embeddings but " + std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("EmbeddingBatch: labels must be 0 or 1");
    (l == 0 ? k0 : k1) += 1;
  }
}

BceResult bce_loss(double p, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
  const double pc = std::min(std::max(p, kProbFloor), 1.0 - kProbFloor);
  const double loss = -y * std::log(pc) - (1 - y) * std::log(1.0 - pc);
  const double grad = (pc - y) / (pc * (1.0 - pc));
  return {loss, grad};
}

double triplet_term(const std::vector<double>& f_a, const std::vector<double>& f_p,
                    const std::vector<double>& f_n, double alpha) {
  if (f_a.size() != f_p.size() || f_a.size() != f_n.size()) {
    throw std::invalid_argument("triplet_term: embedding dimensions differ");
  }
  check_alpha(alpha);
  double dp = 0.0, dn = 0.0;
  for (size_t k = 0; k < f_a.size(); ++k) {
    const double ap = f_a[k] - f_p[k];
    const double an = f_a[k] - f_n[k];
    dp += ap * ap;
    dn += an * an;
  }
  return std::max(0.0, dp - dn + alpha);
}

BatchAllResult batch_all_loss(const EmbeddingBatch& batch, double alpha, bool normalize) {
  check_alpha(alpha);
  const int n = batch.embeddings.dim(0);
  const bool feasible = (batch.k0 >= 2 && batch.k1 >= 1) || (batch.k1 >= 2 && batch.k0 >= 1);
  if (!feasible) {
    throw std::invalid_argument(
        "no valid triplet in batch (k0=" + std::to_string(batch.k0) +
        ", k1=" + std::to_string(batch.k1) +
        "): recompose the batch with two samples of one class and one of the other");
  }

  Tensor emb = batch.embeddings;
  std::vector<double> radii;
  if (normalize) {
    auto [u, r] = project_unit(batch.embeddings);
    emb = std::move(u);
    radii = std::move(r);
  }
  const std::vector<double> d2 = pairwise_sq(emb);

  BatchAllResult res;
  res.grad_sum = Tensor::zeros_like(emb);
  for (int a = 0; a < n; ++a) {
    const int la = batch.labels[static_cast<size_t>(a)];
    for (int p = 0; p < n; ++p) {
      if (p == a || batch.labels[static_cast<size_t>(p)] != la) continue;
      const double dap = d2[static_cast<size_t>(a) * n + p];
      for (int neg = 0; neg < n; ++neg) {
        if (batch.labels[static_cast<size_t>(neg)] == la) continue;
        res.total_triplets += 1;
        const double term = dap - d2[static_cast<size_t>(a) * n + neg] + alpha;
        if (term > 0.0) {
          res.active_triplets += 1;
          res.loss_sum += term;
          add_triplet_grad(res.grad_sum, emb, a, p, neg, 1.0);
        }
      }
    }
  }

  res.grad_mean_active = Tensor::zeros_like(emb);
  if (res.active_triplets > 0) {
    res.loss_mean_active = res.loss_sum / static_cast<double>(res.active_triplets);
    const double inv = 1.0 / static_cast<double>(res.active_triplets);
    for (size_t i = 0; i < res.grad_sum.data.size(); ++i) {
      res.grad_mean_active.data[i] = res.grad_sum.data[i] * inv;
    }
  }
  if (normalize) {
    chain_unit_grad(res.grad_sum, emb, radii);
    chain_unit_grad(res.grad_mean_active, emb, radii);
  }
  return res;
}

BatchHardResult batch_hard_loss(const EmbeddingBatch& batch, double alpha, bool normalize) {
  check_alpha(alpha);
  const int n = batch.embeddings.dim(0);
  if (batch.k0 < 2 || batch.k1 < 2) {
    const int bad = batch.k0 < 2 ? 0 : 1;
    throw std::invalid_argument("batch-hard needs at least 2 samples of class " +
                                std::to_string(bad) + " (got " +
                                std::to_string(bad == 0 ? batch.k0 : batch.k1) + ")");
  }

  Tensor emb = batch.embeddings;
  std::vector<double> radii;
  if (normalize) {
    auto [u, r] = project_unit(batch.embeddings);
    emb = std::move(u);
    radii = std::move(r);
  }
  const std::vector<double> d2 = pairwise_sq(emb);

  BatchHardResult res;
  res.num_anchors = n;
  res.grad_sum = Tensor::zeros_like(emb);
  res.selected.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    const int la = batch.labels[static_cast<size_t>(a)];
    int hp = -1, hn = -1;
    double worst_p = -1.0, best_n = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == a) continue;
      const double dist = d2[static_cast<size_t>(a) * n + j];
      if (batch.labels[static_cast<size_t>(j)] == la) {
        if (dist > worst_p) {
          worst_p = dist;
          hp = j;
        }
      } else if (hn < 0 || dist < best_n) {
        best_n = dist;
        hn = j;
      }
    }
    res.selected.emplace_back(hp, hn);
    const double term = worst_p - best_n + alpha;
    if (term > 0.0) {
      res.active_terms += 1;
      res.loss_sum += term;
      add_triplet_grad(res.grad_sum, emb, a, hp, hn, 1.0);
    }
  }

  res.loss_mean = res.loss_sum / static_cast<double>(n);
  res.grad_mean = Tensor::zeros_like(emb);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < res.grad_sum.data.size(); ++i) {
    res.grad_mean.data[i] = res.grad_sum.data[i] * inv;
  }
  if (normalize) {
    chain_unit_grad(res.grad_sum, emb, radii);
    chain_unit_grad(res.grad_mean, emb, radii);
  }
  return res;
}

}  // namespace tml
