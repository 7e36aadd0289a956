#include "tml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tml/common.hpp"
#include "tml/losses.hpp"

namespace tml {

namespace {

// One (N,C,H,W) tensor from frame references, optionally augmented.
Tensor assemble_batch(const Dataset& data, const std::vector<FrameRef>& refs, bool augment,
                      Rng* aug_rng) {
  const int side = data.manifest.frame_size;
  const int c = data.manifest.channels;
  Tensor batch({static_cast<int>(refs.size()), c, side, side});
  for (size_t i = 0; i < refs.size(); ++i) {
    Tensor frame = to_tensor(data.frames.at(static_cast<size_t>(refs[i].procedure_id))
                                 .at(static_cast<size_t>(refs[i].frame_index)));
    if (augment) frame = augment_frame(frame, *aug_rng);
    std::copy(frame.data.begin(), frame.data.end(),
              batch.data.begin() + static_cast<std::ptrdiff_t>(i * frame.data.size()));
  }
  return batch;
}

std::vector<int> labels_of(const std::vector<FrameRef>& refs) {
  std::vector<int> labels;
  labels.reserve(refs.size());
  for (const FrameRef& r : refs) labels.push_back(r.label);
  return labels;
}

// Layer indices owning parameters strictly below the embedding activation.
std::vector<int> backbone_layers(const ModelState& model) {
  std::vector<int> layers;
  for (int i = 0; i < model.embedding_acts; ++i) {
    if (!model.params[static_cast<size_t>(i)].empty()) layers.push_back(i);
  }
  return layers;
}

double validation_auc(const ModelState& model, const Dataset& data,
                      const std::vector<int>* val_procs) {
  if (!val_procs || val_procs->empty()) return std::nan("");
  return roc_and_auc(score_procedures(model, data, *val_procs)).auc;
}

void check_finite_loss(double loss, int epoch, int batch) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + " (non-finite loss)");
  }
}

// Mean BCE over the batch and its gradient at the probability output.
double bce_batch(const Tensor& prob, const std::vector<int>& labels, Tensor& grad) {
  const int n = prob.dim(0);
  grad = Tensor::zeros_like(prob);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const BceResult r = bce_loss(prob.at(i, 0), labels[static_cast<size_t>(i)]);
    total += r.loss;
    grad.at(i, 0) = r.dloss_dp / n;
  }
  return total / n;
}

}  // namespace

const char* to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::CrossEntropyBaseline: return "cross_entropy_baseline";
    case TrainMethod::TripletBatchAll: return "triplet_batch_all";
    case TrainMethod::TripletBatchHard: return "triplet_batch_hard";
  }
  return "?";
}

TrainMethod train_method_from_string(const std::string& s) {
  if (s == "cross_entropy_baseline") return TrainMethod::CrossEntropyBaseline;
  if (s == "triplet_batch_all") return TrainMethod::TripletBatchAll;
  if (s == "triplet_batch_hard") return TrainMethod::TripletBatchHard;
  throw ConfigError("unknown training method: " + s);
}

void TrainConfig::validate() const {
  if (margin < 0.0) throw ConfigError("margin must be >= 0");
  if (embedding_head < 0) throw ConfigError("embedding_head must be >= 0");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (stage2_epochs < 0) throw ConfigError("stage2_epochs must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  plan.validate();
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,stage,loss,active_fraction,val_auc\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << r.stage << ',' << format_double(r.loss) << ',';
    if (std::isfinite(r.active_fraction)) out << format_double(r.active_fraction);
    out << ',';
    if (std::isfinite(r.val_auc)) out << format_double(r.val_auc);
    out << '\n';
  }
  return out.str();
}

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainView& view,
                  const std::vector<int>* val_procedures) {
  config.validate();
  if (view.positives.empty()) throw ConfigError("train: no positive frames in training split");
  if (view.negative_count() == 0) throw ConfigError("train: no negative frames in training split");

  ModelState model =
      make_detector_model(data.manifest.channels, config.embedding_head, mix_seed(config.seed, 0x10de1));
  Rng batch_rng(mix_seed(config.seed, 0xba7c4));
  Rng aug_rng(mix_seed(config.seed, 0xa09));

  TrainResult result{std::move(model), {}};
  ModelState& m = result.model;
  int epoch_counter = 0;

  const size_t batches_per_epoch =
      (view.positives.size() + static_cast<size_t>(config.plan.positives_per_batch()) - 1) /
      static_cast<size_t>(config.plan.positives_per_batch());

  if (config.method == TrainMethod::CrossEntropyBaseline) {
    // classical protocol: uniform batches, BCE end to end, same epoch budget
    const int total_epochs = config.epochs + config.stage2_epochs;
    for (int e = 1; e <= total_epochs; ++e) {
      ++epoch_counter;
      double loss_sum = 0.0;
      for (size_t b = 0; b < batches_per_epoch; ++b) {
        const std::vector<FrameRef> refs = uniform_batch(view, config.plan.batch_size, batch_rng);
        const Tensor batch = assemble_batch(data, refs, config.plan.augment, &aug_rng);
        const ForwardPass fp = forward(m, batch);
        Tensor grad({1});
        const double loss = bce_batch(probability_of(fp), labels_of(refs), grad);
        check_finite_loss(loss, epoch_counter, static_cast<int>(b));
        loss_sum += loss;
        const GradientSet gs = backward(m, fp, grad);
        sgd_step(m, gs, config.learning_rate, config.weight_decay);
      }
      result.history.records.push_back({epoch_counter, 1, loss_sum / batches_per_epoch,
                                        std::nan(""), validation_auc(m, data, val_procedures)});
    }
    return result;
  }

  // stage 1: triplet loss at the embedding, backbone + head parameters only
  const std::vector<int> stage1_layers = backbone_layers(m);
  for (int e = 1; e <= config.epochs; ++e) {
    ++epoch_counter;
    double loss_sum = 0.0, active_sum = 0.0;
    int batch_no = 0;
    for (const std::vector<FrameRef>& refs : epoch_batches(view, config.plan, batch_rng)) {
      const Tensor batch = assemble_batch(data, refs, config.plan.augment, &aug_rng);
      const ForwardPass fp = forward(m, batch);
      EmbeddingBatch emb(embedding_of(m, fp), labels_of(refs));
      double loss = 0.0, active = 0.0;
      Tensor grad({1});
      if (config.method == TrainMethod::TripletBatchAll) {
        BatchAllResult r = batch_all_loss(emb, config.margin, config.normalize_embeddings);
        loss = r.loss_mean_active;
        active = r.total_triplets == 0
                     ? 0.0
                     : static_cast<double>(r.active_triplets) / static_cast<double>(r.total_triplets);
        grad = std::move(r.grad_mean_active);
      } else {
        BatchHardResult r = batch_hard_loss(emb, config.margin, config.normalize_embeddings);
        loss = r.loss_mean;
        active = static_cast<double>(r.active_terms) / static_cast<double>(r.num_anchors);
        grad = std::move(r.grad_mean);
      }
      check_finite_loss(loss, epoch_counter, batch_no);
      loss_sum += loss;
      active_sum += active;
      const GradientSet gs = backward(m, fp, grad, m.embedding_acts);
      sgd_step(m, gs, config.learning_rate, config.weight_decay, &stage1_layers);
      ++batch_no;
    }
    result.history.records.push_back({epoch_counter, 1, loss_sum / batch_no, active_sum / batch_no,
                                      validation_auc(m, data, val_procedures)});
  }

  // stage 2: classifier only; backbone tensors must not move
  const std::vector<int> stage2_layers = {m.classifier_layer};
  for (int e = 1; e <= config.stage2_epochs; ++e) {
    ++epoch_counter;
    double loss_sum = 0.0;
    int batch_no = 0;
    for (const std::vector<FrameRef>& refs : epoch_batches(view, config.plan, batch_rng)) {
      const Tensor batch = assemble_batch(data, refs, config.plan.augment, &aug_rng);
      const ForwardPass fp = forward(m, batch);
      Tensor grad({1});
      const double loss = bce_batch(probability_of(fp), labels_of(refs), grad);
      check_finite_loss(loss, epoch_counter, batch_no);
      loss_sum += loss;
      const GradientSet gs = backward(m, fp, grad);
      sgd_step(m, gs, config.learning_rate, config.weight_decay, &stage2_layers);
      ++batch_no;
    }
    result.history.records.push_back({epoch_counter, 2, loss_sum / batch_no, std::nan(""),
                                      validation_auc(m, data, val_procedures)});
  }
  return result;
}

std::vector<double> score_frames(const ModelState& model, const std::vector<Tensor>& frames) {
  std::vector<double> scores;
  scores.reserve(frames.size());
  constexpr size_t kChunk = 32;
  for (size_t start = 0; start < frames.size(); start += kChunk) {
    const size_t end = std::min(frames.size(), start + kChunk);
    const int n = static_cast<int>(end - start);
    const Tensor& first = frames[start];
    Tensor batch({n, first.dim(0), first.dim(1), first.dim(2)});
    for (size_t i = start; i < end; ++i) {
      const Tensor& f = frames[i];
      if (!f.same_shape(first)) {
        throw std::invalid_argument("score_frames: mixed frame shapes " + first.shape_str() +
                                    " vs " + f.shape_str());
      }
      std::copy(f.data.begin(), f.data.end(),
                batch.data.begin() + static_cast<std::ptrdiff_t>((i - start) * f.data.size()));
    }
    const ForwardPass fp = forward(model, batch);
    const Tensor& prob = probability_of(fp);
    for (int i = 0; i < n; ++i) scores.push_back(prob.at(i, 0));
  }
  return scores;
}

std::vector<ScoredFrame> score_procedures(const ModelState& model, const Dataset& data,
                                          const std::vector<int>& procedures) {
  std::vector<ScoredFrame> out;
  std::vector<Tensor> frames;
  for (int pid : procedures) {
    const ProcedureInfo& p = data.manifest.procedures.at(static_cast<size_t>(pid));
    for (int f = 0; f < p.num_frames; ++f) {
      frames.push_back(to_tensor(data.frames[static_cast<size_t>(pid)][static_cast<size_t>(f)]));
      out.push_back({pid, f, data.manifest.event_of(pid, f),
                     data.manifest.is_positive(pid, f) ? 1 : 0, 0.0});
    }
  }
  const std::vector<double> scores = score_frames(model, frames);
  for (size_t i = 0; i < out.size(); ++i) out[i].score = scores[i];
  return out;
}

}  // namespace tml
