#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tml/tensor.hpp"

namespace tml {

enum class LayerKind { Conv3x3, ReLU, MaxPool2, ResidualBlock, GlobalAvgPool, Dense, Sigmoid };

const char* to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind;
  int in = 0;   // channels (conv/residual) or features (dense); 0 for shapeless layers
  int out = 0;
};

// Parameter tensors per layer:
//   conv3x3:        { w (out,in,3,3), b (out) }
//   dense:          { w (out,in),     b (out) }
//   residual_block: { w1 (c,c,3,3), b1 (c), w2 (c,c,3,3), b2 (c) }
// all other kinds: {}
struct ModelState {
  std::vector<LayerSpec> layers;
  std::vector<std::vector<Tensor>> params;
  int embedding_dim = 0;
  int in_channels = 0;
  int embedding_acts = -1;   // activation index holding the embedding
  int feature_acts = -1;     // activation index of the last spatial maps
  int classifier_layer = -1; // dense layer producing the logit
  uint64_t seed = 0;

  const Tensor& classifier_weights() const { return params.at(classifier_layer).at(0); }
  const Tensor& classifier_bias() const { return params.at(classifier_layer).at(1); }
};

// Everything backward and the activation-map code need from one forward call.
// acts[0] is the input batch; acts[i+1] is the output of layers[i].
struct ForwardPass {
  std::vector<Tensor> acts;
  std::map<int, std::vector<int>> pool_argmax;          // layer -> winner offsets
  std::map<int, std::pair<Tensor, Tensor>> res_cache;   // layer -> (pre-relu, post-relu)
};

struct GradientSet {
  std::vector<std::vector<Tensor>> params;
  Tensor input;  // gradient with respect to the input batch
};

// conv3x3(in->8) + relu + maxpool2 + conv3x3(8->16) + relu + maxpool2 +
// residual(16) + GAP + [dense(16->embedding_head) + relu] + dense(->1) + sigmoid.
// embedding_head 0 means the GAP vector itself is the embedding.
ModelState make_detector_model(int in_channels, int embedding_head, uint64_t seed);

// Fan-in-scaled uniform init, biases zero. Reproducible from the seed.
void init_params(ModelState& model, uint64_t seed);

ForwardPass forward(const ModelState& model, const Tensor& batch);

// Backpropagates `grad` injected at activation index `tap_acts` (default: the
// network output) down to the input. Gradients are summed over the batch.
GradientSet backward(const ModelState& model, const ForwardPass& fp, const Tensor& grad,
                     int tap_acts = -1);

GradientSet zero_gradients(const ModelState& model);
void accumulate(GradientSet& into, const GradientSet& add);
void scale_gradients(GradientSet& g, double factor);

// p <- p - lr*(g + wd*p). `only_layers` non-null restricts the update.
void sgd_step(ModelState& model, const GradientSet& grads, double learning_rate,
              double weight_decay, const std::vector<int>* only_layers = nullptr);

const Tensor& embedding_of(const ModelState& model, const ForwardPass& fp);
const Tensor& feature_maps_of(const ModelState& model, const ForwardPass& fp);
const Tensor& probability_of(const ForwardPass& fp);

void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

}  // namespace tml
