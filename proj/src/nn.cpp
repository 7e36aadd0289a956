#include "tml/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tml/common.hpp"
#include "tml/rng.hpp"

namespace tml {

namespace {

std::string layer_label(const ModelState& m, int i) {
  return "layer " + std::to_string(i) + " (" + to_string(m.layers[static_cast<size_t>(i)].kind) + ")";
}

void check_channels(const ModelState& m, int i, const Tensor& x, int want) {
  if (x.rank() != 4 || x.dim(1) != want) {
    throw std::invalid_argument(layer_label(m, i) + ": expected (N," + std::to_string(want) +
                                ",H,W) input, got " + x.shape_str());
  }
}

// ---- conv3x3, same padding, stride 1 ----

Tensor conv3x3_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
  const int N = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int OC = w.dim(0);
  Tensor out({N, OC, H, W});
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      const double bias = b.data[static_cast<size_t>(oc)];
      for (int y = 0; y < H; ++y) {
        double* orow = &out.at(n, oc, y, 0);
        for (int x = 0; x < W; ++x) orow[x] = bias;
        for (int ic = 0; ic < IC; ++ic) {
          for (int dy = 0; dy < 3; ++dy) {
            const int sy = y + dy - 1;
            if (sy < 0 || sy >= H) continue;
            const double* irow = &in.at(n, ic, sy, 0);
            const double* wr = &w.at(oc, ic, dy, 0);
            const double w0 = wr[0], w1 = wr[1], w2 = wr[2];
            for (int x = 1; x < W; ++x) orow[x] += w0 * irow[x - 1];
            for (int x = 0; x < W; ++x) orow[x] += w1 * irow[x];
            for (int x = 0; x < W - 1; ++x) orow[x] += w2 * irow[x + 1];
          }
        }
      }
    }
  }
  return out;
}

void conv3x3_backward(const Tensor& in, const Tensor& w, const Tensor& g, Tensor& gin, Tensor& gw,
                      Tensor& gb) {
  const int N = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int OC = w.dim(0);
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      double gbv = 0.0;
      for (int y = 0; y < H; ++y) {
        const double* grow = &g.at(n, oc, y, 0);
        for (int x = 0; x < W; ++x) gbv += grow[x];
        for (int ic = 0; ic < IC; ++ic) {
          for (int dy = 0; dy < 3; ++dy) {
            const int sy = y + dy - 1;
            if (sy < 0 || sy >= H) continue;
            const double* irow = &in.at(n, ic, sy, 0);
            double* ginrow = &gin.at(n, ic, sy, 0);
            double* gwr = &gw.at(oc, ic, dy, 0);
            const double* wr = &w.at(oc, ic, dy, 0);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0;
            const double w0 = wr[0], w1 = wr[1], w2 = wr[2];
            for (int x = 1; x < W; ++x) {
              s0 += grow[x] * irow[x - 1];
              ginrow[x - 1] += w0 * grow[x];
            }
            for (int x = 0; x < W; ++x) {
              s1 += grow[x] * irow[x];
              ginrow[x] += w1 * grow[x];
            }
            for (int x = 0; x < W - 1; ++x) {
              s2 += grow[x] * irow[x + 1];
              ginrow[x + 1] += w2 * grow[x];
            }
            gwr[0] += s0;
            gwr[1] += s1;
            gwr[2] += s2;
          }
        }
      }
      gb.data[static_cast<size_t>(oc)] += gbv;
    }
  }
}

Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

void relu_backward(const Tensor& in, const Tensor& g, Tensor& gin) {
  for (size_t i = 0; i < g.data.size(); ++i) gin.data[i] += in.data[i] > 0.0 ? g.data[i] : 0.0;
}

Tensor maxpool2_forward(const Tensor& in, std::vector<int>& argmax) {
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  argmax.assign(out.data.size(), 0);
  size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox, ++oi) {
          double best = -1e300;
          int best_off = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int y = 2 * oy + dy, x = 2 * ox + dx;
              const double v = in.at(n, c, y, x);
              if (v > best) {
                best = v;
                best_off = y * W + x;
              }
            }
          }
          out.data[oi] = best;
          argmax[oi] = best_off;
        }
      }
    }
  }
  return out;
}

void maxpool2_backward(const Tensor& in, const Tensor& g, const std::vector<int>& argmax,
                       Tensor& gin) {
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      double* gplane = &gin.data[(static_cast<size_t>(n) * C + c) * plane];
      const size_t cells = g.data.size() / (static_cast<size_t>(N) * C);
      for (size_t k = 0; k < cells; ++k, ++oi) {
        gplane[argmax[oi]] += g.data[oi];
      }
    }
  }
}

Tensor gap_forward(const Tensor& in) {
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  Tensor out({N, C});
  const double inv = 1.0 / (static_cast<double>(H) * W);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      const double* row = &in.at(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) s += row[i];
      out.at(n, c) = s * inv;
    }
  }
  return out;
}

void gap_backward(const Tensor& in, const Tensor& g, Tensor& gin) {
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const double inv = 1.0 / (static_cast<double>(H) * W);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double gv = g.at(n, c) * inv;
      double* row = &gin.at(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) row[i] += gv;
    }
  }
}

Tensor dense_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
  const int N = in.dim(0), IN = in.dim(1), OUT = w.dim(0);
  Tensor out({N, OUT});
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < OUT; ++o) {
      double s = b.data[static_cast<size_t>(o)];
      const double* wr = &w.at(o, 0);
      const double* ir = &in.at(n, 0);
      for (int i = 0; i < IN; ++i) s += wr[i] * ir[i];
      out.at(n, o) = s;
    }
  }
  return out;
}

void dense_backward(const Tensor& in, const Tensor& w, const Tensor& g, Tensor& gin, Tensor& gw,
                    Tensor& gb) {
  const int N = in.dim(0), IN = in.dim(1), OUT = w.dim(0);
  for (int n = 0; n < N; ++n) {
    const double* ir = &in.at(n, 0);
    double* gir = &gin.at(n, 0);
    for (int o = 0; o < OUT; ++o) {
      const double gv = g.at(n, o);
      gb.data[static_cast<size_t>(o)] += gv;
      const double* wr = &w.at(o, 0);
      double* gwr = &gw.at(o, 0);
      for (int i = 0; i < IN; ++i) {
        gwr[i] += gv * ir[i];
        gir[i] += gv * wr[i];
      }
    }
  }
}

Tensor sigmoid_forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

void sigmoid_backward(const Tensor& out, const Tensor& g, Tensor& gin) {
  for (size_t i = 0; i < g.data.size(); ++i) {
    const double s = out.data[i];
    gin.data[i] += g.data[i] * s * (1.0 - s);
  }
}

}  // namespace

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::ResidualBlock: return "residual_block";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv3x3") return LayerKind::Conv3x3;
  if (s == "relu") return LayerKind::ReLU;
  if (s == "maxpool2") return LayerKind::MaxPool2;
  if (s == "residual_block") return LayerKind::ResidualBlock;
  if (s == "global_avg_pool") return LayerKind::GlobalAvgPool;
  if (s == "dense") return LayerKind::Dense;
  if (s == "sigmoid") return LayerKind::Sigmoid;
  throw ConfigError("unknown layer kind: " + s);
}

ModelState make_detector_model(int in_channels, int embedding_head, uint64_t seed) {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (embedding_head < 0) throw ConfigError("embedding_head must be >= 0");
  ModelState m;
  m.in_channels = in_channels;
  auto add = [&](LayerKind k, int in, int out) { m.layers.push_back({k, in, out}); };
  add(LayerKind::Conv3x3, in_channels, 8);
  add(LayerKind::ReLU, 0, 0);
  add(LayerKind::MaxPool2, 0, 0);
  add(LayerKind::Conv3x3, 8, 16);
  add(LayerKind::ReLU, 0, 0);
  add(LayerKind::MaxPool2, 0, 0);
  add(LayerKind::ResidualBlock, 16, 16);
  add(LayerKind::GlobalAvgPool, 0, 0);
  m.feature_acts = 7;  // residual output feeds the pooling
  if (embedding_head > 0) {
    add(LayerKind::Dense, 16, embedding_head);
    add(LayerKind::ReLU, 0, 0);
    m.embedding_dim = embedding_head;
    m.embedding_acts = 10;
    add(LayerKind::Dense, embedding_head, 1);
  } else {
    m.embedding_dim = 16;
    m.embedding_acts = 8;
    add(LayerKind::Dense, 16, 1);
  }
  m.classifier_layer = static_cast<int>(m.layers.size()) - 1;
  add(LayerKind::Sigmoid, 0, 0);
  init_params(m, seed);
  return m;
}

void init_params(ModelState& model, uint64_t seed) {
  model.seed = seed;
  model.params.assign(model.layers.size(), {});
  Rng rng(mix_seed(seed, 0x1417));
  auto uniform_fill = [&](Tensor& t, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  };
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    switch (spec.kind) {
      case LayerKind::Conv3x3: {
        Tensor w({spec.out, spec.in, 3, 3});
        Tensor b({spec.out});
        uniform_fill(w, spec.in * 9);
        model.params[i] = {std::move(w), std::move(b)};
        break;
      }
      case LayerKind::Dense: {
        Tensor w({spec.out, spec.in});
        Tensor b({spec.out});
        uniform_fill(w, spec.in);
        model.params[i] = {std::move(w), std::move(b)};
        break;
      }
      case LayerKind::ResidualBlock: {
        Tensor w1({spec.out, spec.in, 3, 3}), b1({spec.out});
        Tensor w2({spec.out, spec.out, 3, 3}), b2({spec.out});
        uniform_fill(w1, spec.in * 9);
        uniform_fill(w2, spec.out * 9);
        model.params[i] = {std::move(w1), std::move(b1), std::move(w2), std::move(b2)};
        break;
      }
      default:
        break;
    }
  }
}

ForwardPass forward(const ModelState& model, const Tensor& batch) {
  if (batch.rank() != 4) {
    throw std::invalid_argument("forward: expected rank-4 (N,C,H,W) batch, got " + batch.shape_str());
  }
  ForwardPass fp;
  fp.acts.reserve(model.layers.size() + 1);
  fp.acts.push_back(batch);
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    const Tensor& x = fp.acts.back();
    switch (spec.kind) {
      case LayerKind::Conv3x3: {
        check_channels(model, static_cast<int>(i), x, spec.in);
        fp.acts.push_back(conv3x3_forward(x, model.params[i][0], model.params[i][1]));
        break;
      }
      case LayerKind::ReLU:
        fp.acts.push_back(relu_forward(x));
        break;
      case LayerKind::MaxPool2: {
        if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
          throw std::invalid_argument(layer_label(model, static_cast<int>(i)) +
                                      ": input too small to pool, got " + x.shape_str());
        }
        std::vector<int> argmax;
        fp.acts.push_back(maxpool2_forward(x, argmax));
        fp.pool_argmax[static_cast<int>(i)] = std::move(argmax);
        break;
      }
      case LayerKind::ResidualBlock: {
        check_channels(model, static_cast<int>(i), x, spec.in);
        Tensor t1 = conv3x3_forward(x, model.params[i][0], model.params[i][1]);
        Tensor t2 = relu_forward(t1);
        Tensor f = conv3x3_forward(t2, model.params[i][2], model.params[i][3]);
        for (size_t j = 0; j < f.data.size(); ++j) f.data[j] += x.data[j];
        fp.res_cache[static_cast<int>(i)] = {std::move(t1), std::move(t2)};
        fp.acts.push_back(std::move(f));
        break;
      }
      case LayerKind::GlobalAvgPool: {
        if (x.rank() != 4) {
          throw std::invalid_argument(layer_label(model, static_cast<int>(i)) +
                                      ": expected spatial input, got " + x.shape_str());
        }
        fp.acts.push_back(gap_forward(x));
        break;
      }
      case LayerKind::Dense: {
        if (x.rank() != 2 || x.dim(1) != spec.in) {
          throw std::invalid_argument(layer_label(model, static_cast<int>(i)) + ": expected (N," +
                                      std::to_string(spec.in) + ") input, got " + x.shape_str());
        }
        fp.acts.push_back(dense_forward(x, model.params[i][0], model.params[i][1]));
        break;
      }
      case LayerKind::Sigmoid:
        fp.acts.push_back(sigmoid_forward(x));
        break;
    }
  }
  return fp;
}

GradientSet zero_gradients(const ModelState& model) {
  GradientSet g;
  g.params.resize(model.params.size());
  for (size_t i = 0; i < model.params.size(); ++i) {
    for (const Tensor& p : model.params[i]) g.params[i].push_back(Tensor::zeros_like(p));
  }
  return g;
}

void accumulate(GradientSet& into, const GradientSet& add) {
  for (size_t i = 0; i < into.params.size(); ++i) {
    for (size_t j = 0; j < into.params[i].size(); ++j) {
      auto& a = into.params[i][j].data;
      const auto& b = add.params[i][j].data;
      for (size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    }
  }
}

void scale_gradients(GradientSet& g, double factor) {
  for (auto& layer : g.params)
    for (auto& t : layer)
      for (double& v : t.data) v *= factor;
}

GradientSet backward(const ModelState& model, const ForwardPass& fp, const Tensor& grad,
                     int tap_acts) {
  if (fp.acts.size() != model.layers.size() + 1) {
    throw std::invalid_argument("backward: activations do not match this model");
  }
  const int tap = tap_acts < 0 ? static_cast<int>(fp.acts.size()) - 1 : tap_acts;
  if (tap < 1 || tap >= static_cast<int>(fp.acts.size())) {
    throw std::invalid_argument("backward: tap index out of range");
  }
  if (!grad.same_shape(fp.acts[static_cast<size_t>(tap)])) {
    throw std::invalid_argument("backward: gradient shape " + grad.shape_str() +
                                " does not match activation shape " +
                                fp.acts[static_cast<size_t>(tap)].shape_str());
  }

  GradientSet gs = zero_gradients(model);
  Tensor g = grad;
  for (int i = tap - 1; i >= 0; --i) {
    const LayerSpec& spec = model.layers[static_cast<size_t>(i)];
    const Tensor& x = fp.acts[static_cast<size_t>(i)];
    Tensor gin = Tensor::zeros_like(x);
    switch (spec.kind) {
      case LayerKind::Conv3x3:
        conv3x3_backward(x, model.params[static_cast<size_t>(i)][0], g, gin,
                         gs.params[static_cast<size_t>(i)][0], gs.params[static_cast<size_t>(i)][1]);
        break;
      case LayerKind::ReLU:
        relu_backward(x, g, gin);
        break;
      case LayerKind::MaxPool2:
        maxpool2_backward(x, g, fp.pool_argmax.at(i), gin);
        break;
      case LayerKind::ResidualBlock: {
        const auto& [t1, t2] = fp.res_cache.at(i);
        Tensor gt2 = Tensor::zeros_like(t2);
        conv3x3_backward(t2, model.params[static_cast<size_t>(i)][2], g, gt2,
                         gs.params[static_cast<size_t>(i)][2], gs.params[static_cast<size_t>(i)][3]);
        Tensor gt1 = Tensor::zeros_like(t1);
        relu_backward(t1, gt2, gt1);
        conv3x3_backward(x, model.params[static_cast<size_t>(i)][0], gt1, gin,
                         gs.params[static_cast<size_t>(i)][0], gs.params[static_cast<size_t>(i)][1]);
        for (size_t j = 0; j < gin.data.size(); ++j) gin.data[j] += g.data[j];  // skip path
        break;
      }
      case LayerKind::GlobalAvgPool:
        gap_backward(x, g, gin);
        break;
      case LayerKind::Dense:
        dense_backward(x, model.params[static_cast<size_t>(i)][0], g, gin,
                       gs.params[static_cast<size_t>(i)][0], gs.params[static_cast<size_t>(i)][1]);
        break;
      case LayerKind::Sigmoid:
        sigmoid_backward(fp.acts[static_cast<size_t>(i) + 1], g, gin);
        break;
    }
    g = std::move(gin);
  }
  gs.input = std::move(g);
  return gs;
}

void sgd_step(ModelState& model, const GradientSet& grads, double learning_rate,
              double weight_decay, const std::vector<int>* only_layers) {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  auto update_layer = [&](size_t i) {
    for (size_t j = 0; j < model.params[i].size(); ++j) {
      auto& p = model.params[i][j].data;
      const auto& g = grads.params[i][j].data;
      for (size_t k = 0; k < p.size(); ++k) {
        if (!std::isfinite(g[k])) {
          throw std::runtime_error("sgd_step: non-finite gradient in " +
                                   layer_label(model, static_cast<int>(i)));
        }
        p[k] -= learning_rate * (g[k] + weight_decay * p[k]);
      }
    }
  };
  if (only_layers) {
    for (int i : *only_layers) update_layer(static_cast<size_t>(i));
  } else {
    for (size_t i = 0; i < model.params.size(); ++i) update_layer(i);
  }
}

const Tensor& embedding_of(const ModelState& model, const ForwardPass& fp) {
  return fp.acts.at(static_cast<size_t>(model.embedding_acts));
}

const Tensor& feature_maps_of(const ModelState& model, const ForwardPass& fp) {
  return fp.acts.at(static_cast<size_t>(model.feature_acts));
}

const Tensor& probability_of(const ForwardPass& fp) { return fp.acts.back(); }

void save_model(const ModelState& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = model.seed;
  j["in_channels"] = model.in_channels;
  j["embedding_dim"] = model.embedding_dim;
  j["embedding_acts"] = model.embedding_acts;
  j["feature_acts"] = model.feature_acts;
  j["classifier_layer"] = model.classifier_layer;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : model.layers) {
    j["layers"].push_back({{"kind", to_string(l.kind)}, {"in", l.in}, {"out", l.out}});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "TRM1\n" << j.dump() << "\n";
  for (const auto& layer : model.params) {
    for (const Tensor& t : layer) {
      f.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
  }
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint " + path.string());
  std::string magic, header;
  if (!std::getline(f, magic) || magic != "TRM1") {
    throw ConfigError(path.string() + ": not a model checkpoint (bad magic)");
  }
  if (!std::getline(f, header)) throw ConfigError(path.string() + ": truncated checkpoint header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (j.value("version", 0) != 1) throw ConfigError(path.string() + ": unsupported checkpoint version");

  ModelState m;
  m.seed = j.at("seed").get<uint64_t>();
  m.in_channels = j.at("in_channels").get<int>();
  m.embedding_dim = j.at("embedding_dim").get<int>();
  m.embedding_acts = j.at("embedding_acts").get<int>();
  m.feature_acts = j.at("feature_acts").get<int>();
  m.classifier_layer = j.at("classifier_layer").get<int>();
  for (const auto& lj : j.at("layers")) {
    m.layers.push_back({layer_kind_from_string(lj.at("kind").get<std::string>()),
                        lj.at("in").get<int>(), lj.at("out").get<int>()});
  }
  init_params(m, m.seed);  // allocates the right shapes
  for (auto& layer : m.params) {
    for (Tensor& t : layer) {
      f.read(reinterpret_cast<char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
      if (f.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(double))) {
        throw ConfigError(path.string() + ": truncated parameter block");
      }
    }
  }
  return m;
}

}  // namespace tml
