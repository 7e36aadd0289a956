#include "tml/cam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tml/common.hpp"

namespace tml {

Tensor compute_cam(const Tensor& feature_maps, const std::vector<double>& weights) {
  if (feature_maps.rank() != 3) {
    throw std::invalid_argument("compute_cam: feature maps must be (K,h,w), got " +
                                feature_maps.shape_str());
  }
  const int k = feature_maps.dim(0), h = feature_maps.dim(1), w = feature_maps.dim(2);
  if (static_cast<size_t>(k) != weights.size()) {
    throw std::invalid_argument("compute_cam: " + std::to_string(k) + " feature channels but " +
                                std::to_string(weights.size()) + " weights");
  }
  Tensor cam({h, w});
  for (int c = 0; c < k; ++c) {
    const double wc = weights[static_cast<size_t>(c)];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) cam.at(y, x) += wc * feature_maps.at(c, y, x);
    }
  }
  return cam;
}

std::vector<double> effective_weights(const ModelState& model) {
  // locate the pooling stage and whatever dense layers follow it
  int gap = -1;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].kind == LayerKind::GlobalAvgPool) gap = static_cast<int>(i);
  }
  if (gap < 0) {
    throw std::invalid_argument("effective_weights: unsupported architecture "
                                "(no global average pooling stage)");
  }
  std::vector<int> dense_after;
  for (size_t i = static_cast<size_t>(gap) + 1; i < model.layers.size(); ++i) {
    if (model.layers[i].kind == LayerKind::Dense) dense_after.push_back(static_cast<int>(i));
  }
  if (dense_after.empty() || dense_after.back() != model.classifier_layer) {
    throw std::invalid_argument("effective_weights: unsupported architecture "
                                "(classifier is not the last dense layer after pooling)");
  }

  const Tensor& v = model.classifier_weights();  // (1, E)
  std::vector<double> eff(static_cast<size_t>(v.dim(1)));
  for (int i = 0; i < v.dim(1); ++i) eff[static_cast<size_t>(i)] = v.at(0, i);

  if (dense_after.size() == 1) return eff;  // classifier reads the pooled maps directly
  if (dense_after.size() > 2) {
    throw std::invalid_argument("effective_weights: unsupported architecture "
                                "(more than one embedding layer after pooling)");
  }
  // compose through the head's linear part: w_k = sum_e W(e,k) * v_e
  const Tensor& head = model.params[static_cast<size_t>(dense_after[0])][0];  // (E, K)
  std::vector<double> composed(static_cast<size_t>(head.dim(1)), 0.0);
  for (int e = 0; e < head.dim(0); ++e) {
    for (int k = 0; k < head.dim(1); ++k) {
      composed[static_cast<size_t>(k)] += head.at(e, k) * eff[static_cast<size_t>(e)];
    }
  }
  return composed;
}

Tensor upsample_bilinear(const Tensor& grid, int out_h, int out_w) {
  if (grid.rank() != 2) {
    throw std::invalid_argument("upsample_bilinear: expected rank-2 grid, got " + grid.shape_str());
  }
  const int h = grid.dim(0), w = grid.dim(1);
  if (out_h < h || out_w < w) {
    throw std::invalid_argument("upsample_bilinear: target " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " smaller than source " + grid.shape_str());
  }
  Tensor out({out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const double sy = out_h == 1 || h == 1 ? 0.0
                                           : static_cast<double>(y) * (h - 1) / (out_h - 1);
    const int y0 = std::min(static_cast<int>(sy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = out_w == 1 || w == 1 ? 0.0
                                             : static_cast<double>(x) * (w - 1) / (out_w - 1);
      const int x0 = std::min(static_cast<int>(sx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      out.at(y, x) = (1 - fy) * ((1 - fx) * grid.at(y0, x0) + fx * grid.at(y0, x1)) +
                     fy * ((1 - fx) * grid.at(y1, x0) + fx * grid.at(y1, x1));
    }
  }
  return out;
}

bool localization_hit(const Tensor& cam, const std::vector<uint8_t>& mask, int mask_side,
                      int dilation_px) {
  if (cam.rank() != 2 || cam.dim(0) != mask_side || cam.dim(1) != mask_side) {
    throw std::invalid_argument("localization_hit: map " + cam.shape_str() + " does not match mask side " +
                                std::to_string(mask_side));
  }
  if (dilation_px < 0) throw std::invalid_argument("dilation_px must be >= 0");
  bool any = false;
  for (uint8_t m : mask) any = any || m != 0;
  if (!any) throw std::invalid_argument("localization_hit: event mask is empty");

  int ay = 0, ax = 0;
  double best = cam.at(0, 0);
  for (int y = 0; y < mask_side; ++y) {
    for (int x = 0; x < mask_side; ++x) {
      if (cam.at(y, x) > best) {
        best = cam.at(y, x);
        ay = y;
        ax = x;
      }
    }
  }
  const int y_lo = std::max(0, ay - dilation_px), y_hi = std::min(mask_side - 1, ay + dilation_px);
  const int x_lo = std::max(0, ax - dilation_px), x_hi = std::min(mask_side - 1, ax + dilation_px);
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      if (mask[static_cast<size_t>(y) * mask_side + x]) return true;
    }
  }
  return false;
}

void export_overlay(const Image8& frame, const Tensor& cam_upsampled,
                    const std::filesystem::path& path) {
  if (frame.channels != 3) throw std::invalid_argument("export_overlay: frame must have 3 channels");
  if (cam_upsampled.rank() != 2 || cam_upsampled.dim(0) != frame.height ||
      cam_upsampled.dim(1) != frame.width) {
    throw std::invalid_argument("export_overlay: map " + cam_upsampled.shape_str() +
                                " does not match frame " + std::to_string(frame.height) + "x" +
                                std::to_string(frame.width));
  }
  double lo = cam_upsampled.data[0], hi = cam_upsampled.data[0];
  for (double v : cam_upsampled.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;

  Image8 out{3, frame.height, frame.width,
             std::vector<uint8_t>(static_cast<size_t>(3) * frame.height * frame.width)};
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double heat = span > 0.0 ? (cam_upsampled.at(y, x) - lo) / span : 0.0;
      const double r = 0.5 * (frame.at(0, y, x) / 255.0) + 0.5 * heat;
      const double g = 0.5 * (frame.at(1, y, x) / 255.0);
      const double b = 0.5 * (frame.at(2, y, x) / 255.0);
      out.at(0, y, x) = static_cast<uint8_t>(std::lround(std::clamp(r, 0.0, 1.0) * 255.0));
      out.at(1, y, x) = static_cast<uint8_t>(std::lround(std::clamp(g, 0.0, 1.0) * 255.0));
      out.at(2, y, x) = static_cast<uint8_t>(std::lround(std::clamp(b, 0.0, 1.0) * 255.0));
    }
  }
  write_ppm(path, out);
}

std::string cam_to_csv(const Tensor& grid) {
  if (grid.rank() != 2) throw std::invalid_argument("cam_to_csv: expected rank-2 grid");
  std::ostringstream out;
  for (int y = 0; y < grid.dim(0); ++y) {
    for (int x = 0; x < grid.dim(1); ++x) {
      if (x) out << ',';
      out << format_double(grid.at(y, x));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace tml
