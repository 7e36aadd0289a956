#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tml/image.hpp"
#include "tml/nn.hpp"
#include "tml/tensor.hpp"

namespace tml {

// M(y,x) = sum_k w_k * maps(k,y,x); maps is (K,h,w), weights length K.
Tensor compute_cam(const Tensor& feature_maps, const std::vector<double>& weights);

// Classifier weights mapped back onto the spatial feature channels. With an
// embedding head the head's linear part is composed in (its elementwise
// nonlinearity is ignored, an approximation); without one, these are the
// classifier weights directly.
std::vector<double> effective_weights(const ModelState& model);

// Align-corners bilinear; target must not shrink either dimension.
Tensor upsample_bilinear(const Tensor& grid, int out_h, int out_w);

// True when the CAM argmax (first maximum in row-major order) lands within
// `dilation_px` Chebyshev distance of a mask pixel, boundary inclusive.
bool localization_hit(const Tensor& cam, const std::vector<uint8_t>& mask, int mask_side,
                      int dilation_px = 2);

// 50/50 red blend of the min-max-normalized CAM onto the frame; a constant
// CAM normalizes to zero. Bytes are reproducible.
void export_overlay(const Image8& frame, const Tensor& cam_upsampled,
                    const std::filesystem::path& path);

std::string cam_to_csv(const Tensor& grid);

}  // namespace tml
