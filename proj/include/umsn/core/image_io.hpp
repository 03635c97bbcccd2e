#pragma once

#include <string>
#include <vector>

#include "umsn/core/tensor.hpp"

namespace umsn {

/// Images live in memory as {3,H,W} tensors of reals in [0,1] (RGB order).
/// PNG files are 8-bit; loading and saving quantizes accordingly.
Tensor load_image_png(const std::string& path);
void save_image_png(const std::string& path, const Tensor& image);

/// Single-channel indexed PNG (raw byte values, e.g. class ids or the 11
/// source parsing labels). Returned as {H,W} with integral values.
Tensor load_index_png(const std::string& path);
void save_index_png(const std::string& path, const Tensor& indices);

/// Horizontal concatenation of same-height images into one PNG row
/// (side-by-side comparison grids).
void save_image_row_png(const std::string& path, const std::vector<Tensor>& images);

inline real clamp01(real v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace umsn
