#pragma once

#include <string>

#include "umsn/core/tensor.hpp"

namespace umsn {

/// Minimal NPY v1.0 I/O for little-endian float64 C-order arrays.
/// Used for the portable kernel grids and soft-mask debug dumps.
void save_npy(const std::string& path, const Tensor& t);
Tensor load_npy(const std::string& path);

}  // namespace umsn
