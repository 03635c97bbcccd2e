#pragma once

#include <string>
#include <utility>
#include <vector>

#include "umsn/core/tensor.hpp"

namespace umsn {

/// Named-tensor archive: the native parameter container behind checkpoints
/// and the feature-extractor weight files. Little-endian float64 payload.
using TensorArchive = std::vector<std::pair<std::string, Tensor>>;

void save_archive(const std::string& path, const TensorArchive& entries);
TensorArchive load_archive(const std::string& path);

const Tensor& archive_get(const TensorArchive& archive, const std::string& name);

}  // namespace umsn
