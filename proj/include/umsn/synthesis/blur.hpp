#pragma once

#include "umsn/semantics/masks.hpp"
#include "umsn/synthesis/kernel.hpp"

namespace umsn::synthesis {

/// Per-channel 2D convolution with reflect padding; output size equals input
/// size. Throws when the kernel exceeds the image in either dimension.
Tensor blur(const Tensor& image, const BlurKernel& kernel);

/// Adds i.i.d. zero-mean Gaussian noise with std `sigma`, then clips to [0,1].
Tensor add_noise(const Tensor& image, double sigma, std::uint64_t seed);

/// Blurs only one semantic class: m_i (*) blur(x) + (1 - m_i) (*) x.
Tensor class_blur(const Tensor& clean, const semantics::SemanticMaskSet& masks, int class_index,
                  const BlurKernel& kernel);

}  // namespace umsn::synthesis
