#pragma once

#include <cstdint>

#include "umsn/nn/blocks.hpp"
#include "umsn/semantics/masks.hpp"

namespace umsn::semantics {

/// Segmentation network: ResBlock(3,32) - down - 3x ResBlock(32,32) - up -
/// ResBlock(32,16) - Conv3x3(16,4) - per-pixel normalization, all nominal
/// widths scaled by the width multiplier.
class SNet {
public:
    SNet() = default;
    SNet(double width_multiplier, std::uint64_t seed);

    /// Raw class scores {N,4,H,W}; input {N,3,H,W} with even spatial dims.
    ad::Var forward_logits(const ad::Var& image) const;
    /// Soft masks (per-pixel softmax over the 4 channels).
    ad::Var forward(const ad::Var& image) const;

    /// Single-image inference to a soft mask set.
    SemanticMaskSet infer(const Tensor& image) const;

    void collect(nn::ParamMap& pm, const std::string& prefix = "snet") const;
    double width_multiplier() const { return width_; }

private:
    double width_ = 1.0;
    nn::ResBlock b_in_, b_out_;
    std::vector<nn::ResBlock> trunk_;
    nn::ConvUnit head_;
};

}  // namespace umsn::semantics
