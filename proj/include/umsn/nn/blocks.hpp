#pragma once

#include <string>
#include <vector>

#include "umsn/ad/ops.hpp"
#include "umsn/core/rng.hpp"

namespace umsn::nn {

using ad::Var;

/// Ordered parameter registry; order is the checkpoint and optimizer order.
struct ParamMap {
    std::vector<std::pair<std::string, Var>> items;

    void add(const std::string& name, const Var& v) { items.emplace_back(name, v); }
    Var* find(const std::string& name);
    const Var* find(const std::string& name) const;
    void zero_grads();
    std::int64_t total_size() const;
};

int scaled_width(int nominal, double multiplier);

Tensor conv_weight_init(int out_ch, int in_ch, int k, Rng& rng);

/// Identity 1-D smoothing kernel (center tap 1) of length 2*dilation-1.
Tensor identity_smooth_kernel(int dilation);

struct ConvUnitSpec {
    int kernel_size = 3;
    int in_channels = 0;
    int out_channels = 0;
    int dilation = 1;
    bool smoothed = false;
};

/// Pre-activation unit: instance norm -> ReLU -> (smoothing) -> convolution.
/// Spatial size is preserved ("same" padding).
class ConvUnit {
public:
    ConvUnit() = default;
    ConvUnit(const ConvUnitSpec& spec, Rng& rng);

    Var forward(const Var& x) const;
    void collect(ParamMap& pm, const std::string& prefix) const;
    const ConvUnitSpec& spec() const { return spec_; }

    /// Zeroes weights and bias so the unit emits exactly zero; residual
    /// branches initialized this way start as the identity map.
    void zero_output();

private:
    ConvUnitSpec spec_;
    Var w_, b_, smooth_;
};

/// Raw dilated convolution preceded by the shared separable smoothing filter.
/// Exposed separately from ConvUnit so receptive-field behavior can be probed
/// without the normalization stage.
Var smoothed_dilated_conv(const Var& x, const Var& weight, const Var& bias, const Var& smooth1d, int dilation);

struct ResBlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    double width_multiplier = 1.0;  // internal width = out_channels * this
};

/// ResBlock: 1x1 unit -> 3x3 unit -> two smoothed dilated 3x3 units (r=2),
/// plus an additive skip (1x1-projected when channel counts differ).
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(const ResBlockSpec& spec, Rng& rng);

    Var forward(const Var& x) const;
    void collect(ParamMap& pm, const std::string& prefix) const;
    int out_channels() const { return spec_.out_channels; }
    int in_channels() const { return spec_.in_channels; }

private:
    ResBlockSpec spec_;
    ConvUnit u1_, u2_, u3_, u4_;
    bool project_ = false;
    Var skip_w_, skip_b_;
};

/// Sequence of ResBlocks with dense connectivity: every block past the first
/// consumes the 1x1-fused concatenation of the trunk input and all previous
/// block outputs.
class DenseTrunk {
public:
    DenseTrunk() = default;
    DenseTrunk(const std::vector<ResBlockSpec>& specs, Rng& rng);

    Var forward(const Var& x) const;
    void collect(ParamMap& pm, const std::string& prefix) const;

private:
    std::vector<ResBlock> blocks_;
    std::vector<ConvUnit> fusers_;  // fusers_[j] feeds blocks_[j+1]
};

inline Var downsample(const Var& x) { return ad::avg_pool2(x); }
inline Var upsample(const Var& x) { return ad::upsample_bilinear2(x); }

}  // namespace umsn::nn
