#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "umsn/nn/blocks.hpp"
#include "umsn/semantics/masks.hpp"

namespace umsn::network {

/// Class-specific feature stream: ResBlock(3,16) - avgpool - dense trunk of
/// ResBlock(16,16)x3 + ResBlock(16,8). Consumes the masked image m_i (*) y and
/// emits 8-channel features at half resolution.
class FNet {
public:
    FNet() = default;
    FNet(double width_multiplier, Rng& rng);

    ad::Var forward(const ad::Var& masked_image) const;
    int out_channels() const { return out_channels_; }
    void collect(nn::ParamMap& pm, const std::string& prefix) const;

private:
    nn::ResBlock head_;
    nn::DenseTrunk trunk_;
    int out_channels_ = 0;
};

/// Reconstruction head used in first-stage pretraining: upsample -
/// ResBlock(8,16) - Conv3x3(16,3), producing a full-resolution residual.
class Stage1Head {
public:
    Stage1Head() = default;
    Stage1Head(double width_multiplier, Rng& rng);

    ad::Var forward(const ad::Var& features) const;
    void collect(nn::ParamMap& pm, const std::string& prefix) const;
    /// Start the stream at the identity map (zero residual).
    void zero_residual_output() { conv_.zero_output(); }

private:
    nn::ResBlock rb_;
    nn::ConvUnit conv_;
};

/// Base trunk: ResBlock(in,64) - avgpool - dense ResBlock(64,64)x6 -
/// upsample - ResBlock(64,16) - Conv3x3(16,3).
class BNet {
public:
    BNet() = default;
    BNet(double width_multiplier, int in_channels, Rng& rng);

    /// First layer (ResBlock + avgpool); half-resolution 64-channel features.
    ad::Var forward_head(const ad::Var& x) const;
    /// Remaining trunk from half-resolution features to the 3-channel map.
    ad::Var forward_rest(const ad::Var& features) const;
    ad::Var forward(const ad::Var& x) const { return forward_rest(forward_head(x)); }

    int head_channels() const { return head_channels_; }
    void collect(nn::ParamMap& pm, const std::string& prefix) const;
    void zero_residual_output() { tail_conv_.zero_output(); }

private:
    nn::ResBlock head_;
    nn::DenseTrunk trunk_;
    nn::ResBlock tail_rb_;
    nn::ConvUnit tail_conv_;
    int head_channels_ = 0;
};

struct UMSNConfig {
    double width_multiplier = 1.0;
    std::uint64_t seed = 0;
    // ablation switches (the full model keeps the defaults)
    bool use_streams = true;      // F-Net streams fused into the base trunk
    bool use_mask_concat = false; // feed masks as extra base-trunk input channels
    bool use_nrl = true;          // nested residual projections
    bool keep_stage1_heads = true;

    bool needs_masks() const { return use_streams || use_mask_concat || use_nrl; }
};

/// The assembled deblurring network. Forward maps (blurry, masks) to the
/// unclamped estimate y + (trunk residual + nested class residuals).
class UMSN {
public:
    UMSN() = default;
    explicit UMSN(const UMSNConfig& cfg);

    /// blurry {N,3,H,W} (even spatial dims); masks {N,4,H,W} treated as
    /// constants. Returns the unclamped estimate; clamp at inference.
    ad::Var forward(const ad::Var& blurry, const Tensor& masks) const;

    /// Trainable surface of the joint phase (stage-1 heads excluded).
    void collect(nn::ParamMap& pm) const;
    /// Full surface for checkpoints (includes stage-1 heads when kept).
    void collect_all(nn::ParamMap& pm) const;

    const UMSNConfig& config() const { return cfg_; }
    FNet& fnet(int class_index) { return fnets_[static_cast<size_t>(class_index - 1)]; }
    Stage1Head& stage1_head(int class_index) { return heads_[static_cast<size_t>(class_index - 1)]; }

    /// Zeroes every residual-producing output (trunk tail and NRL
    /// projections) so the forward pass is the identity on the input.
    void zero_residual_outputs();

private:
    UMSNConfig cfg_;
    std::vector<FNet> fnets_;
    std::vector<Stage1Head> heads_;
    BNet bnet_;
    nn::ConvUnit fuse_;
    std::vector<ad::Var> nrl_w_, nrl_b_;
};

/// First-stage forward: x_hat = y + head(fnet(m (*) y)).
ad::Var stage1_forward(const FNet& fnet, const Stage1Head& head, const ad::Var& blurry, const Tensor& mask_plane);

/// Confidence scorer shared across classes; consumes the 6-channel stack of
/// masked prediction and masked truth, emits one score per sample in
/// (floor, 1]. Training-only: the deblurring path never calls it at inference.
class ConfidenceNet {
public:
    ConfidenceNet() = default;
    ConfidenceNet(double width_multiplier, std::uint64_t seed, real floor = 1e-6);

    /// {N,3,H,W} x2 -> {N}; spatial dims must be divisible by 4.
    ad::Var forward(const ad::Var& masked_pred, const ad::Var& masked_truth) const;
    /// Single-image convenience: strictly inside (0,1].
    real score(const Tensor& masked_pred, const Tensor& masked_truth) const;

    void collect(nn::ParamMap& pm, const std::string& prefix = "cn") const;
    real floor() const { return floor_; }

private:
    nn::ConvUnit c1_, c2_, c3_;
    ad::Var head_w_, head_b_;
    real floor_ = 1e-6;
};

}  // namespace umsn::network
