#include "umsn/network/network.hpp"

namespace umsn::network {

using nn::scaled_width;
using semantics::kNumClasses;

namespace {

// one {N,1,H,W} plane view of a {N,4,H,W} mask stack
Tensor mask_plane(const Tensor& masks, int class_index) {
    const int n = masks.dim(0), h = masks.dim(2), w = masks.dim(3);
    Tensor plane({n, 1, h, w});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane.at(b, 0, y, x) = masks.at(b, class_index - 1, y, x);
    return plane;
}

void check_forward_inputs(const Tensor& blurry, const Tensor& masks, bool needs_masks) {
    require(blurry.rank() == 4 && blurry.dim(1) == 3, "umsn: blurry input must be {N,3,H,W}");
    require(blurry.dim(2) % 2 == 0 && blurry.dim(3) % 2 == 0,
            "umsn: spatial dims must be even, got " + blurry.shape_str());
    if (needs_masks) {
        require(masks.rank() == 4 && masks.dim(0) == blurry.dim(0) && masks.dim(1) == kNumClasses &&
                    masks.dim(2) == blurry.dim(2) && masks.dim(3) == blurry.dim(3),
                "umsn: masks must be {N,4,H,W} matching the input");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// FNet
// ---------------------------------------------------------------------------

FNet::FNet(double width_multiplier, Rng& rng) {
    const int c16 = scaled_width(16, width_multiplier);
    const int c8 = scaled_width(8, width_multiplier);
    head_ = nn::ResBlock({.in_channels = 3, .out_channels = c16}, rng);
    trunk_ = nn::DenseTrunk({{.in_channels = c16, .out_channels = c16},
                             {.in_channels = c16, .out_channels = c16},
                             {.in_channels = c16, .out_channels = c16},
                             {.in_channels = c16, .out_channels = c8}},
                            rng);
    out_channels_ = c8;
}

ad::Var FNet::forward(const ad::Var& masked_image) const {
    return trunk_.forward(nn::downsample(head_.forward(masked_image)));
}

void FNet::collect(nn::ParamMap& pm, const std::string& prefix) const {
    head_.collect(pm, prefix + ".head");
    trunk_.collect(pm, prefix + ".trunk");
}

// ---------------------------------------------------------------------------
// Stage1Head
// ---------------------------------------------------------------------------

Stage1Head::Stage1Head(double width_multiplier, Rng& rng) {
    const int c16 = scaled_width(16, width_multiplier);
    const int c8 = scaled_width(8, width_multiplier);
    rb_ = nn::ResBlock({.in_channels = c8, .out_channels = c16}, rng);
    conv_ = nn::ConvUnit({.kernel_size = 3, .in_channels = c16, .out_channels = 3}, rng);
}

ad::Var Stage1Head::forward(const ad::Var& features) const {
    return conv_.forward(rb_.forward(nn::upsample(features)));
}

void Stage1Head::collect(nn::ParamMap& pm, const std::string& prefix) const {
    rb_.collect(pm, prefix + ".rb");
    conv_.collect(pm, prefix + ".conv");
}

ad::Var stage1_forward(const FNet& fnet, const Stage1Head& head, const ad::Var& blurry, const Tensor& plane) {
    const Tensor& y = blurry.value();
    require(y.rank() == 4 && y.dim(1) == 3, "stage1: blurry input must be {N,3,H,W}");
    require(y.dim(2) % 2 == 0 && y.dim(3) % 2 == 0, "stage1: spatial dims must be even");
    require(plane.rank() == 4 && plane.dim(0) == y.dim(0) && plane.dim(1) == 1 && plane.dim(2) == y.dim(2) &&
                plane.dim(3) == y.dim(3),
            "stage1: mask plane must be {N,1,H,W} matching the input");
    ad::Var residual = head.forward(fnet.forward(ad::mul_plane(blurry, plane)));
    return ad::add(blurry, residual);
}

// ---------------------------------------------------------------------------
// BNet
// ---------------------------------------------------------------------------

BNet::BNet(double width_multiplier, int in_channels, Rng& rng) {
    const int c64 = scaled_width(64, width_multiplier);
    const int c16 = scaled_width(16, width_multiplier);
    head_ = nn::ResBlock({.in_channels = in_channels, .out_channels = c64}, rng);
    std::vector<nn::ResBlockSpec> specs(6, nn::ResBlockSpec{.in_channels = c64, .out_channels = c64});
    trunk_ = nn::DenseTrunk(specs, rng);
    tail_rb_ = nn::ResBlock({.in_channels = c64, .out_channels = c16}, rng);
    tail_conv_ = nn::ConvUnit({.kernel_size = 3, .in_channels = c16, .out_channels = 3}, rng);
    head_channels_ = c64;
}

ad::Var BNet::forward_head(const ad::Var& x) const { return nn::downsample(head_.forward(x)); }

ad::Var BNet::forward_rest(const ad::Var& features) const {
    return tail_conv_.forward(tail_rb_.forward(nn::upsample(trunk_.forward(features))));
}

void BNet::collect(nn::ParamMap& pm, const std::string& prefix) const {
    head_.collect(pm, prefix + ".head");
    trunk_.collect(pm, prefix + ".trunk");
    tail_rb_.collect(pm, prefix + ".tail_rb");
    tail_conv_.collect(pm, prefix + ".tail_conv");
}

// ---------------------------------------------------------------------------
// UMSN
// ---------------------------------------------------------------------------

UMSN::UMSN(const UMSNConfig& cfg) : cfg_(cfg) {
    require(cfg.width_multiplier > 0.0, "umsn: width multiplier must be positive");
    Rng rng(cfg.seed);
    const int in_ch = cfg.use_mask_concat ? 3 + kNumClasses : 3;
    if (cfg.use_streams) {
        for (int i = 0; i < kNumClasses; ++i) fnets_.emplace_back(cfg.width_multiplier, rng);
        if (cfg.keep_stage1_heads)
            for (int i = 0; i < kNumClasses; ++i) heads_.emplace_back(cfg.width_multiplier, rng);
    }
    bnet_ = BNet(cfg.width_multiplier, in_ch, rng);
    if (cfg.use_streams) {
        const int fused_in = bnet_.head_channels() + kNumClasses * fnets_[0].out_channels();
        fuse_ = nn::ConvUnit({.kernel_size = 1, .in_channels = fused_in, .out_channels = bnet_.head_channels()},
                             rng);
    }
    if (cfg.use_nrl) {
        for (int i = 0; i < kNumClasses; ++i) {
            nrl_w_.push_back(ad::Var::leaf(nn::conv_weight_init(3, 3, 1, rng), true));
            nrl_b_.push_back(ad::Var::leaf(Tensor({3}), true));
        }
    }
}

ad::Var UMSN::forward(const ad::Var& blurry, const Tensor& masks) const {
    check_forward_inputs(blurry.value(), masks, cfg_.needs_masks());

    ad::Var base_in = blurry;
    if (cfg_.use_mask_concat) base_in = ad::concat_channels({blurry, ad::Var::constant(masks)});

    ad::Var features = bnet_.forward_head(base_in);
    if (cfg_.use_streams) {
        std::vector<ad::Var> parts{features};
        for (int i = 1; i <= kNumClasses; ++i)
            parts.push_back(
                fnets_[static_cast<size_t>(i - 1)].forward(ad::mul_plane(blurry, mask_plane(masks, i))));
        features = fuse_.forward(ad::concat_channels(parts));
    }
    ad::Var residual = bnet_.forward_rest(features);

    if (cfg_.use_nrl) {
        std::vector<ad::Var> class_residuals;
        for (int i = 1; i <= kNumClasses; ++i)
            class_residuals.push_back(ad::conv2d(ad::mul_plane(blurry, mask_plane(masks, i)),
                                                 nrl_w_[static_cast<size_t>(i - 1)],
                                                 nrl_b_[static_cast<size_t>(i - 1)]));
        residual = ad::add(residual, ad::add_n(class_residuals));
    }
    return ad::add(blurry, residual);
}

void UMSN::collect(nn::ParamMap& pm) const {
    for (size_t i = 0; i < fnets_.size(); ++i) fnets_[i].collect(pm, "fnet" + std::to_string(i + 1));
    bnet_.collect(pm, "bnet");
    if (cfg_.use_streams) fuse_.collect(pm, "fuse");
    for (size_t i = 0; i < nrl_w_.size(); ++i) {
        pm.add("nrl" + std::to_string(i + 1) + ".w", nrl_w_[i]);
        pm.add("nrl" + std::to_string(i + 1) + ".b", nrl_b_[i]);
    }
}

void UMSN::collect_all(nn::ParamMap& pm) const {
    collect(pm);
    for (size_t i = 0; i < heads_.size(); ++i) heads_[i].collect(pm, "stage1_head" + std::to_string(i + 1));
}

void UMSN::zero_residual_outputs() {
    bnet_.zero_residual_output();
    for (size_t i = 0; i < nrl_w_.size(); ++i) {
        nrl_w_[i].set_value(Tensor(nrl_w_[i].value().shape()));
        nrl_b_[i].set_value(Tensor(nrl_b_[i].value().shape()));
    }
}

// ---------------------------------------------------------------------------
// ConfidenceNet
// ---------------------------------------------------------------------------

ConfidenceNet::ConfidenceNet(double width_multiplier, std::uint64_t seed, real floor) : floor_(floor) {
    require(floor > 0.0 && floor < 1.0, "cn: confidence floor must lie in (0,1)");
    Rng rng(seed);
    const int c16 = scaled_width(16, width_multiplier);
    const int c8 = scaled_width(8, width_multiplier);
    c1_ = nn::ConvUnit({.kernel_size = 3, .in_channels = 6, .out_channels = c16}, rng);
    c2_ = nn::ConvUnit({.kernel_size = 3, .in_channels = c16, .out_channels = c16}, rng);
    c3_ = nn::ConvUnit({.kernel_size = 3, .in_channels = c16, .out_channels = c8}, rng);
    head_w_ = ad::Var::leaf(nn::conv_weight_init(1, c8, 1, rng), true);
    head_b_ = ad::Var::leaf(Tensor({1}), true);
}

ad::Var ConfidenceNet::forward(const ad::Var& masked_pred, const ad::Var& masked_truth) const {
    const Tensor& a = masked_pred.value();
    require(a.rank() == 4 && a.dim(1) == 3, "cn: inputs must be {N,3,H,W}");
    require(a.same_shape(masked_truth.value()), "cn: input dimensions differ");
    require(a.dim(2) % 4 == 0 && a.dim(3) % 4 == 0,
            "cn: spatial dims must be divisible by 4, got " + a.shape_str());
    ad::Var h = c1_.forward(ad::concat_channels({masked_pred, masked_truth}));
    h = c2_.forward(nn::downsample(h));
    h = c3_.forward(nn::downsample(h));
    h = ad::conv2d(ad::global_avg_pool(h), head_w_, head_b_);
    h = ad::clamp_min(ad::sigmoid(h), floor_);
    return ad::reshape(h, {a.dim(0)});
}

real ConfidenceNet::score(const Tensor& masked_pred, const Tensor& masked_truth) const {
    require(masked_pred.rank() == 3 && masked_pred.dim(0) == 3, "cn: image must be {3,H,W}");
    require(masked_pred.same_shape(masked_truth), "cn: input dimensions differ");
    const int h = masked_pred.dim(1), w = masked_pred.dim(2);
    ad::Var c = forward(ad::Var::constant(masked_pred.reshaped({1, 3, h, w})),
                        ad::Var::constant(masked_truth.reshaped({1, 3, h, w})));
    return c.value()[0];
}

void ConfidenceNet::collect(nn::ParamMap& pm, const std::string& prefix) const {
    c1_.collect(pm, prefix + ".c1");
    c2_.collect(pm, prefix + ".c2");
    c3_.collect(pm, prefix + ".c3");
    pm.add(prefix + ".head.w", head_w_);
    pm.add(prefix + ".head.b", head_b_);
}

}  // namespace umsn::network
