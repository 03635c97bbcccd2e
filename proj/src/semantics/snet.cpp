#include "umsn/semantics/snet.hpp"

namespace umsn::semantics {

using nn::scaled_width;

SNet::SNet(double width_multiplier, std::uint64_t seed) : width_(width_multiplier) {
    require(width_multiplier > 0.0, "snet: width multiplier must be positive");
    Rng rng(seed);
    const int c32 = scaled_width(32, width_);
    const int c16 = scaled_width(16, width_);
    b_in_ = nn::ResBlock({.in_channels = 3, .out_channels = c32}, rng);
    for (int i = 0; i < 3; ++i) trunk_.emplace_back(nn::ResBlockSpec{.in_channels = c32, .out_channels = c32}, rng);
    b_out_ = nn::ResBlock({.in_channels = c32, .out_channels = c16}, rng);
    head_ = nn::ConvUnit({.kernel_size = 3, .in_channels = c16, .out_channels = kNumClasses}, rng);
}

ad::Var SNet::forward_logits(const ad::Var& image) const {
    const Tensor& x = image.value();
    require(x.rank() == 4 && x.dim(1) == 3, "snet: input must be {N,3,H,W}");
    require(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
            "snet: spatial dims must be even, got " + x.shape_str());
    ad::Var h = nn::downsample(b_in_.forward(image));
    for (const auto& rb : trunk_) h = rb.forward(h);
    h = b_out_.forward(nn::upsample(h));
    return head_.forward(h);
}

ad::Var SNet::forward(const ad::Var& image) const { return ad::softmax_channels(forward_logits(image)); }

SemanticMaskSet SNet::infer(const Tensor& image) const {
    require(image.rank() == 3 && image.dim(0) == 3, "snet: image must be {3,H,W}");
    ad::Var soft = forward(ad::Var::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)})));
    SemanticMaskSet set;
    set.hard = false;
    set.planes = soft.value().reshaped({kNumClasses, image.dim(1), image.dim(2)});
    return set;
}

void SNet::collect(nn::ParamMap& pm, const std::string& prefix) const {
    b_in_.collect(pm, prefix + ".in");
    for (size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect(pm, prefix + ".t" + std::to_string(i));
    b_out_.collect(pm, prefix + ".out");
    head_.collect(pm, prefix + ".head");
}

}  // namespace umsn::semantics
