#include "umsn/nn/blocks.hpp"

#include <cmath>

namespace umsn::nn {

Var* ParamMap::find(const std::string& name) {
    for (auto& [n, v] : items)
        if (n == name) return &v;
    return nullptr;
}

const Var* ParamMap::find(const std::string& name) const {
    for (const auto& [n, v] : items)
        if (n == name) return &v;
    return nullptr;
}

void ParamMap::zero_grads() {
    for (auto& [n, v] : items) v.zero_grad();
}

std::int64_t ParamMap::total_size() const {
    std::int64_t s = 0;
    for (const auto& [n, v] : items) s += v.value().size();
    return s;
}

int scaled_width(int nominal, double multiplier) {
    return std::max(1, static_cast<int>(std::lround(nominal * multiplier)));
}

Tensor conv_weight_init(int out_ch, int in_ch, int k, Rng& rng) {
    Tensor w({out_ch, in_ch, k, k});
    const real s = std::sqrt(2.0 / (static_cast<real>(in_ch) * k * k));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, s);
    return w;
}

Tensor identity_smooth_kernel(int dilation) {
    Tensor k({2 * dilation - 1});
    k[dilation - 1] = 1.0;
    return k;
}

ConvUnit::ConvUnit(const ConvUnitSpec& spec, Rng& rng) : spec_(spec) {
    require(spec.kernel_size % 2 == 1, "conv unit: kernel size must be odd");
    require(spec.in_channels > 0 && spec.out_channels > 0, "conv unit: channel counts must be positive");
    require(spec.dilation >= 1, "conv unit: dilation must be >= 1");
    require(!spec.smoothed || spec.dilation >= 2, "conv unit: smoothing requires dilation >= 2");
    w_ = Var::leaf(conv_weight_init(spec.out_channels, spec.in_channels, spec.kernel_size, rng), true);
    b_ = Var::leaf(Tensor({spec.out_channels}), true);
    if (spec.smoothed) smooth_ = Var::leaf(identity_smooth_kernel(spec.dilation), true);
}

Var ConvUnit::forward(const Var& x) const {
    require(x.value().rank() == 4, "conv unit: input must be {N,C,H,W}");
    require(x.value().dim(1) == spec_.in_channels, "conv unit: expected " + std::to_string(spec_.in_channels) +
                                                       " input channels, got " + std::to_string(x.value().dim(1)));
    Var h = ad::relu(ad::instance_norm(x));
    if (spec_.smoothed) h = ad::sep_shared_conv(h, smooth_);
    return ad::conv2d(h, w_, b_, spec_.dilation);
}

void ConvUnit::collect(ParamMap& pm, const std::string& prefix) const {
    pm.add(prefix + ".w", w_);
    pm.add(prefix + ".b", b_);
    if (spec_.smoothed) pm.add(prefix + ".smooth", smooth_);
}

void ConvUnit::zero_output() {
    w_.set_value(Tensor(w_.value().shape()));
    b_.set_value(Tensor(b_.value().shape()));
}

Var smoothed_dilated_conv(const Var& x, const Var& weight, const Var& bias, const Var& smooth1d, int dilation) {
    require(dilation >= 2, "smoothed_dilated_conv: dilation must be >= 2");
    return ad::conv2d(ad::sep_shared_conv(x, smooth1d), weight, bias, dilation);
}

ResBlock::ResBlock(const ResBlockSpec& spec, Rng& rng) : spec_(spec) {
    require(spec.in_channels > 0 && spec.out_channels > 0, "res block: channel counts must be positive");
    const int mid = scaled_width(spec.out_channels, spec.width_multiplier);
    u1_ = ConvUnit({.kernel_size = 1, .in_channels = spec.in_channels, .out_channels = mid}, rng);
    u2_ = ConvUnit({.kernel_size = 3, .in_channels = mid, .out_channels = mid}, rng);
    u3_ = ConvUnit({.kernel_size = 3, .in_channels = mid, .out_channels = mid, .dilation = 2, .smoothed = true}, rng);
    u4_ = ConvUnit(
        {.kernel_size = 3, .in_channels = mid, .out_channels = spec.out_channels, .dilation = 2, .smoothed = true},
        rng);
    project_ = spec.in_channels != spec.out_channels;
    if (project_) {
        skip_w_ = Var::leaf(conv_weight_init(spec.out_channels, spec.in_channels, 1, rng), true);
        skip_b_ = Var::leaf(Tensor({spec.out_channels}), true);
    }
}

Var ResBlock::forward(const Var& x) const {
    Var h = u4_.forward(u3_.forward(u2_.forward(u1_.forward(x))));
    Var skip = project_ ? ad::conv2d(x, skip_w_, skip_b_) : x;
    return ad::add(h, skip);
}

void ResBlock::collect(ParamMap& pm, const std::string& prefix) const {
    u1_.collect(pm, prefix + ".u1");
    u2_.collect(pm, prefix + ".u2");
    u3_.collect(pm, prefix + ".u3");
    u4_.collect(pm, prefix + ".u4");
    if (project_) {
        pm.add(prefix + ".skip.w", skip_w_);
        pm.add(prefix + ".skip.b", skip_b_);
    }
}

DenseTrunk::DenseTrunk(const std::vector<ResBlockSpec>& specs, Rng& rng) {
    require(!specs.empty(), "dense trunk: needs at least one block");
    int carried = specs[0].in_channels;  // trunk input width
    for (size_t j = 0; j < specs.size(); ++j) {
        if (j > 0) {
            fusers_.emplace_back(
                ConvUnitSpec{.kernel_size = 1, .in_channels = carried, .out_channels = specs[j].in_channels}, rng);
        }
        blocks_.emplace_back(specs[j], rng);
        carried += specs[j].out_channels;
    }
}

Var DenseTrunk::forward(const Var& x) const {
    std::vector<Var> feats{x};
    Var out;
    for (size_t j = 0; j < blocks_.size(); ++j) {
        Var in = (j == 0) ? x : fusers_[j - 1].forward(ad::concat_channels(feats));
        out = blocks_[j].forward(in);
        feats.push_back(out);
    }
    return out;
}

void DenseTrunk::collect(ParamMap& pm, const std::string& prefix) const {
    for (size_t j = 0; j < blocks_.size(); ++j) {
        if (j > 0) fusers_[j - 1].collect(pm, prefix + ".fuse" + std::to_string(j));
        blocks_[j].collect(pm, prefix + ".rb" + std::to_string(j));
    }
}

}  // namespace umsn::nn
