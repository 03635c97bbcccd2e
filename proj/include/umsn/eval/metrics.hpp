#pragma once

#include <array>

#include "umsn/losses/losses.hpp"
#include "umsn/semantics/masks.hpp"

namespace umsn::eval {

struct PsnrResult {
    real db = 0.0;
    bool identical = false;  // flagged instead of reporting +inf
};

real mse(const Tensor& a, const Tensor& b);

/// 10*log10(1/MSE) on [0,1]-valued images of equal size.
PsnrResult psnr(const Tensor& a, const Tensor& b);

/// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03,
/// dynamic range 1, valid-window positions, averaged over channels.
real ssim(const Tensor& a, const Tensor& b);

/// L2 norm of the deep-tap feature difference.
real feature_distance(const Tensor& a, const Tensor& b, const losses::FeatureExtractor& extractor);

struct ClassMetric {
    bool empty = false;      // class has no pixels
    bool identical = false;  // zero masked error
    real psnr_db = 0.0;
    real ssim = 0.0;
    real mse = 0.0;
    long pixels = 0;
};

/// Per-class PSNR/SSIM on m_i (*) images; masked MSE normalized by class
/// pixel count so the per-class values recompose into the whole-image MSE.
std::array<ClassMetric, 4> per_class_metrics(const Tensor& pred, const Tensor& truth,
                                             const semantics::SemanticMaskSet& masks);

}  // namespace umsn::eval
