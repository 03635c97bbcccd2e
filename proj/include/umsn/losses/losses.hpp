#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "umsn/ad/ops.hpp"
#include "umsn/semantics/masks.hpp"

namespace umsn::losses {

struct LossConfig {
    real lambda = 0.01;             // confidence regularizer weight
    real lambda1 = 0.0002;          // perceptual weight
    real confidence_floor = 1e-6;

    void validate() const {
        require(lambda >= 0.0, "loss config: lambda must be >= 0");
        require(lambda1 >= 0.0, "loss config: lambda1 must be >= 0");
        require(confidence_floor > 0.0 && confidence_floor < 1.0,
                "loss config: confidence floor must lie in (0,1)");
    }
};

/// Fixed, seeded convolutional feature stack with two taps: "shallow" (two
/// full-resolution conv+relu layers) and "deep" (three further pool+conv
/// stages, 1/8 resolution). Parameters are frozen; a loader accepts
/// externally supplied face-descriptor weights in the same layout.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed);
    static FeatureExtractor from_file(const std::string& path);
    void save(const std::string& path) const;

    ad::Var shallow(const ad::Var& image) const;  // {N,3,H,W} -> {N,8,H,W}
    ad::Var deep(const ad::Var& image) const;     // H,W divisible by 8 -> {N,16,H/8,W/8}

    Tensor shallow_features(const Tensor& image) const;  // {3,H,W} convenience
    Tensor deep_features(const Tensor& image) const;

    std::string describe() const;

private:
    FeatureExtractor() = default;
    std::array<Tensor, 5> w_;
    std::array<Tensor, 5> b_;
    std::uint64_t seed_ = 0;
    bool loaded_ = false;
};

/// Class-decomposed mean L1. per_class[i] = |m_i (*) (pred - truth)|_1 /
/// (H*W*3); total is their sum (averaged over the batch in the graph form).
struct ClassL1 {
    real total;
    std::array<real, 4> per_class;
};
ClassL1 class_l1(const Tensor& pred, const Tensor& truth, const semantics::SemanticMaskSet& masks);

struct ClassL1Graph {
    ad::Var total;                  // scalar: batch mean of the class sum
    std::array<ad::Var, 4> per_class;  // {N} each
};
/// pred {N,3,H,W}; truth and masks {N,3,H,W}/{N,4,H,W} constants.
ClassL1Graph class_l1_graph(const ad::Var& pred, const Tensor& truth, const Tensor& masks);

/// sum_i C_i * l_i - lambda * log(C_i). C_i enter the deblurring branch as
/// constants; only the confidence branch sees the full expression.
real confidence_loss(const std::array<real, 4>& per_class, const std::array<real, 4>& confidences,
                     const LossConfig& config);
ad::Var confidence_loss_graph(const std::array<ad::Var, 4>& per_class,
                              const std::array<ad::Var, 4>& confidences, const LossConfig& config);

/// Mean squared difference of shallow-tap features.
real perceptual_loss(const Tensor& pred, const Tensor& truth, const FeatureExtractor& extractor);
ad::Var perceptual_loss_graph(const ad::Var& pred, const Tensor& truth, const FeatureExtractor& extractor);

struct TotalLossDiagnostics {
    std::array<real, 4> per_class;
    std::array<real, 4> confidences;
    real l_confidence;
    real l_perceptual;
};
struct TotalLoss {
    real value;
    TotalLossDiagnostics diagnostics;
};
/// L_total = L_c + lambda1 * L_p for a single image pair with given
/// confidence values.
TotalLoss total_loss(const Tensor& pred, const Tensor& truth, const semantics::SemanticMaskSet& masks,
                     const std::array<real, 4>& confidences, const FeatureExtractor& extractor,
                     const LossConfig& config);

struct TotalLossGraph {
    ad::Var value;
    std::array<ad::Var, 4> per_class;  // {N}
    ad::Var l_confidence;
    ad::Var l_perceptual;
};
TotalLossGraph total_loss_graph(const ad::Var& pred, const Tensor& truth, const Tensor& masks,
                                const std::array<ad::Var, 4>& confidences, const FeatureExtractor& extractor,
                                const LossConfig& config);

}  // namespace umsn::losses
