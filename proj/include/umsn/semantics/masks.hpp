#pragma once

#include <array>
#include <string>
#include <vector>

#include "umsn/core/tensor.hpp"

namespace umsn::semantics {

/// The 4 grouped face classes. Class indices are 1-based throughout the API;
/// plane storage is 0-based.
constexpr int kNumClasses = 4;
constexpr int kNumSourceLabels = 11;

/// Source face-parsing labels (11-label convention):
/// 0 background, 1 skin, 2/3 brows, 4/5 eyes, 6 nose, 7 upper lip,
/// 8 teeth, 9 lower lip, 10 hair.
int class_of_source_label(int label);              // -> 1..4
const std::string& class_name(int class_index);    // 1..4
std::vector<int> source_labels_of_class(int class_index);

/// 4 per-pixel class planes. Soft sets arise from the segmentation network;
/// hard sets are one-hot partitions.
struct SemanticMaskSet {
    Tensor planes;  // {4,H,W}, per-pixel sum 1
    bool hard = true;

    int height() const { return planes.dim(1); }
    int width() const { return planes.dim(2); }
    Tensor plane(int class_index) const;  // {H,W} copy of one class plane

    /// Throws when planes are out of [0,1], don't sum to 1 per pixel, or a
    /// hard set contains non-binary values.
    void validate() const;
};

/// Groups an 11-label map {H,W} into the 4-class hard partition.
SemanticMaskSet group_labels(const Tensor& labels11);

/// m_i (*) x for every class; the four parts sum back to the input.
std::array<Tensor, 4> decompose(const Tensor& image, const SemanticMaskSet& masks);

/// Per-pixel argmax with lowest-index tie-break.
SemanticMaskSet harden(const SemanticMaskSet& masks);

/// Harmonic mean of precision and recall for one class plane. Inputs are
/// hardened first. A class empty in both prediction and truth scores 1.
real f_score(const SemanticMaskSet& pred, const SemanticMaskSet& truth, int class_index);

// index-image (values 0..3) serialization of hard mask sets
Tensor mask_to_index(const SemanticMaskSet& hard_masks);
SemanticMaskSet mask_from_index(const Tensor& index_image);

}  // namespace umsn::semantics
