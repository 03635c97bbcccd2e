#include "umsn/semantics/masks.hpp"

#include <cmath>

namespace umsn::semantics {

namespace {

// class 1 background; class 2 face skin; class 3 brows/eyes/nose/lips/teeth;
// class 4 hair
constexpr int kLabelToClass[kNumSourceLabels] = {1, 2, 3, 3, 3, 3, 3, 3, 3, 3, 4};
const std::string kClassNames[kNumClasses] = {"background", "skin", "inner_parts", "hair"};

}  // namespace

int class_of_source_label(int label) {
    require(label >= 0 && label < kNumSourceLabels,
            "source label out of range [0,10]: " + std::to_string(label));
    return kLabelToClass[label];
}

const std::string& class_name(int class_index) {
    require(class_index >= 1 && class_index <= kNumClasses, "class index out of range 1..4");
    return kClassNames[class_index - 1];
}

std::vector<int> source_labels_of_class(int class_index) {
    require(class_index >= 1 && class_index <= kNumClasses, "class index out of range 1..4");
    std::vector<int> out;
    for (int l = 0; l < kNumSourceLabels; ++l)
        if (kLabelToClass[l] == class_index) out.push_back(l);
    return out;
}

Tensor SemanticMaskSet::plane(int class_index) const {
    require(class_index >= 1 && class_index <= kNumClasses, "class index out of range 1..4");
    const int h = height(), w = width();
    Tensor p({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) p.at(y, x) = planes.at(class_index - 1, y, x);
    return p;
}

void SemanticMaskSet::validate() const {
    require(planes.rank() == 3 && planes.dim(0) == kNumClasses, "mask set must be {4,H,W}");
    const int h = height(), w = width();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            real sum = 0.0;
            for (int c = 0; c < kNumClasses; ++c) {
                const real v = planes.at(c, y, x);
                require(v >= 0.0 && v <= 1.0, "mask plane value outside [0,1]");
                if (hard) require(v == 0.0 || v == 1.0, "hard mask contains non-binary value");
                sum += v;
            }
            require(std::fabs(sum - 1.0) <= 1e-6, "mask planes do not partition: per-pixel sum != 1");
        }
}

SemanticMaskSet group_labels(const Tensor& labels11) {
    require(labels11.rank() == 2, "label map must be {H,W}");
    const int h = labels11.dim(0), w = labels11.dim(1);
    SemanticMaskSet set;
    set.hard = true;
    set.planes = Tensor({kNumClasses, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int label = static_cast<int>(std::lround(labels11.at(y, x)));
            set.planes.at(class_of_source_label(label) - 1, y, x) = 1.0;
        }
    return set;
}

std::array<Tensor, 4> decompose(const Tensor& image, const SemanticMaskSet& masks) {
    require(image.rank() == 3, "decompose: image must be {C,H,W}");
    require(image.dim(1) == masks.height() && image.dim(2) == masks.width(),
            "decompose: image and mask dimensions differ");
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::array<Tensor, 4> parts;
    for (int i = 0; i < kNumClasses; ++i) {
        parts[static_cast<size_t>(i)] = Tensor(image.shape());
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    parts[static_cast<size_t>(i)].at(ch, y, x) = masks.planes.at(i, y, x) * image.at(ch, y, x);
    }
    return parts;
}

SemanticMaskSet harden(const SemanticMaskSet& masks) {
    const int h = masks.height(), w = masks.width();
    SemanticMaskSet out;
    out.hard = true;
    out.planes = Tensor({kNumClasses, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            real best_v = masks.planes.at(0, y, x);
            for (int c = 1; c < kNumClasses; ++c) {
                const real v = masks.planes.at(c, y, x);
                if (v > best_v) {  // strict: ties keep the lowest index
                    best_v = v;
                    best = c;
                }
            }
            out.planes.at(best, y, x) = 1.0;
        }
    return out;
}

real f_score(const SemanticMaskSet& pred, const SemanticMaskSet& truth, int class_index) {
    require(class_index >= 1 && class_index <= kNumClasses, "class index out of range 1..4");
    require(pred.height() == truth.height() && pred.width() == truth.width(),
            "f_score: dimension mismatch");
    const SemanticMaskSet hp = pred.hard ? pred : harden(pred);
    const SemanticMaskSet ht = truth.hard ? truth : harden(truth);
    const int c = class_index - 1;
    long tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < hp.height(); ++y)
        for (int x = 0; x < hp.width(); ++x) {
            const bool p = hp.planes.at(c, y, x) != 0.0;
            const bool t = ht.planes.at(c, y, x) != 0.0;
            tp += (p && t);
            fp += (p && !t);
            fn += (!p && t);
        }
    if (tp == 0 && fp == 0 && fn == 0) return 1.0;  // absent class correctly predicted absent
    if (tp == 0) return 0.0;
    const real precision = static_cast<real>(tp) / static_cast<real>(tp + fp);
    const real recall = static_cast<real>(tp) / static_cast<real>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

Tensor mask_to_index(const SemanticMaskSet& hard_masks) {
    require(hard_masks.hard, "mask_to_index: requires a hard mask set");
    const int h = hard_masks.height(), w = hard_masks.width();
    Tensor idx({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < kNumClasses; ++c)
                if (hard_masks.planes.at(c, y, x) != 0.0) idx.at(y, x) = static_cast<real>(c);
    return idx;
}

SemanticMaskSet mask_from_index(const Tensor& index_image) {
    require(index_image.rank() == 2, "mask_from_index: expected {H,W}");
    const int h = index_image.dim(0), w = index_image.dim(1);
    SemanticMaskSet set;
    set.hard = true;
    set.planes = Tensor({kNumClasses, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int c = static_cast<int>(std::lround(index_image.at(y, x)));
            require(c >= 0 && c < kNumClasses, "mask index outside 0..3");
            set.planes.at(c, y, x) = 1.0;
        }
    return set;
}

}  // namespace umsn::semantics
