#include "umsn/losses/losses.hpp"

#include <cmath>

#include "umsn/core/archive.hpp"
#include "umsn/core/rng.hpp"

namespace umsn::losses {

using semantics::kNumClasses;

// ---------------------------------------------------------------------------
// FeatureExtractor
// ---------------------------------------------------------------------------

namespace {
// (out, in) channel plan; layers 0-1 feed the shallow tap, 2-4 the deep tap
constexpr int kPlan[5][2] = {{8, 3}, {8, 8}, {16, 8}, {16, 16}, {16, 16}};
}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
    Rng rng(seed);
    for (int l = 0; l < 5; ++l) {
        const int o = kPlan[l][0], c = kPlan[l][1];
        Tensor w({o, c, 3, 3});
        const real s = std::sqrt(2.0 / (static_cast<real>(c) * 9.0));
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, s);
        w_[static_cast<size_t>(l)] = std::move(w);
        b_[static_cast<size_t>(l)] = Tensor({o});
    }
}

FeatureExtractor FeatureExtractor::from_file(const std::string& path) {
    const TensorArchive archive = load_archive(path);
    FeatureExtractor fe;
    fe.loaded_ = true;
    for (int l = 0; l < 5; ++l) {
        const Tensor& w = archive_get(archive, "layer" + std::to_string(l) + ".w");
        const Tensor& b = archive_get(archive, "layer" + std::to_string(l) + ".b");
        require(w.rank() == 4 && w.dim(0) == kPlan[l][0] && w.dim(1) == kPlan[l][1] && w.dim(2) == 3 &&
                    w.dim(3) == 3,
                "feature extractor weights have wrong shape: " + path);
        require(b.rank() == 1 && b.dim(0) == kPlan[l][0], "feature extractor bias has wrong shape: " + path);
        fe.w_[static_cast<size_t>(l)] = w;
        fe.b_[static_cast<size_t>(l)] = b;
    }
    return fe;
}

void FeatureExtractor::save(const std::string& path) const {
    TensorArchive archive;
    for (int l = 0; l < 5; ++l) {
        archive.emplace_back("layer" + std::to_string(l) + ".w", w_[static_cast<size_t>(l)]);
        archive.emplace_back("layer" + std::to_string(l) + ".b", b_[static_cast<size_t>(l)]);
    }
    save_archive(path, archive);
}

ad::Var FeatureExtractor::shallow(const ad::Var& image) const {
    require(image.value().rank() == 4 && image.value().dim(1) == 3,
            "feature extractor: input must be {N,3,H,W}");
    ad::Var h = ad::relu(ad::conv2d(image, ad::Var::constant(w_[0]), ad::Var::constant(b_[0])));
    return ad::relu(ad::conv2d(h, ad::Var::constant(w_[1]), ad::Var::constant(b_[1])));
}

ad::Var FeatureExtractor::deep(const ad::Var& image) const {
    const Tensor& x = image.value();
    require(x.dim(2) % 8 == 0 && x.dim(3) % 8 == 0,
            "feature extractor deep tap: spatial dims must be divisible by 8, got " + x.shape_str());
    ad::Var h = shallow(image);
    for (int l = 2; l < 5; ++l) {
        h = ad::avg_pool2(h);
        h = ad::relu(ad::conv2d(h, ad::Var::constant(w_[static_cast<size_t>(l)]),
                                ad::Var::constant(b_[static_cast<size_t>(l)])));
    }
    return h;
}

Tensor FeatureExtractor::shallow_features(const Tensor& image) const {
    require(image.rank() == 3 && image.dim(0) == 3, "feature extractor: image must be {3,H,W}");
    ad::Var f = shallow(ad::Var::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)})));
    const auto& s = f.value().shape();
    return f.value().reshaped({s[1], s[2], s[3]});
}

Tensor FeatureExtractor::deep_features(const Tensor& image) const {
    require(image.rank() == 3 && image.dim(0) == 3, "feature extractor: image must be {3,H,W}");
    ad::Var f = deep(ad::Var::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)})));
    const auto& s = f.value().shape();
    return f.value().reshaped({s[1], s[2], s[3]});
}

std::string FeatureExtractor::describe() const {
    return loaded_ ? "external-weights" : "seeded-random(seed=" + std::to_string(seed_) + ")";
}

// ---------------------------------------------------------------------------
// class-decomposed L1
// ---------------------------------------------------------------------------

ClassL1 class_l1(const Tensor& pred, const Tensor& truth, const semantics::SemanticMaskSet& masks) {
    require(pred.rank() == 3 && pred.same_shape(truth), "class_l1: pred/truth must be matching {C,H,W}");
    require(pred.dim(1) == masks.height() && pred.dim(2) == masks.width(),
            "class_l1: image and mask dimensions differ");
    const int c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    const real norm = 1.0 / (static_cast<real>(h) * w * c);
    ClassL1 out{0.0, {0.0, 0.0, 0.0, 0.0}};
    for (int i = 0; i < kNumClasses; ++i) {
        real acc = 0.0;
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    acc += masks.planes.at(i, y, x) * std::fabs(pred.at(ch, y, x) - truth.at(ch, y, x));
        out.per_class[static_cast<size_t>(i)] = acc * norm;
        out.total += acc * norm;
    }
    return out;
}

ClassL1Graph class_l1_graph(const ad::Var& pred, const Tensor& truth, const Tensor& masks) {
    const Tensor& p = pred.value();
    require(p.rank() == 4 && p.dim(1) == 3, "class_l1: pred must be {N,3,H,W}");
    require(p.same_shape(truth), "class_l1: pred/truth shape mismatch");
    require(masks.rank() == 4 && masks.dim(0) == p.dim(0) && masks.dim(1) == kNumClasses &&
                masks.dim(2) == p.dim(2) && masks.dim(3) == p.dim(3),
            "class_l1: masks must be {N,4,H,W} matching the prediction");
    const int n = p.dim(0), h = p.dim(2), w = p.dim(3);
    const real norm = 1.0 / (static_cast<real>(h) * w * 3.0);

    ad::Var absdiff = ad::abs(ad::sub(pred, ad::Var::constant(truth)));
    ClassL1Graph out;
    std::vector<ad::Var> class_terms;
    for (int i = 0; i < kNumClasses; ++i) {
        Tensor plane({n, 1, h, w});
        for (int b = 0; b < n; ++b)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) plane.at(b, 0, y, x) = masks.at(b, i, y, x);
        ad::Var li = ad::scale(ad::sum_per_sample(ad::mul_plane(absdiff, plane)), norm);
        out.per_class[static_cast<size_t>(i)] = li;
        class_terms.push_back(li);
    }
    out.total = ad::mean_all(ad::add_n(class_terms));
    return out;
}

// ---------------------------------------------------------------------------
// confidence-guided loss
// ---------------------------------------------------------------------------

real confidence_loss(const std::array<real, 4>& per_class, const std::array<real, 4>& confidences,
                     const LossConfig& config) {
    config.validate();
    real loss = 0.0;
    for (int i = 0; i < kNumClasses; ++i) {
        const real c = confidences[static_cast<size_t>(i)];
        require(c >= config.confidence_floor && c <= 1.0,
                "confidence outside [floor,1]: " + std::to_string(c));
        loss += c * per_class[static_cast<size_t>(i)] - config.lambda * std::log(c);
    }
    return loss;
}

ad::Var confidence_loss_graph(const std::array<ad::Var, 4>& per_class,
                              const std::array<ad::Var, 4>& confidences, const LossConfig& config) {
    config.validate();
    for (const auto& c : confidences)
        for (std::int64_t i = 0; i < c.value().size(); ++i)
            require(c.value()[i] >= config.confidence_floor && c.value()[i] <= 1.0,
                    "confidence outside [floor,1]");
    std::vector<ad::Var> terms;
    for (int i = 0; i < kNumClasses; ++i) {
        const auto& c = confidences[static_cast<size_t>(i)];
        ad::Var weighted = ad::mul(c, per_class[static_cast<size_t>(i)]);
        terms.push_back(ad::sub(weighted, ad::scale(ad::log(c), config.lambda)));
    }
    return ad::mean_all(ad::add_n(terms));
}

// ---------------------------------------------------------------------------
// perceptual loss
// ---------------------------------------------------------------------------

ad::Var perceptual_loss_graph(const ad::Var& pred, const Tensor& truth, const FeatureExtractor& extractor) {
    require(pred.value().same_shape(truth), "perceptual loss: pred/truth shape mismatch");
    ad::Var fp = extractor.shallow(pred);
    ad::Var ft = extractor.shallow(ad::Var::constant(truth));
    ad::Var d = ad::sub(fp, ft);
    return ad::mean_all(ad::mul(d, d));
}

real perceptual_loss(const Tensor& pred, const Tensor& truth, const FeatureExtractor& extractor) {
    require(pred.rank() == 3 && pred.same_shape(truth), "perceptual loss: pred/truth must be matching {C,H,W}");
    const Tensor p4 = pred.reshaped({1, pred.dim(0), pred.dim(1), pred.dim(2)});
    const Tensor t4 = truth.reshaped({1, truth.dim(0), truth.dim(1), truth.dim(2)});
    return perceptual_loss_graph(ad::Var::constant(p4), t4, extractor).value()[0];
}

// ---------------------------------------------------------------------------
// total loss
// ---------------------------------------------------------------------------

TotalLossGraph total_loss_graph(const ad::Var& pred, const Tensor& truth, const Tensor& masks,
                                const std::array<ad::Var, 4>& confidences, const FeatureExtractor& extractor,
                                const LossConfig& config) {
    config.validate();
    TotalLossGraph out;
    ClassL1Graph cls = class_l1_graph(pred, truth, masks);
    out.per_class = cls.per_class;
    out.l_confidence = confidence_loss_graph(cls.per_class, confidences, config);
    out.l_perceptual = perceptual_loss_graph(pred, truth, extractor);
    out.value = ad::add(out.l_confidence, ad::scale(out.l_perceptual, config.lambda1));
    return out;
}

TotalLoss total_loss(const Tensor& pred, const Tensor& truth, const semantics::SemanticMaskSet& masks,
                     const std::array<real, 4>& confidences, const FeatureExtractor& extractor,
                     const LossConfig& config) {
    require(pred.rank() == 3 && pred.same_shape(truth), "total loss: pred/truth must be matching {C,H,W}");
    const int h = pred.dim(1), w = pred.dim(2);
    Tensor masks4 = masks.planes.reshaped({1, kNumClasses, h, w});
    std::array<ad::Var, 4> conf_vars;
    for (int i = 0; i < kNumClasses; ++i)
        conf_vars[static_cast<size_t>(i)] = ad::Var::constant(Tensor({1}, confidences[static_cast<size_t>(i)]));
    TotalLossGraph g = total_loss_graph(ad::Var::constant(pred.reshaped({1, 3, h, w})),
                                        truth.reshaped({1, 3, h, w}), masks4, conf_vars, extractor, config);
    TotalLoss out;
    out.value = g.value.value()[0];
    out.diagnostics.confidences = confidences;
    for (int i = 0; i < kNumClasses; ++i)
        out.diagnostics.per_class[static_cast<size_t>(i)] = g.per_class[static_cast<size_t>(i)].value()[0];
    out.diagnostics.l_confidence = g.l_confidence.value()[0];
    out.diagnostics.l_perceptual = g.l_perceptual.value()[0];
    return out;
}

}  // namespace umsn::losses
