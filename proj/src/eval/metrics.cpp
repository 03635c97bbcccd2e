#include "umsn/eval/metrics.hpp"

#include <cmath>

namespace umsn::eval {

namespace {

constexpr int kWindow = 11;
constexpr real kSigma = 1.5;
constexpr real kK1 = 0.01;
constexpr real kK2 = 0.03;

const std::vector<real>& gaussian_window1d() {
    static const std::vector<real> w = [] {
        std::vector<real> v(kWindow);
        const int r = kWindow / 2;
        real sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const real d = static_cast<real>(i - r);
            v[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += v[static_cast<size_t>(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return w;
}

// separable weighted filtering to the valid region: out is (H-10)x(W-10)
Tensor filter_valid(const Tensor& plane) {
    const int h = plane.dim(0), w = plane.dim(1);
    const auto& g = gaussian_window1d();
    Tensor tmp({h, w - kWindow + 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + kWindow <= w; ++x) {
            real s = 0.0;
            for (int j = 0; j < kWindow; ++j) s += g[static_cast<size_t>(j)] * plane.at(y, x + j);
            tmp.at(y, x) = s;
        }
    Tensor out({h - kWindow + 1, w - kWindow + 1});
    for (int y = 0; y + kWindow <= h; ++y)
        for (int x = 0; x < tmp.dim(1); ++x) {
            real s = 0.0;
            for (int i = 0; i < kWindow; ++i) s += g[static_cast<size_t>(i)] * tmp.at(y + i, x);
            out.at(y, x) = s;
        }
    return out;
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    require(a.rank() == 3 && a.same_shape(b),
            std::string(op) + ": images must share {C,H,W} shape, got " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

real mse(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "mse");
    real acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const real d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<real>(a.size());
}

PsnrResult psnr(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "psnr");
    for (std::int64_t i = 0; i < a.size(); ++i)
        require(a[i] >= 0.0 && a[i] <= 1.0 && b[i] >= 0.0 && b[i] <= 1.0, "psnr: values must lie in [0,1]");
    const real m = mse(a, b);
    if (m == 0.0) return {0.0, true};
    return {10.0 * std::log10(1.0 / m), false};
}

real ssim(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "ssim");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    require(h >= kWindow && w >= kWindow, "ssim: image smaller than the 11x11 window");
    const real c1 = kK1 * kK1;  // dynamic range 1
    const real c2 = kK2 * kK2;

    real total = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        Tensor pa({h, w}), pb({h, w}), paa({h, w}), pbb({h, w}), pab({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const real va = a.at(ch, y, x);
                const real vb = b.at(ch, y, x);
                pa.at(y, x) = va;
                pb.at(y, x) = vb;
                paa.at(y, x) = va * va;
                pbb.at(y, x) = vb * vb;
                pab.at(y, x) = va * vb;
            }
        const Tensor mu_a = filter_valid(pa);
        const Tensor mu_b = filter_valid(pb);
        const Tensor m_aa = filter_valid(paa);
        const Tensor m_bb = filter_valid(pbb);
        const Tensor m_ab = filter_valid(pab);
        real acc = 0.0;
        for (std::int64_t i = 0; i < mu_a.size(); ++i) {
            const real ma = mu_a[i], mb = mu_b[i];
            const real va = m_aa[i] - ma * ma;
            const real vb = m_bb[i] - mb * mb;
            const real cov = m_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / static_cast<real>(mu_a.size());
    }
    return total / static_cast<real>(c);
}

real feature_distance(const Tensor& a, const Tensor& b, const losses::FeatureExtractor& extractor) {
    check_pair(a, b, "feature_distance");
    const Tensor fa = extractor.deep_features(a);
    const Tensor fb = extractor.deep_features(b);
    real acc = 0.0;
    for (std::int64_t i = 0; i < fa.size(); ++i) {
        const real d = fa[i] - fb[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::array<ClassMetric, 4> per_class_metrics(const Tensor& pred, const Tensor& truth,
                                             const semantics::SemanticMaskSet& masks) {
    check_pair(pred, truth, "per_class_metrics");
    require(masks.hard, "per_class_metrics: hard masks required");
    require(pred.dim(1) == masks.height() && pred.dim(2) == masks.width(),
            "per_class_metrics: mask dimensions differ from images");
    const int c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);

    std::array<ClassMetric, 4> out;
    for (int cls = 0; cls < semantics::kNumClasses; ++cls) {
        long pixels = 0;
        real err = 0.0;
        Tensor mp(pred.shape()), mt(truth.shape());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const real m = masks.planes.at(cls, y, x);
                if (m != 0.0) ++pixels;
                for (int ch = 0; ch < c; ++ch) {
                    const real dp = m * pred.at(ch, y, x);
                    const real dt = m * truth.at(ch, y, x);
                    mp.at(ch, y, x) = dp;
                    mt.at(ch, y, x) = dt;
                    const real d = dp - dt;
                    err += d * d;
                }
            }
        ClassMetric& cm = out[static_cast<size_t>(cls)];
        cm.pixels = pixels;
        if (pixels == 0) {
            cm.empty = true;
            continue;
        }
        cm.mse = err / (static_cast<real>(pixels) * c);
        if (cm.mse == 0.0) {
            cm.identical = true;
        } else {
            cm.psnr_db = 10.0 * std::log10(1.0 / cm.mse);
        }
        if (h >= 11 && w >= 11) cm.ssim = ssim(mp, mt);
    }
    return out;
}

}  // namespace umsn::eval
