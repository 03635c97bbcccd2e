#include "umsn/synthesis/blur.hpp"

#include <cmath>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

namespace umsn::synthesis {

namespace {

// reflect index with edge repetition: -1 -> 0, H -> H-1
inline int reflect(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

}  // namespace

Tensor blur(const Tensor& image, const BlurKernel& kernel) {
    require(image.rank() == 3, "blur: image must be {C,H,W}");
    kernel.validate();
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    require(kernel.side <= h && kernel.side <= w,
            "blur: kernel side " + std::to_string(kernel.side) + " exceeds image " + std::to_string(h) + "x" +
                std::to_string(w));
    for (std::int64_t i = 0; i < image.size(); ++i)
        require(std::isfinite(image[i]), "blur: image contains non-finite values");

    const int k = kernel.side;
    const int r = k / 2;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t kk = static_cast<std::int64_t>(k) * k;

    using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> kvec(kernel.weights.data(), kk);

    Tensor out(image.shape());
    MatRM col(kk, hw);
    for (int ch = 0; ch < c; ++ch) {
        const real* plane = image.data() + static_cast<std::int64_t>(ch) * hw;
        std::int64_t row = 0;
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj, ++row)
                for (int y = 0; y < h; ++y) {
                    const int sy = reflect(y + ki - r, h);
                    const real* srow = plane + static_cast<std::int64_t>(sy) * w;
                    real* drow = col.data() + row * hw + static_cast<std::int64_t>(y) * w;
                    for (int x = 0; x < w; ++x) drow[x] = srow[reflect(x + kj - r, w)];
                }
        Eigen::Map<Eigen::Matrix<real, 1, Eigen::Dynamic>> orow(out.data() + static_cast<std::int64_t>(ch) * hw, hw);
        orow.noalias() = kvec * col;
    }
    return out;
}

Tensor add_noise(const Tensor& image, double sigma, std::uint64_t seed) {
    require(sigma >= 0.0, "add_noise: sigma must be >= 0");
    if (sigma == 0.0) return image;
    Rng rng(seed);
    Tensor out(image.shape());
    for (std::int64_t i = 0; i < image.size(); ++i) {
        const real v = image[i] + sigma * rng.normal();
        out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

Tensor class_blur(const Tensor& clean, const semantics::SemanticMaskSet& masks, int class_index,
                  const BlurKernel& kernel) {
    require(class_index >= 1 && class_index <= semantics::kNumClasses, "class_blur: class index outside 1..4");
    require(clean.rank() == 3, "class_blur: image must be {C,H,W}");
    require(clean.dim(1) == masks.height() && clean.dim(2) == masks.width(),
            "class_blur: image and mask dimensions differ");
    masks.validate();
    const Tensor blurred = blur(clean, kernel);
    const int c = clean.dim(0), h = clean.dim(1), w = clean.dim(2);
    Tensor out(clean.shape());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const real m = masks.planes.at(class_index - 1, y, x);
                out.at(ch, y, x) = m * blurred.at(ch, y, x) + (1.0 - m) * clean.at(ch, y, x);
            }
    return out;
}

}  // namespace umsn::synthesis
