#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "umsn/core/archive.hpp"
#include "umsn/core/image_io.hpp"
#include "umsn/losses/losses.hpp"
#include "umsn/semantics/masks.hpp"

using namespace umsn;
using namespace umsn::testsup;
namespace ls = umsn::losses;
namespace ops = umsn::ad;

namespace {

semantics::SemanticMaskSet random_hard_masks(int h, int w, Rng& rng) {
    Tensor idx({h, w});
    for (std::int64_t i = 0; i < idx.size(); ++i) idx[i] = rng.uniform_int(0, 3);
    return semantics::mask_from_index(idx);
}

}  // namespace

TEST_CASE("class_l1: zero error, hand count, and the partition identity") {
    Rng rng(71);
    const Tensor img = random_tensor({3, 6, 6}, rng, 0.0, 1.0);
    const auto masks = random_hard_masks(6, 6, rng);

    const auto zero = ls::class_l1(img, img, masks);
    CHECK(zero.total == 0.0);
    for (const auto v : zero.per_class) CHECK(v == 0.0);

    // 2x2x3 images, pred-truth = 0.1 everywhere, m1 covering half the pixels
    Tensor truth({3, 2, 2}, 0.4);
    Tensor pred({3, 2, 2}, 0.5);
    Tensor idx({2, 2});
    idx.at(0, 0) = 0;
    idx.at(0, 1) = 0;
    idx.at(1, 0) = 1;
    idx.at(1, 1) = 2;
    const auto half = ls::class_l1(pred, truth, semantics::mask_from_index(idx));
    CHECK(half.per_class[0] == doctest::Approx(0.05).epsilon(1e-9));

    // hard partition: class sum equals the plain whole-image mean L1
    const Tensor a = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    const Tensor b = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    const auto parts = ls::class_l1(a, b, random_hard_masks(8, 8, rng));
    real plain = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) plain += std::fabs(a[i] - b[i]);
    plain /= static_cast<real>(a.size());
    CHECK(parts.total == doctest::Approx(plain).epsilon(1e-6));

    CHECK_THROWS_AS(ls::class_l1(a, Tensor({3, 4, 4}), masks), std::invalid_argument);
}

TEST_CASE("class_l1 is strictly monotone in the residual scale") {
    Rng rng(72);
    const Tensor truth = random_tensor({3, 6, 6}, rng, 0.2, 0.8);
    Tensor resid = random_tensor({3, 6, 6}, rng, -0.1, 0.1);
    const auto masks = random_hard_masks(6, 6, rng);
    real prev = 0.0;
    for (real t : {1.0, 1.5, 2.0, 3.0}) {
        Tensor pred = truth;
        for (std::int64_t i = 0; i < pred.size(); ++i) pred[i] += t * resid[i];
        const real total = ls::class_l1(pred, truth, masks).total;
        CHECK(total > prev);
        prev = total;
    }
}

TEST_CASE("confidence loss: unit confidence, validation, and the analytic optimum") {
    ls::LossConfig cfg;
    const std::array<real, 4> ells = {0.05, 0.02, 0.07, 0.01};
    const std::array<real, 4> ones = {1.0, 1.0, 1.0, 1.0};
    CHECK(ls::confidence_loss(ells, ones, cfg) ==
          doctest::Approx(ells[0] + ells[1] + ells[2] + ells[3]).epsilon(1e-12));

    std::array<real, 4> bad = ones;
    bad[2] = 0.0;  // below the floor
    CHECK_THROWS_AS(ls::confidence_loss(ells, bad, cfg), std::invalid_argument);
    bad[2] = 1.5;
    CHECK_THROWS_AS(ls::confidence_loss(ells, bad, cfg), std::invalid_argument);

    // grid search over C must locate min(1, lambda/ell) for random (lambda, ell)
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        const real lambda = rng.uniform(0.001, 0.05);
        const real ell = rng.uniform(0.002, 0.2);
        real best_c = 1.0, best_v = 1e300;
        for (real c = 1e-4; c <= 1.0; c += 1e-4) {
            const real v = c * ell - lambda * std::log(c);
            if (v < best_v) {
                best_v = v;
                best_c = c;
            }
        }
        const real expected = std::min(1.0, lambda / ell);
        CHECK(std::fabs(best_c - expected) < 1e-3);
    }

    // boundary case: lambda/ell > 1 pins the optimum at C = 1
    {
        const real lambda = 0.01, ell = 0.005;
        real best_c = 0.0, best_v = 1e300;
        for (real c = 1e-4; c <= 1.0; c += 1e-4) {
            const real v = c * ell - lambda * std::log(c);
            if (v < best_v) {
                best_v = v;
                best_c = c;
            }
        }
        CHECK(best_c == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("perceptual loss: zero at equality, symmetric, matches a hand-specified oracle") {
    TempDir tmp("extractor");
    Rng rng(74);

    // hand-specified weights written as an external extractor file
    TensorArchive archive;
    std::vector<Tensor> ws, bs;
    const int plan[5][2] = {{8, 3}, {8, 8}, {16, 8}, {16, 16}, {16, 16}};
    for (int l = 0; l < 5; ++l) {
        Tensor w({plan[l][0], plan[l][1], 3, 3});
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-0.2, 0.2);
        Tensor b({plan[l][0]});
        for (std::int64_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-0.05, 0.05);
        archive.emplace_back("layer" + std::to_string(l) + ".w", w);
        archive.emplace_back("layer" + std::to_string(l) + ".b", b);
        ws.push_back(w);
        bs.push_back(b);
    }
    save_archive(tmp.sub("fe.ckpt"), archive);
    const auto fe = ls::FeatureExtractor::from_file(tmp.sub("fe.ckpt"));
    CHECK(fe.describe() == "external-weights");

    const Tensor a = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    const Tensor b = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    CHECK(ls::perceptual_loss(a, a, fe) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ls::perceptual_loss(a, b, fe) == doctest::Approx(ls::perceptual_loss(b, a, fe)).epsilon(1e-9));

    // independent direct computation of the two shallow layers
    auto conv_relu = [&](const Tensor& in, const Tensor& w, const Tensor& bias) {
        const int ci = in.dim(0), h = in.dim(1), wd = in.dim(2), co = w.dim(0);
        Tensor out({co, h, wd});
        for (int o = 0; o < co; ++o)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < wd; ++x) {
                    real acc = bias[o];
                    for (int c = 0; c < ci; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = y + ky - 1, sx = x + kx - 1;
                                if (sy >= 0 && sy < h && sx >= 0 && sx < wd)
                                    acc += w.at(o, c, ky, kx) * in.at(c, sy, sx);
                            }
                    out.at(o, y, x) = acc > 0.0 ? acc : 0.0;
                }
        return out;
    };
    const Tensor fa = conv_relu(conv_relu(a, ws[0], bs[0]), ws[1], bs[1]);
    const Tensor fb = conv_relu(conv_relu(b, ws[0], bs[0]), ws[1], bs[1]);
    real expected = 0.0;
    for (std::int64_t i = 0; i < fa.size(); ++i) {
        const real d = fa[i] - fb[i];
        expected += d * d;
    }
    expected /= static_cast<real>(fa.size());
    CHECK(ls::perceptual_loss(a, b, fe) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("extractor save/load round-trips and seeded construction is frozen") {
    TempDir tmp("fe2");
    const ls::FeatureExtractor fe(1234);
    fe.save(tmp.sub("fe.ckpt"));
    const auto loaded = ls::FeatureExtractor::from_file(tmp.sub("fe.ckpt"));
    Rng rng(75);
    const Tensor img = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    CHECK(max_abs_diff(fe.shallow_features(img), loaded.shallow_features(img)) == 0.0);
    CHECK(max_abs_diff(fe.deep_features(img), loaded.deep_features(img)) == 0.0);
    CHECK(fe.describe() == "seeded-random(seed=1234)");
}

TEST_CASE("total loss composes the confidence and perceptual terms") {
    Rng rng(76);
    const ls::FeatureExtractor fe(7);
    const Tensor truth = random_tensor({3, 8, 8}, rng, 0.1, 0.9);
    Tensor pred = truth;
    for (std::int64_t i = 0; i < pred.size(); ++i) pred[i] = clamp01(pred[i] + rng.uniform(-0.1, 0.1));
    const auto masks = random_hard_masks(8, 8, rng);
    const std::array<real, 4> conf = {0.9, 0.8, 0.7, 0.95};

    ls::LossConfig cfg;  // defaults: lambda 0.01, lambda1 0.0002
    CHECK(cfg.lambda == 0.01);
    CHECK(cfg.lambda1 == 0.0002);

    const auto full = ls::total_loss(pred, truth, masks, conf, fe, cfg);
    CHECK(full.value == doctest::Approx(full.diagnostics.l_confidence +
                                        cfg.lambda1 * full.diagnostics.l_perceptual)
                            .epsilon(1e-12));

    // lambda1 = 0 collapses to the confidence loss alone
    ls::LossConfig no_p = cfg;
    no_p.lambda1 = 0.0;
    const auto conf_only = ls::total_loss(pred, truth, masks, conf, fe, no_p);
    CHECK(conf_only.value ==
          doctest::Approx(ls::confidence_loss(conf_only.diagnostics.per_class, conf, no_p)).epsilon(1e-12));

    // pred == truth: total is -lambda * sum log C >= 0, minimized at C = 1
    const auto ident = ls::total_loss(truth, truth, masks, conf, fe, cfg);
    real expect = 0.0;
    for (const real c : conf) expect -= cfg.lambda * std::log(c);
    CHECK(ident.value == doctest::Approx(expect).epsilon(1e-9));
    const auto ident1 = ls::total_loss(truth, truth, masks, {1.0, 1.0, 1.0, 1.0}, fe, cfg);
    CHECK(ident1.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ident1.value <= ident.value);
}

TEST_CASE("total loss gradient w.r.t. the prediction matches finite differences") {
    Rng rng(77);
    const ls::FeatureExtractor fe(11);
    ls::LossConfig cfg;  // lambda 0.01, lambda1 0.0002

    const int size = 6;
    Tensor truth = random_tensor({3, size, size}, rng, 0.2, 0.8);
    Tensor pred = truth;
    // keep every residual at least 1e-2 away from the L1 kink
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const real sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        pred[i] = clamp01(truth[i] + sign * rng.uniform(0.02, 0.1));
    }
    const auto masks = random_hard_masks(size, size, rng);
    Tensor masks4 = masks.planes.reshaped({1, 4, size, size});
    const Tensor truth4 = truth.reshaped({1, 3, size, size});
    std::array<ops::Var, 4> conf;
    for (int i = 0; i < 4; ++i) conf[static_cast<size_t>(i)] = ops::Var::constant(Tensor({1}, 0.7 + 0.05 * i));

    auto graph = [&](const ops::Var& v) {
        return ls::total_loss_graph(v, truth4, masks4, conf, fe, cfg).value;
    };
    const real rel = check_input_grad(graph, pred.reshaped({1, 3, size, size}), 1e-4);
    CHECK(rel < 1e-3);
}

TEST_CASE("confidence values below the floor are rejected in the graph form") {
    std::array<ops::Var, 4> per, conf;
    for (int i = 0; i < 4; ++i) {
        per[static_cast<size_t>(i)] = ops::Var::constant(Tensor({1}, 0.1));
        conf[static_cast<size_t>(i)] = ops::Var::constant(Tensor({1}, 0.5));
    }
    conf[1] = ops::Var::constant(Tensor({1}, 1e-9));
    ls::LossConfig cfg;
    CHECK_THROWS_AS(ls::confidence_loss_graph(per, conf, cfg), std::invalid_argument);
}
