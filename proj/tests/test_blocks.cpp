#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "umsn/nn/blocks.hpp"
#include "umsn/nn/optim.hpp"

using namespace umsn;
using namespace umsn::testsup;
namespace ops = umsn::ad;

namespace {

// max-abs response over channels at every spatial position when one input
// pixel is perturbed
Tensor perturbation_footprint(const std::function<ops::Var(const ops::Var&)>& f, int channels, int size,
                              int py, int px) {
    Tensor base({1, channels, size, size}, 0.25);
    Tensor poked = base;
    for (int c = 0; c < channels; ++c) poked.at(0, c, py, px) += 1.0;
    const Tensor y0 = f(ops::Var::constant(base)).value();
    const Tensor y1 = f(ops::Var::constant(poked)).value();
    Tensor fp({size, size});
    for (int c = 0; c < y0.dim(1); ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                fp.at(y, x) = std::max(fp.at(y, x), std::fabs(y1.at(0, c, y, x) - y0.at(0, c, y, x)));
    return fp;
}

Tensor positive_weights(int o, int c, int k, Rng& rng) {
    Tensor w({o, c, k, k});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.1, 1.0);
    return w;
}

}  // namespace

TEST_CASE("conv unit: shape contract, determinism, channel mismatch") {
    Rng rng(41);
    nn::ConvUnit unit({.kernel_size = 1, .in_channels = 16, .out_channels = 8}, rng);
    const Tensor x = random_tensor({1, 16, 8, 8}, rng);
    ops::Var y = unit.forward(ops::Var::constant(x));
    CHECK(y.value().shape() == std::vector<int>{1, 8, 8, 8});

    // constant-zero input gives a deterministic output, identical across calls
    const Tensor zeros({1, 16, 8, 8});
    const Tensor out1 = unit.forward(ops::Var::constant(zeros)).value();
    const Tensor out2 = unit.forward(ops::Var::constant(zeros)).value();
    CHECK(max_abs_diff(out1, out2) == 0.0);

    CHECK_THROWS_AS(unit.forward(ops::Var::constant(Tensor({1, 4, 8, 8}))), std::invalid_argument);
    CHECK_THROWS_AS(nn::ConvUnit({.kernel_size = 2, .in_channels = 4, .out_channels = 4}, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        nn::ConvUnit({.kernel_size = 3, .in_channels = 4, .out_channels = 4, .dilation = 1, .smoothed = true},
                     rng),
        std::invalid_argument);
}

TEST_CASE("dilated 3x3 conv spans 5 pixels per axis with gridding holes") {
    Rng rng(42);
    const ops::Var w = ops::Var::constant(positive_weights(2, 2, 3, rng));
    const ops::Var b = ops::Var::constant(Tensor({2}));
    auto conv = [&](const ops::Var& x) { return ops::conv2d(x, w, b, 2); };

    const int size = 11, c0 = 5;
    const Tensor fp = perturbation_footprint(conv, 2, size, c0, c0);
    // span 5: responses exactly at offsets {-2,0,2} x {-2,0,2}
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int dy = y - c0, dx = x - c0;
            const bool tap = (dy == -2 || dy == 0 || dy == 2) && (dx == -2 || dx == 0 || dx == 2);
            if (tap)
                CHECK(fp.at(y, x) > 0.0);
            else
                CHECK(fp.at(y, x) == 0.0);
        }
    // gridding: interior holes inside the 5x5 bounding box
    CHECK(fp.at(c0 + 1, c0) == 0.0);
    CHECK(fp.at(c0, c0 + 1) == 0.0);
    CHECK(fp.at(c0 + 1, c0 + 1) == 0.0);
}

TEST_CASE("smoothed dilated conv has a contiguous 7x7 footprint") {
    Rng rng(43);
    const ops::Var w = ops::Var::constant(positive_weights(2, 2, 3, rng));
    const ops::Var b = ops::Var::constant(Tensor({2}));
    Tensor k1d({3});
    k1d[0] = 0.3;
    k1d[1] = 1.0;
    k1d[2] = 0.4;
    const ops::Var smooth = ops::Var::constant(k1d);
    auto conv = [&](const ops::Var& x) { return nn::smoothed_dilated_conv(x, w, b, smooth, 2); };

    const int size = 13, c0 = 6;
    const Tensor fp = perturbation_footprint(conv, 2, size, c0, c0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool inside = std::abs(y - c0) <= 3 && std::abs(x - c0) <= 3;
            if (inside)
                CHECK(fp.at(y, x) > 0.0);  // no interior zero-response holes
            else
                CHECK(fp.at(y, x) == 0.0);
        }
    CHECK_THROWS_AS(nn::smoothed_dilated_conv(ops::Var::constant(Tensor({1, 2, 8, 8})), w, b, smooth, 1),
                    std::invalid_argument);
}

TEST_CASE("identity smoothing kernel makes the smoothed path equal plain dilation") {
    Rng rng(44);
    const Tensor x = random_tensor({1, 3, 9, 9}, rng);
    const ops::Var w = ops::Var::constant(positive_weights(4, 3, 3, rng));
    const ops::Var b = ops::Var::constant(Tensor({4}));
    const ops::Var ident = ops::Var::constant(nn::identity_smooth_kernel(2));
    const Tensor plain = ops::conv2d(ops::Var::constant(x), w, b, 2).value();
    const Tensor smoothed = nn::smoothed_dilated_conv(ops::Var::constant(x), w, b, ident, 2).value();
    CHECK(max_abs_diff(plain, smoothed) < 1e-12);
}

TEST_CASE("res block: shape contracts and the zero-weight degenerate case") {
    Rng rng(45);
    nn::ResBlock big({.in_channels = 3, .out_channels = 64}, rng);
    CHECK(big.forward(ops::Var::constant(Tensor({1, 3, 128, 128}, 0.5))).value().shape() ==
          std::vector<int>{1, 64, 128, 128});

    nn::ResBlock narrow({.in_channels = 16, .out_channels = 8}, rng);
    CHECK(narrow.forward(ops::Var::constant(Tensor({1, 16, 12, 12}, 0.1))).value().shape() ==
          std::vector<int>{1, 8, 12, 12});

    // all internal weights zero -> output equals the identity skip path
    nn::ResBlock same({.in_channels = 16, .out_channels = 16}, rng);
    nn::ParamMap pm;
    same.collect(pm, "rb");
    for (auto& [name, var] : pm.items) var.set_value(Tensor(var.value().shape()));
    const Tensor x = random_tensor({2, 16, 6, 6}, rng);
    CHECK(max_abs_diff(same.forward(ops::Var::constant(x)).value(), x) == 0.0);

    CHECK_THROWS_AS(narrow.forward(ops::Var::constant(Tensor({1, 8, 12, 12}))), std::invalid_argument);
}

TEST_CASE("dense trunk wires previous outputs through 1x1 fusers") {
    Rng rng(46);
    nn::DenseTrunk trunk({{.in_channels = 6, .out_channels = 6},
                          {.in_channels = 6, .out_channels = 6},
                          {.in_channels = 6, .out_channels = 4}},
                         rng);
    const Tensor x = random_tensor({1, 6, 8, 8}, rng);
    CHECK(trunk.forward(ops::Var::constant(x)).value().shape() == std::vector<int>{1, 4, 8, 8});

    nn::ParamMap pm;
    trunk.collect(pm, "trunk");
    bool has_fuser = false;
    for (const auto& [name, var] : pm.items) has_fuser = has_fuser || name.find("fuse") != std::string::npos;
    CHECK(has_fuser);
}

TEST_CASE("downsample halves, upsample doubles, constants survive both") {
    Rng rng(47);
    const Tensor x = random_tensor({1, 2, 128, 128}, rng);
    ops::Var down = nn::downsample(ops::Var::constant(x));
    CHECK(down.value().shape() == std::vector<int>{1, 2, 64, 64});
    ops::Var up = nn::upsample(down);
    CHECK(up.value().shape() == std::vector<int>{1, 2, 128, 128});

    const Tensor c({1, 3, 16, 16}, 0.42);
    const Tensor cd = nn::downsample(ops::Var::constant(c)).value();
    const Tensor cu = nn::upsample(ops::Var::constant(c)).value();
    for (std::int64_t i = 0; i < cd.size(); ++i) CHECK(cd[i] == doctest::Approx(0.42).epsilon(1e-12));
    for (std::int64_t i = 0; i < cu.size(); ++i) CHECK(cu[i] == doctest::Approx(0.42).epsilon(1e-12));

    CHECK_THROWS_AS(nn::downsample(ops::Var::constant(Tensor({1, 2, 7, 8}))), std::invalid_argument);
}

TEST_CASE("block input-gradients match finite differences on 4x4 inputs") {
    Rng rng(48);
    const Tensor probe = random_tensor({1, 3, 4, 4}, rng, 0.3, 1.2);
    const Tensor weights16 = random_tensor({1, 6, 4, 4}, rng);

    nn::ConvUnit unit({.kernel_size = 3, .in_channels = 3, .out_channels = 6}, rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(unit.forward(v), ops::Var::constant(weights16)));
              },
              probe) < 1e-3);

    nn::ConvUnit sm({.kernel_size = 3, .in_channels = 3, .out_channels = 6, .dilation = 2, .smoothed = true},
                    rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(sm.forward(v), ops::Var::constant(weights16)));
              },
              probe) < 1e-3);

    nn::ResBlock rb({.in_channels = 3, .out_channels = 6}, rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(rb.forward(v), ops::Var::constant(weights16)));
              },
              probe) < 1e-3);

    const Tensor w4 = random_tensor({1, 3, 2, 2}, rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(nn::downsample(v), ops::Var::constant(w4)));
              },
              probe) < 1e-3);
    const Tensor w64 = random_tensor({1, 3, 8, 8}, rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(nn::upsample(v), ops::Var::constant(w64)));
              },
              probe) < 1e-3);
}

TEST_CASE("adam decreases a quadratic objective and is restorable") {
    Rng rng(49);
    nn::ParamMap pm;
    ops::Var p = ops::Var::leaf(random_tensor({8}, rng), true);
    pm.add("p", p);
    nn::Adam opt(0.05);
    real first = 0.0, last = 0.0;
    for (int i = 0; i < 60; ++i) {
        pm.zero_grads();
        ops::Var loss = ops::sum_all(ops::mul(p, p));
        loss.backward();
        if (i == 0) first = loss.value()[0];
        last = loss.value()[0];
        opt.step(pm);
    }
    CHECK(last < 0.05 * first);
}
