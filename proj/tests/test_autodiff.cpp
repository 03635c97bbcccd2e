#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace umsn;
using namespace umsn::testsup;
namespace ops = umsn::ad;

namespace {

Tensor he_weights(int o, int c, int k, Rng& rng) {
    Tensor w({o, c, k, k});
    const real s = std::sqrt(2.0 / (c * k * k));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, s);
    return w;
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(11);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng, 0.2, 1.5);  // positive, away from relu/abs kinks

    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::relu(v)); }, x) < 1e-6);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::abs(v)); }, x) < 1e-6);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::log(v)); }, x) < 1e-5);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::sigmoid(v)); }, x) < 1e-5);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::mean_all(ops::mul(v, v)); }, x) < 1e-6);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::scale(v, -2.5)); }, x) < 1e-6);
    CHECK(check_input_grad([](const ops::Var& v) { return ops::sum_all(ops::clamp_min(v, 0.7)); }, x) < 1e-6);
}

TEST_CASE("add/sub/mul propagate to both operands") {
    Rng rng(12);
    const Tensor a = random_tensor({3, 5}, rng);
    const Tensor b = random_tensor({3, 5}, rng, 0.5, 2.0);

    ops::Var va = ops::Var::leaf(a, true);
    ops::Var vb = ops::Var::leaf(b, true);
    ops::Var loss = ops::sum_all(ops::mul(ops::sub(va, vb), vb));
    loss.backward();

    const Tensor ga = numeric_grad(
        [&](const Tensor& p) {
            ops::Var pa = ops::Var::leaf(p, false);
            return ops::sum_all(ops::mul(ops::sub(pa, ops::Var::constant(b)), ops::Var::constant(b))).value()[0];
        },
        a);
    const Tensor gb = numeric_grad(
        [&](const Tensor& p) {
            ops::Var pb = ops::Var::leaf(p, false);
            return ops::sum_all(ops::mul(ops::sub(ops::Var::constant(a), pb), pb)).value()[0];
        },
        b);
    CHECK(max_rel_diff(va.grad(), ga, 1e-4) < 1e-6);
    CHECK(max_rel_diff(vb.grad(), gb, 1e-4) < 1e-6);
}

TEST_CASE("conv2d gradients (input, weights, bias) match finite differences") {
    Rng rng(21);
    for (int dilation : {1, 2}) {
        const Tensor x = random_tensor({2, 3, 5, 5}, rng);
        const Tensor w = he_weights(4, 3, 3, rng);
        const Tensor b = random_tensor({4}, rng, -0.1, 0.1);

        ops::Var vx = ops::Var::leaf(x, true);
        ops::Var vw = ops::Var::leaf(w, true);
        ops::Var vb = ops::Var::leaf(b, true);
        ops::Var loss = ops::sum_all(ops::mul(ops::conv2d(vx, vw, vb, dilation), ops::conv2d(vx, vw, vb, dilation)));
        loss.backward();

        auto eval = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
            ops::Var c =
                ops::conv2d(ops::Var::constant(xx), ops::Var::constant(ww), ops::Var::constant(bb), dilation);
            return ops::sum_all(ops::mul(c, c)).value()[0];
        };
        const Tensor gx = numeric_grad([&](const Tensor& p) { return eval(p, w, b); }, x);
        const Tensor gw = numeric_grad([&](const Tensor& p) { return eval(x, p, b); }, w);
        const Tensor gb = numeric_grad([&](const Tensor& p) { return eval(x, w, p); }, b);
        CHECK(max_rel_diff(vx.grad(), gx, 1e-3) < 1e-5);
        CHECK(max_rel_diff(vw.grad(), gw, 1e-3) < 1e-5);
        CHECK(max_rel_diff(vb.grad(), gb, 1e-3) < 1e-5);
    }
}

TEST_CASE("separable shared smoothing conv gradients match finite differences") {
    Rng rng(22);
    const Tensor x = random_tensor({1, 2, 6, 6}, rng);
    Tensor k({3});
    k[0] = 0.2;
    k[1] = 0.9;
    k[2] = -0.3;

    ops::Var vx = ops::Var::leaf(x, true);
    ops::Var vk = ops::Var::leaf(k, true);
    ops::Var loss = ops::sum_all(ops::mul(ops::sep_shared_conv(vx, vk), ops::sep_shared_conv(vx, vk)));
    loss.backward();

    auto eval = [&](const Tensor& xx, const Tensor& kk) {
        ops::Var c = ops::sep_shared_conv(ops::Var::constant(xx), ops::Var::constant(kk));
        return ops::sum_all(ops::mul(c, c)).value()[0];
    };
    const Tensor gx = numeric_grad([&](const Tensor& p) { return eval(p, k); }, x);
    const Tensor gk = numeric_grad([&](const Tensor& p) { return eval(x, p); }, k);
    CHECK(max_rel_diff(vx.grad(), gx, 1e-3) < 1e-5);
    CHECK(max_rel_diff(vk.grad(), gk, 1e-3) < 1e-5);
}

TEST_CASE("instance norm gradient matches finite differences") {
    Rng rng(23);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor m = random_tensor({2, 3, 4, 4}, rng);
    const real tol = check_input_grad(
        [&](const ops::Var& v) { return ops::sum_all(ops::mul(ops::instance_norm(v), ops::Var::constant(m))); }, x);
    CHECK(tol < 1e-4);
}

TEST_CASE("pooling and upsampling gradients match finite differences") {
    Rng rng(24);
    const Tensor x = random_tensor({2, 2, 4, 4}, rng);
    const Tensor m4 = random_tensor({2, 2, 2, 2}, rng);
    const Tensor m16 = random_tensor({2, 2, 8, 8}, rng);
    const Tensor m1 = random_tensor({2, 2, 1, 1}, rng);

    CHECK(check_input_grad(
              [&](const ops::Var& v) { return ops::sum_all(ops::mul(ops::avg_pool2(v), ops::Var::constant(m4))); },
              x) < 1e-6);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(ops::upsample_bilinear2(v), ops::Var::constant(m16)));
              },
              x) < 1e-6);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(ops::global_avg_pool(v), ops::Var::constant(m1)));
              },
              x) < 1e-6);
}

TEST_CASE("upsample preserves constants and doubles size; avg_pool averages") {
    Tensor c({1, 1, 4, 4}, 0.37);
    ops::Var up = ops::upsample_bilinear2(ops::Var::constant(c));
    CHECK(up.value().shape() == std::vector<int>{1, 1, 8, 8});
    for (std::int64_t i = 0; i < up.value().size(); ++i) CHECK(up.value()[i] == doctest::Approx(0.37).epsilon(1e-12));

    Tensor block({1, 1, 2, 2});
    block.at(0, 0, 0, 0) = 0.0;
    block.at(0, 0, 0, 1) = 0.0;
    block.at(0, 0, 1, 0) = 1.0;
    block.at(0, 0, 1, 1) = 1.0;
    ops::Var pooled = ops::avg_pool2(ops::Var::constant(block));
    CHECK(pooled.value()[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(ops::avg_pool2(ops::Var::constant(Tensor({1, 1, 3, 3}))), std::invalid_argument);
}

TEST_CASE("concat/reshape/per-sample reductions route gradients") {
    Rng rng(25);
    const Tensor a = random_tensor({2, 2, 3, 3}, rng);
    const Tensor b = random_tensor({2, 3, 3, 3}, rng);

    ops::Var va = ops::Var::leaf(a, true);
    ops::Var vb = ops::Var::leaf(b, true);
    ops::Var cat = ops::concat_channels({va, vb});
    CHECK(cat.value().shape() == std::vector<int>{2, 5, 3, 3});
    ops::Var per = ops::sum_per_sample(ops::mul(cat, cat));
    CHECK(per.value().shape() == std::vector<int>{2});
    ops::Var loss = ops::mean_all(per);
    loss.backward();

    const Tensor ga = numeric_grad(
        [&](const Tensor& p) {
            ops::Var cc = ops::concat_channels({ops::Var::constant(p), ops::Var::constant(b)});
            return ops::mean_all(ops::sum_per_sample(ops::mul(cc, cc))).value()[0];
        },
        a);
    CHECK(max_rel_diff(va.grad(), ga, 1e-4) < 1e-6);

    ops::Var r = ops::reshape(ops::Var::constant(a), {2, 18});
    CHECK(r.value().shape() == std::vector<int>{2, 18});
}

TEST_CASE("softmax and cross entropy gradients match finite differences") {
    Rng rng(26);
    const Tensor logits = random_tensor({2, 4, 3, 3}, rng);
    Tensor onehot({2, 4, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int h = 0; h < 3; ++h)
            for (int w = 0; w < 3; ++w) onehot.at(n, rng.uniform_int(0, 3), h, w) = 1.0;

    CHECK(check_input_grad([&](const ops::Var& v) { return ops::cross_entropy_softmax(v, onehot); }, logits) < 1e-5);

    const Tensor m = random_tensor({2, 4, 3, 3}, rng);
    CHECK(check_input_grad(
              [&](const ops::Var& v) {
                  return ops::sum_all(ops::mul(ops::softmax_channels(v), ops::Var::constant(m)));
              },
              logits) < 1e-5);

    // per-pixel softmax planes sum to one
    ops::Var soft = ops::softmax_channels(ops::Var::constant(logits));
    for (int n = 0; n < 2; ++n)
        for (int h = 0; h < 3; ++h)
            for (int w = 0; w < 3; ++w) {
                real s = 0.0;
                for (int c = 0; c < 4; ++c) s += soft.value().at(n, c, h, w);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
            }
}

TEST_CASE("mul_plane broadcasts over channels and routes gradient") {
    Rng rng(27);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor plane = random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0);
    CHECK(check_input_grad(
              [&](const ops::Var& v) { return ops::sum_all(ops::mul_plane(ops::mul(v, v), plane)); }, x) < 1e-5);
}

TEST_CASE("detach blocks gradient flow") {
    Rng rng(28);
    const Tensor x = random_tensor({2, 2}, rng);
    ops::Var vx = ops::Var::leaf(x, true);
    ops::Var loss = ops::sum_all(ops::mul(ops::detach(vx), vx));
    loss.backward();
    // d/dx of detach(x)*x is detach(x), not 2x
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(vx.grad()[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("graph reuse accumulates gradients once per path") {
    // y = x + x must give dy/dx = 2
    Tensor x({3}, 1.5);
    ops::Var vx = ops::Var::leaf(x, true);
    ops::Var loss = ops::sum_all(ops::add(vx, vx));
    loss.backward();
    for (int i = 0; i < 3; ++i) CHECK(vx.grad()[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d rejects bad shapes") {
    Tensor x({1, 3, 4, 4});
    Tensor w({4, 2, 3, 3});
    Tensor b({4});
    CHECK_THROWS_AS(ops::conv2d(ops::Var::constant(x), ops::Var::constant(w), ops::Var::constant(b)),
                    std::invalid_argument);
    Tensor weven({4, 3, 2, 2});
    CHECK_THROWS_AS(ops::conv2d(ops::Var::constant(x), ops::Var::constant(weven), ops::Var::constant(b)),
                    std::invalid_argument);
}

TEST_CASE("ops are deterministic across calls") {
    Rng rng(29);
    const Tensor x = random_tensor({2, 3, 8, 8}, rng);
    const Tensor w = he_weights(5, 3, 3, rng);
    const Tensor b = random_tensor({5}, rng);
    ops::Var y1 = ops::conv2d(ops::Var::constant(x), ops::Var::constant(w), ops::Var::constant(b), 2);
    ops::Var y2 = ops::conv2d(ops::Var::constant(x), ops::Var::constant(w), ops::Var::constant(b), 2);
    CHECK(max_abs_diff(y1.value(), y2.value()) == 0.0);
}
