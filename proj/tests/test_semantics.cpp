#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "umsn/semantics/masks.hpp"
#include "umsn/semantics/snet.hpp"
#include "umsn/synthesis/toy_faces.hpp"

using namespace umsn;
using namespace umsn::testsup;
namespace sem = umsn::semantics;

namespace {

Tensor random_labels(int h, int w, Rng& rng) {
    Tensor labels({h, w});
    for (std::int64_t i = 0; i < labels.size(); ++i) labels[i] = rng.uniform_int(0, 10);
    return labels;
}

}  // namespace

TEST_CASE("label grouping follows the 11-to-4 class listing") {
    CHECK(sem::class_of_source_label(0) == 1);   // background
    CHECK(sem::class_of_source_label(1) == 2);   // skin
    for (int l = 2; l <= 9; ++l) CHECK(sem::class_of_source_label(l) == 3);
    CHECK(sem::class_of_source_label(10) == 4);  // hair
    CHECK_THROWS_AS(sem::class_of_source_label(11), std::invalid_argument);
    CHECK_THROWS_AS(sem::class_of_source_label(-1), std::invalid_argument);

    CHECK(sem::class_name(1) == "background");
    CHECK(sem::class_name(4) == "hair");
    CHECK(sem::source_labels_of_class(3) == std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("group_labels produces a hard partition") {
    Tensor labels({4, 4});  // all background
    const auto all_bg = sem::group_labels(labels);
    all_bg.validate();
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(all_bg.planes.at(0, y, x) == 1.0);
            CHECK(all_bg.planes.at(1, y, x) == 0.0);
        }

    // nose and upper-lip pixels land in class 3
    labels.at(1, 2) = 6;
    labels.at(2, 3) = 7;
    const auto with_parts = sem::group_labels(labels);
    CHECK(with_parts.planes.at(2, 1, 2) == 1.0);
    CHECK(with_parts.planes.at(2, 2, 3) == 1.0);

    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto set = sem::group_labels(random_labels(9, 7, rng));
        set.validate();  // partition property for random label maps
    }

    Tensor bad({2, 2});
    bad.at(0, 0) = 11;
    CHECK_THROWS_AS(sem::group_labels(bad), std::invalid_argument);
}

TEST_CASE("decompose reconstructs the image for hard and soft masks") {
    Rng rng(32);
    const Tensor img = random_tensor({3, 8, 8}, rng, 0.0, 1.0);

    const auto hard = sem::group_labels(random_labels(8, 8, rng));
    auto parts = sem::decompose(img, hard);
    Tensor sum({3, 8, 8});
    for (const auto& p : parts)
        for (std::int64_t i = 0; i < sum.size(); ++i) sum[i] += p[i];
    CHECK(max_abs_diff(sum, img) == 0.0);  // hard partition: exact

    // m1 all-one: first part is the image, others zero
    const auto bg_only = sem::group_labels(Tensor({8, 8}));
    auto parts_bg = sem::decompose(img, bg_only);
    CHECK(max_abs_diff(parts_bg[0], img) == 0.0);
    for (int i = 1; i < 4; ++i)
        for (std::int64_t j = 0; j < parts_bg[static_cast<size_t>(i)].size(); ++j)
            CHECK(parts_bg[static_cast<size_t>(i)][j] == 0.0);

    // soft unit-sum masks reconstruct within 1e-6
    sem::SemanticMaskSet soft;
    soft.hard = false;
    soft.planes = Tensor({4, 8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            real parts4[4], total = 0.0;
            for (int c = 0; c < 4; ++c) {
                parts4[c] = rng.uniform(0.01, 1.0);
                total += parts4[c];
            }
            for (int c = 0; c < 4; ++c) soft.planes.at(c, y, x) = parts4[c] / total;
        }
    auto soft_parts = sem::decompose(img, soft);
    Tensor soft_sum({3, 8, 8});
    for (const auto& p : soft_parts)
        for (std::int64_t i = 0; i < soft_sum.size(); ++i) soft_sum[i] += p[i];
    CHECK(max_abs_diff(soft_sum, img) < 1e-6);

    const Tensor wrong({3, 4, 4});
    CHECK_THROWS_AS(sem::decompose(wrong, hard), std::invalid_argument);
}

TEST_CASE("harden uses argmax with lowest-index tie-break") {
    sem::SemanticMaskSet soft;
    soft.hard = false;
    soft.planes = Tensor({4, 1, 2});
    // pixel 0: clear winner class 3; pixel 1: tie between classes 2 and 4
    soft.planes.at(2, 0, 0) = 0.7;
    soft.planes.at(0, 0, 0) = 0.3;
    soft.planes.at(1, 0, 1) = 0.5;
    soft.planes.at(3, 0, 1) = 0.5;
    const auto hard = sem::harden(soft);
    CHECK(hard.planes.at(2, 0, 0) == 1.0);
    CHECK(hard.planes.at(1, 0, 1) == 1.0);  // ties keep the lowest class index
    CHECK(hard.planes.at(3, 0, 1) == 0.0);
}

TEST_CASE("f_score matches hand counts and handles the empty cases") {
    // 3x3 plane with 1 TP, 1 FP, 1 FN for class 2 -> P = R = 1/2 -> F = 0.5
    Tensor pred_idx({3, 3});
    Tensor truth_idx({3, 3});
    pred_idx.at(0, 0) = 1;  // TP
    truth_idx.at(0, 0) = 1;
    pred_idx.at(0, 1) = 1;  // FP
    truth_idx.at(1, 1) = 1;  // FN
    const auto pred = sem::mask_from_index(pred_idx);
    const auto truth = sem::mask_from_index(truth_idx);
    CHECK(sem::f_score(pred, truth, 2) == doctest::Approx(0.5));

    // identical non-empty class scores 1
    CHECK(sem::f_score(truth, truth, 2) == doctest::Approx(1.0));
    // predicted empty vs non-empty truth scores 0
    const auto empty = sem::mask_from_index(Tensor({3, 3}));
    CHECK(sem::f_score(empty, truth, 2) == doctest::Approx(0.0));
    // empty in both scores 1
    CHECK(sem::f_score(empty, empty, 3) == doctest::Approx(1.0));

    // self-comparison after hardening scores 1 for every class
    Rng rng(33);
    const auto set = sem::group_labels(random_labels(12, 12, rng));
    for (int c = 1; c <= 4; ++c) CHECK(sem::f_score(set, set, c) == doctest::Approx(1.0));
}

TEST_CASE("mask index serialization round-trips") {
    Rng rng(34);
    const auto set = sem::group_labels(random_labels(6, 5, rng));
    const auto back = sem::mask_from_index(sem::mask_to_index(set));
    CHECK(max_abs_diff(back.planes, set.planes) == 0.0);
}

TEST_CASE("snet emits unit-sum soft masks at the input resolution") {
    sem::SNet snet(0.25, 17);
    for (int size : {64, 32}) {
        Rng rng(35);
        const Tensor img = random_tensor({1, 3, size, size}, rng, 0.0, 1.0);
        ad::Var soft = snet.forward(ad::Var::constant(img));
        CHECK(soft.value().shape() == std::vector<int>{1, 4, size, size});
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                real sum = 0.0;
                for (int c = 0; c < 4; ++c) sum += soft.value().at(0, c, y, x);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
        // repeated inference is identical
        ad::Var again = snet.forward(ad::Var::constant(img));
        CHECK(max_abs_diff(soft.value(), again.value()) == 0.0);
    }

    Rng rng(36);
    CHECK_THROWS_AS(snet.forward(ad::Var::constant(random_tensor({1, 3, 15, 15}, rng))), std::invalid_argument);

    const synthesis::ToyFace face = synthesis::make_toy_face(4, 32, 32);
    const auto set = snet.infer(face.image);
    CHECK(!set.hard);
    set.validate();
}
