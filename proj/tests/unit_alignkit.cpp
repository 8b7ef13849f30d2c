// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vapi/alignkit.hpp"
#include "vapi/synthdata.hpp"

using namespace vapi;

TEST_CASE("feature bank is bitwise identical across constructions") {
    FeatureBank a, b;
    REQUIRE(a.filters().numel() == 8 * 9);
    for (size_t i = 0; i < a.filters().data().size(); ++i)
        CHECK(a.filters().data()[i] == b.filters().data()[i]);
    ImageSample s = render_class_image(3, 42);
    auto pa = a.pooled(s.image);
    auto pb = b.pooled(s.image);
    REQUIRE(pa.size() == 16);
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("corrupt: xi=0 is the identity kernel") {
    SeededRng rng(1, 2);
    TokenSeq x = {0, 5, 31, 7, 7, 20};
    CorruptionSpec spec{0.0, 32};
    for (int i = 0; i < 20; ++i) CHECK(corrupt(x, spec, rng) == x);
}

TEST_CASE("corrupt: xi=1 with K=2 always flips") {
    SeededRng rng(2, 3);
    TokenSeq x(64, 0);
    CorruptionSpec spec{1.0, 2};
    for (int i = 0; i < 20; ++i) {
        TokenSeq y = corrupt(x, spec, rng);
        for (int tok : y) CHECK(tok == 1);
    }
}

TEST_CASE("corrupt: marginals match the kernel mass function at 1e5 draws") {
    SeededRng rng(911, 0);
    const int k = 32;
    const int n = 100000;
    const double xi = 0.5;
    CorruptionSpec spec{xi, k};
    const int gt = 13;
    TokenSeq x(static_cast<size_t>(n), gt);
    TokenSeq y = corrupt(x, spec, rng);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int tok : y) ++counts[static_cast<size_t>(tok)];

    const double keep_rate = static_cast<double>(counts[gt]) / n;
    CHECK(std::abs(keep_rate - (1.0 - xi)) < 0.01);

    const double p_wrong = xi / (k - 1);
    const double sigma = std::sqrt(n * p_wrong * (1.0 - p_wrong));
    for (int tok = 0; tok < k; ++tok) {
        if (tok == gt) continue;
        CHECK(std::abs(counts[static_cast<size_t>(tok)] - n * p_wrong) <= 3.0 * sigma);
    }
}

TEST_CASE("corruption_pmf: hand values and normalization") {
    CorruptionSpec spec{0.5, 5};
    CHECK(corruption_pmf(spec, true) == doctest::Approx(0.5));
    CHECK(corruption_pmf(spec, false) == doctest::Approx(0.125));
    for (double xi : {0.0, 0.3, 0.99, 1.0})
        for (int k : {2, 5, 32}) {
            CorruptionSpec s{xi, k};
            const double total = corruption_pmf(s, true) + (k - 1) * corruption_pmf(s, false);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    CHECK_THROWS_WITH(corruption_pmf(CorruptionSpec{0.5, 1}, true),
                      "no replacement token exists");
    SeededRng rng(0, 0);
    TokenSeq x = {0};
    CHECK_THROWS_WITH(corrupt(x, CorruptionSpec{0.5, 1}, rng),
                      "no replacement token exists");
}

TEST_CASE("reward: identical images give exactly zero") {
    FeatureBank bank;
    ImageSample s = render_class_image(4, 77);
    CHECK(reward(s.image, s.image, RewardWeights{0.5}, bank) == 0.0);
}

TEST_CASE("reward: unit MSE case with lambda_p = 0") {
    FeatureBank bank;
    Tensor zeros = Tensor::zeros({16, 16});
    Tensor ones = Tensor::full({16, 16}, 1.0);
    CHECK(reward(zeros, ones, RewardWeights{0.0}, bank) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("reward: interpolating toward the reference never lowers it (lambda_p=0)") {
    FeatureBank bank;
    ImageSample a = render_class_image(0, 5);
    ImageSample b = render_class_image(7, 9);
    double prev = -1e300;
    for (double t = 0.0; t <= 1.0001; t += 0.1) {
        std::vector<double> mix(a.image.data().size());
        for (size_t i = 0; i < mix.size(); ++i)
            mix[i] = (1.0 - t) * b.image.data()[i] + t * a.image.data()[i];
        const double r = reward(Tensor::from_data({16, 16}, mix), a.image,
                                RewardWeights{0.0}, bank);
        CHECK(r >= prev - 1e-12);
        prev = r;
    }
}

TEST_CASE("reward: shape mismatch raises") {
    FeatureBank bank;
    CHECK_THROWS_WITH(reward(Tensor::zeros({8, 8}), Tensor::zeros({16, 16}),
                             RewardWeights{}, bank),
                      "shape mismatch");
}

TEST_CASE("group_advantages: constant group hits the std floor") {
    auto adv = group_advantages({1.0, 1.0, 1.0, 1.0}, 5.0);
    for (double a : adv) CHECK(a == 0.0);
}

TEST_CASE("group_advantages: two-point and four-point frozen values") {
    auto two = group_advantages({0.0, 1.0}, 5.0);
    CHECK(two[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto four = group_advantages({1.0, 2.0, 3.0, 4.0}, 5.0);
    CHECK(four[0] == doctest::Approx(-1.34164078649987).epsilon(1e-9));
    CHECK(four[1] == doctest::Approx(-0.447213595499958).epsilon(1e-9));
    CHECK(four[2] == doctest::Approx(0.447213595499958).epsilon(1e-9));
    CHECK(four[3] == doctest::Approx(1.34164078649987).epsilon(1e-9));
}

TEST_CASE("group_advantages: clipping applies after normalization") {
    std::vector<double> rewards = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0};
    auto adv = group_advantages(rewards, 1.5);
    for (double a : adv) CHECK(std::abs(a) <= 1.5);
    CHECK(adv[7] == doctest::Approx(1.5));
}

TEST_CASE("group_advantages: mean zero, unit std, shift and scale invariance") {
    SeededRng rng(55, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> r(8);
        for (double& x : r) x = rng.next_gaussian();
        auto adv = group_advantages(r, 5.0);

        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= adv.size();
        CHECK(std::abs(mean) < 1e-12);

        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        var /= adv.size();
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

        std::vector<double> shifted(r), scaled(r);
        for (double& x : shifted) x += 3.7;
        for (double& x : scaled) x *= 4.25;
        auto adv_s = group_advantages(shifted, 5.0);
        auto adv_m = group_advantages(scaled, 5.0);
        for (size_t i = 0; i < adv.size(); ++i) {
            CHECK(std::abs(adv[i] - adv_s[i]) < 1e-12);
            CHECK(std::abs(adv[i] - adv_m[i]) < 1e-9);
        }
    }
}

TEST_CASE("group_advantages: G < 2 rejected") {
    CHECK_THROWS(group_advantages({1.0}, 5.0));
}
