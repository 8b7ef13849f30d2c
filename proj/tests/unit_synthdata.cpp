// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vapi/alignkit.hpp"
#include "vapi/synthdata.hpp"

using namespace vapi;

namespace {

// Per-filter row/column means of the frozen feature maps: a linear pooling,
// so a classifier on these is still a linear probe on frozen features.
std::vector<double> probe_features(const FeatureBank& bank, const Tensor& img) {
    NoGradGuard guard;
    const Tensor fm = bank.feature_map(img);
    const int f = fm.dim(0), h = fm.dim(1), w = fm.dim(2);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(f) * (h + w));
    for (int c = 0; c < f; ++c) {
        const double* map = &fm.data()[static_cast<size_t>(c) * h * w];
        for (int y = 0; y < h; ++y) {
            double s = 0.0;
            for (int x = 0; x < w; ++x) s += map[static_cast<size_t>(y) * w + x];
            out.push_back(s / w);
        }
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int y = 0; y < h; ++y) s += map[static_cast<size_t>(y) * w + x];
            out.push_back(s / h);
        }
    }
    return out;
}

// Gaussian elimination with partial pivoting; solves A X = B in place.
void solve_linear(std::vector<double>& a, std::vector<double>& b, int n, int m) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<size_t>(r) * n + col]) >
                std::abs(a[static_cast<size_t>(piv) * n + col]))
                piv = r;
        if (piv != col) {
            for (int c = 0; c < n; ++c)
                std::swap(a[static_cast<size_t>(col) * n + c], a[static_cast<size_t>(piv) * n + c]);
            for (int c = 0; c < m; ++c)
                std::swap(b[static_cast<size_t>(col) * m + c], b[static_cast<size_t>(piv) * m + c]);
        }
        const double d = a[static_cast<size_t>(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[static_cast<size_t>(r) * n + col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c)
                a[static_cast<size_t>(r) * n + c] -= f * a[static_cast<size_t>(col) * n + c];
            for (int c = 0; c < m; ++c)
                b[static_cast<size_t>(r) * m + c] -= f * b[static_cast<size_t>(col) * m + c];
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const double d = a[static_cast<size_t>(col) * n + col];
        for (int c = 0; c < m; ++c) {
            double acc = b[static_cast<size_t>(col) * m + c];
            for (int k = col + 1; k < n; ++k)
                acc -= a[static_cast<size_t>(col) * n + k] * b[static_cast<size_t>(k) * m + c];
            b[static_cast<size_t>(col) * m + c] = acc / d;
        }
    }
}

}  // namespace

TEST_CASE("constant class: all pixels equal one seeded level in [0.5,1]") {
    for (uint64_t seed : {0ull, 17ull, 9999ull}) {
        ImageSample s = render_class_image(6, seed);
        const double v = s.image.at(0, 0);
        CHECK(v >= 0.5);
        CHECK(v <= 1.0);
        for (double p : s.image.data()) CHECK(p == v);
    }
}

TEST_CASE("rendering is bitwise deterministic per (label, seed)") {
    for (int label = 0; label < kNumClasses; ++label) {
        ImageSample a = render_class_image(label, 1234 + label);
        ImageSample b = render_class_image(label, 1234 + label);
        REQUIRE(a.image.data().size() == b.image.data().size());
        for (size_t i = 0; i < a.image.data().size(); ++i)
            CHECK(a.image.data()[i] == b.image.data()[i]);
    }
}

TEST_CASE("all pixels stay in [0,1] across classes and seeds") {
    for (int label = 0; label < kNumClasses; ++label)
        for (uint64_t seed = 0; seed < 40; ++seed) {
            ImageSample s = render_class_image(label, seed * 977 + label);
            for (double p : s.image.data()) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
            }
        }
}

TEST_CASE("checker: wraparound autocorrelation at the full period exceeds 0.9") {
    for (uint64_t seed : {3ull, 88ull, 402ull}) {
        ImageSample s = render_class_image(2, seed);
        const auto& img = s.image.data();
        const int n = kImageSize;
        double mean = 0.0;
        for (double p : img) mean += p;
        mean /= img.size();
        double num = 0.0, den = 0.0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double a = img[static_cast<size_t>(y) * n + x] - mean;
                const double b = img[static_cast<size_t>(y) * n + ((x + 8) % n)] - mean;
                num += a * b;
                den += a * a;
            }
        CHECK(num / den > 0.9);
    }
}

TEST_CASE("make_dataset: counts, ordering, determinism") {
    DatasetSpec spec{1, 0};
    auto d = make_dataset(spec);
    REQUIRE(d.size() == 8);
    for (int i = 0; i < 8; ++i) CHECK(d[static_cast<size_t>(i)].label == i);

    auto d2 = make_dataset(spec);
    for (size_t i = 0; i < d.size(); ++i) {
        CHECK(d[i].sample_seed == d2[i].sample_seed);
        for (size_t j = 0; j < d[i].image.data().size(); ++j)
            CHECK(d[i].image.data()[j] == d2[i].image.data()[j]);
    }

    CHECK_THROWS(make_dataset(DatasetSpec{0, 0}));
}

TEST_CASE("make_dataset: intensity jitter active across a class") {
    auto d = make_dataset(DatasetSpec{100, 7});
    REQUIRE(d.size() == 800);
    for (int c = 0; c < 8; ++c) {
        std::vector<double> means;
        for (int i = 0; i < 100; ++i) {
            const auto& img = d[static_cast<size_t>(c) * 100 + i].image.data();
            double m = 0.0;
            for (double p : img) m += p;
            means.push_back(m / img.size());
        }
        double mu = 0.0;
        for (double m : means) mu += m;
        mu /= means.size();
        double var = 0.0;
        for (double m : means) var += (m - mu) * (m - mu);
        var /= means.size();
        CHECK(var > 0.0);
    }
}

TEST_CASE("classes are linearly separable on frozen features (>= 95%)") {
    FeatureBank bank;
    auto data = make_dataset(DatasetSpec{100, 31});
    const int n = static_cast<int>(data.size());
    const int fdim = static_cast<int>(probe_features(bank, data[0].image).size());
    const int d = fdim + 1;  // bias column

    // ridge-regularized least squares, one-vs-all targets
    std::vector<double> xtx(static_cast<size_t>(d) * d, 0.0);
    std::vector<double> xty(static_cast<size_t>(d) * kNumClasses, 0.0);
    std::vector<std::vector<double>> feats(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto f = probe_features(bank, data[static_cast<size_t>(i)].image);
        f.push_back(1.0);
        feats[static_cast<size_t>(i)] = std::move(f);
        const auto& x = feats[static_cast<size_t>(i)];
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) xtx[static_cast<size_t>(a) * d + b] += x[static_cast<size_t>(a)] * x[static_cast<size_t>(b)];
            xty[static_cast<size_t>(a) * kNumClasses + data[static_cast<size_t>(i)].label] += x[static_cast<size_t>(a)];
        }
    }
    for (int a = 0; a < d; ++a) xtx[static_cast<size_t>(a) * d + a] += 1e-6;
    solve_linear(xtx, xty, d, kNumClasses);

    int correct = 0;
    for (int i = 0; i < n; ++i) {
        const auto& x = feats[static_cast<size_t>(i)];
        int best = 0;
        double best_v = -1e300;
        for (int c = 0; c < kNumClasses; ++c) {
            double v = 0.0;
            for (int a = 0; a < d; ++a) v += x[static_cast<size_t>(a)] * xty[static_cast<size_t>(a) * kNumClasses + c];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (best == data[static_cast<size_t>(i)].label) ++correct;
    }
    const double acc = static_cast<double>(correct) / n;
    MESSAGE("linear probe accuracy: " << acc);
    CHECK(acc >= 0.95);
}

TEST_CASE("VAPD round-trip: rewrite of loaded file is byte-identical") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "vapi_synthdata_test";
    fs::create_directories(dir);
    const std::string p1 = (dir / "a.vapd").string();
    const std::string p2 = (dir / "b.vapd").string();

    auto d = make_dataset(DatasetSpec{3, 5});
    write_vapd(p1, d);
    auto loaded = read_vapd(p1);
    REQUIRE(loaded.size() == d.size());
    for (size_t i = 0; i < d.size(); ++i) {
        CHECK(loaded[i].label == d[i].label);
        CHECK(loaded[i].sample_seed == d[i].sample_seed);
        for (size_t j = 0; j < d[i].image.data().size(); ++j)
            CHECK(static_cast<float>(loaded[i].image.data()[j]) ==
                  static_cast<float>(d[i].image.data()[j]));
    }
    write_vapd(p2, loaded);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(b1.size() == b2.size());
    CHECK(b1 == b2);
    fs::remove_all(dir);
}

TEST_CASE("class names map both ways") {
    CHECK(class_id("checker") == 2);
    CHECK(std::string(class_name(7)) == "blobs");
    CHECK_THROWS(class_id("no-such-class"));
    CHECK_THROWS(class_name(8));
}
