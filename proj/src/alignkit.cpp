// SPDX-License-Identifier: Apache-2.0
#include "vapi/alignkit.hpp"

#include <cmath>
#include <stdexcept>

namespace vapi {

FeatureBank::FeatureBank() {
    SeededRng rng(kSeed, 0);
    filters_ = Tensor::randn({kNumFilters, 3, 3}, 0.5, rng);
}

Tensor FeatureBank::feature_map(const Tensor& image) const {
    return tanh_(conv3x3_same(image, filters_));
}

std::vector<double> FeatureBank::pooled(const Tensor& image) const {
    NoGradGuard guard;
    const Tensor fm = feature_map(image);
    const int hw = fm.dim(1) * fm.dim(2);
    std::vector<double> out;
    out.reserve(2 * kNumFilters);
    for (int c = 0; c < kNumFilters; ++c) {
        const double* map = &fm.data()[static_cast<size_t>(c) * hw];
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < hw; ++i) {
            s += map[i];
            s2 += map[i] * map[i];
        }
        out.push_back(s / hw);
        out.push_back(std::sqrt(s2 / hw));
    }
    return out;
}

TokenSeq corrupt(const TokenSeq& x_star, const CorruptionSpec& spec, SeededRng& rng) {
    if (spec.xi < 0.0 || spec.xi > 1.0) throw std::runtime_error("xi out of range");
    if (spec.vocab_size < 2 && spec.xi > 0.0)
        throw std::runtime_error("no replacement token exists");
    TokenSeq out = x_star;
    for (int& tok : out) {
        if (tok < 0 || tok >= spec.vocab_size)
            throw std::runtime_error("token out of vocabulary");
        const double u = rng.next_double();
        if (u < 1.0 - spec.xi) continue;
        int r = static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.vocab_size - 1)));
        if (r >= tok) ++r;  // skip the ground-truth token
        tok = r;
    }
    return out;
}

double corruption_pmf(const CorruptionSpec& spec, bool kept) {
    if (spec.vocab_size < 2 && spec.xi > 0.0)
        throw std::runtime_error("no replacement token exists");
    return kept ? 1.0 - spec.xi : spec.xi / (spec.vocab_size - 1);
}

double reward(const Tensor& decoded, const Tensor& reference,
              const RewardWeights& w, const FeatureBank& bank) {
    if (decoded.shape() != reference.shape()) throw std::runtime_error("shape mismatch");
    NoGradGuard guard;
    const double pixel_mse = mse(decoded, reference).item();
    double perceptual = 0.0;
    if (w.lambda_p > 0.0)
        perceptual = mse(bank.feature_map(decoded), bank.feature_map(reference)).item();
    return -(pixel_mse + w.lambda_p * perceptual);
}

std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double max_clip) {
    const size_t g = rewards.size();
    if (g < 2) throw std::runtime_error("group size must be >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);  // population variance
    const double std_dev = std::sqrt(var);
    std::vector<double> adv(g, 0.0);
    if (std_dev >= 1e-8) {
        for (size_t i = 0; i < g; ++i) {
            double a = (rewards[i] - mean) / std_dev;
            if (a > max_clip) a = max_clip;
            if (a < -max_clip) a = -max_clip;
            adv[i] = a;
        }
    }
    return adv;
}

}  // namespace vapi
