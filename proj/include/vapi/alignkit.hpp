// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vapi/rng.hpp"
#include "vapi/synthdata.hpp"
#include "vapi/tensor.hpp"

namespace vapi {

// Frozen random 3x3 convolution bank (8 filters, tanh). Weights come from a
// fixed seed and are never trained; the bank backs the perceptual loss term,
// the reward, and the feature statistics used for evaluation.
class FeatureBank {
public:
    static constexpr uint64_t kSeed = 0x5EEDF00Dull;
    static constexpr int kNumFilters = 8;

    FeatureBank();
    const Tensor& filters() const { return filters_; }

    // tanh(conv3x3(img)); differentiable w.r.t. the image.
    Tensor feature_map(const Tensor& image) const;

    // 16-d pooled summary (per-filter spatial mean and rms), no gradient.
    std::vector<double> pooled(const Tensor& image) const;

private:
    Tensor filters_;  // {8,3,3}
};

// Per-position token replacement channel: keep with probability 1 - xi,
// otherwise replace by a uniform draw over the K-1 other tokens.
struct CorruptionSpec {
    double xi = 0.5;
    int vocab_size = 32;
};

TokenSeq corrupt(const TokenSeq& x_star, const CorruptionSpec& spec, SeededRng& rng);

// Probability that one position keeps (kept=true) or lands on one specific
// wrong token (kept=false).
double corruption_pmf(const CorruptionSpec& spec, bool kept);

struct RewardWeights {
    double lambda_p = 0.5;
};

// -(pixel MSE + lambda_p * frozen-feature MSE); always <= 0, never
// differentiated.
double reward(const Tensor& decoded, const Tensor& reference,
              const RewardWeights& w, const FeatureBank& bank);

// Group-relative normalization: (r - mean) / population std, zeros when the
// std floor (1e-8) triggers, then clamped to [-max_clip, max_clip].
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double max_clip);

}  // namespace vapi
