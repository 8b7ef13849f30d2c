// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "vapi/alignkit.hpp"
#include "vapi/argen.hpp"
#include "vapi/optim.hpp"
#include "vapi/tokenizer.hpp"

namespace vapi {

struct VapiConfig {
    int group_size = 8;           // G
    double beta = 0.1;            // prior regularization weight
    double clip_epsilon = 0.2;    // policy-ratio clip
    double xi = 0.5;              // context corruption rate
    double max_advantage_clip = 5.0;
    double max_grad_norm = 1.0;
    int inner_epochs = 1;
    double sample_temperature = 1.0;
    RewardWeights reward_weights{0.5};
    enum class RatioGranularity { kToken, kSequence };
    RatioGranularity ratio_granularity = RatioGranularity::kToken;
};

struct RolloutGroup {
    ImageSample reference;
    TokenSeq gt_tokens;     // x*
    TokenSeq noisy_tokens;  // x~*
    std::vector<TokenSeq> samples;
    std::vector<std::vector<double>> old_logprobs;  // G x N, at rollout time
    std::vector<double> rewards;
    std::vector<double> advantages;
};

// One teacher-forced pass on the corrupted context; G position-independent
// draws from its softmax rows, decoded and scored against the reference.
RolloutGroup rollout_group(const ArModel& ar, const Tokenizer& tok,
                           const FeatureBank& bank, const ImageSample& sample,
                           const VapiConfig& cfg, SeededRng& rng);

// Cross-entropy of the clean targets under the corrupted context.
Tensor prior_loss(const ArModel& ar, int label, const TokenSeq& x_star,
                  const TokenSeq& x_tilde);

struct VapiObjective {
    Tensor objective;  // scalar, to maximize
    double surrogate = 0.0;
    double prior = 0.0;
    double clip_fraction = 0.0;
};

// Clipped-ratio surrogate with the group advantage broadcast across positions,
// minus beta times the prior loss; one differentiable pass serves both terms.
VapiObjective vapi_objective(const ArModel& ar, const RolloutGroup& group,
                             const VapiConfig& cfg);

// Same, but old log-probabilities supplied explicitly (snapshot path and
// off-policy tests).
VapiObjective vapi_objective_with_old(const ArModel& ar, const RolloutGroup& group,
                                      const std::vector<std::vector<double>>& old_logprobs,
                                      const VapiConfig& cfg);

struct VapiStepMetrics {
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double surrogate = 0.0;
    double prior = 0.0;
    double objective = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
};

// One ascent step over a batch of rollout groups. The tokenizer must be
// frozen (no parameter with requires_grad).
VapiStepMetrics vapi_step(ArModel& ar, const Tokenizer& tok, const FeatureBank& bank,
                          const std::vector<const ImageSample*>& batch,
                          const VapiConfig& cfg, AdamW& opt, SeededRng& rng);

// Number of frozen policy copies allocated so far (inner_epochs > 1 only).
uint64_t snapshot_allocation_count();

// ---- appendix baselines ----

struct SteConfig {
    double tau = 1.0;  // softmax temperature of the relaxation
    double max_grad_norm = 1.0;
    RewardWeights reward_weights{0.5};
};

// Straight-through offset (y_hard - y_soft) captured at a linearization
// point. The finite-difference oracle pins it so the differenced function is
// the same surrogate the backward pass differentiates.
struct StePins {
    Tensor offset;  // {N,K}
};

StePins capture_ste_pins(const Tensor& logits_values, double tau);

// Differentiable reconstruction path: hard argmax tokens forward, softmax
// relaxation backward, embedded through the codebook and decoded.
Tensor ste_decode_from_logits(const Tensor& logits, const Tokenizer& tok, double tau,
                              const StePins* pins = nullptr);

struct SteStepMetrics {
    double loss = 0.0;
    double mse = 0.0;
    double perceptual = 0.0;
    double grad_norm = 0.0;
};

SteStepMetrics ste_finetune_step(ArModel& ar, const Tokenizer& tok,
                                 const FeatureBank& bank,
                                 const std::vector<const ImageSample*>& batch,
                                 const SteConfig& cfg, AdamW& opt);

struct TokPtConfig {
    double max_grad_norm = 1.0;
    RewardWeights reward_weights{0.5};
    double sample_temperature = 1.0;
};

struct TokPtStepMetrics {
    double loss = 0.0;
    double mse = 0.0;
    double perceptual = 0.0;
};

// Decoder-only post-training on teacher-forced samples; AR model, encoder,
// and codebook stay frozen.
TokPtStepMetrics tokenizer_posttrain_step(const ArModel& ar, Tokenizer& tok,
                                          const FeatureBank& bank,
                                          const std::vector<const ImageSample*>& batch,
                                          const TokPtConfig& cfg, AdamW& opt,
                                          SeededRng& rng);

}  // namespace vapi
