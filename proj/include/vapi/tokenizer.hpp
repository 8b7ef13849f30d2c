// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "vapi/alignkit.hpp"
#include "vapi/optim.hpp"
#include "vapi/params.hpp"
#include "vapi/synthdata.hpp"
#include "vapi/tensor.hpp"

namespace vapi {

struct TokenizerConfig {
    int image_size = 16;
    int patch = 4;
    int codebook_size = 32;  // K
    int latent_dim = 8;      // C
    int hidden = 32;

    int grid() const { return image_size / patch; }
    int seq_len() const { return grid() * grid(); }  // N
    int patch_dim() const { return patch * patch; }
};

// Patch MLP encoder, nearest-neighbor quantizer over a learned codebook, and
// a mirrored decoder with a sigmoid squash so outputs stay in [0,1].
class Tokenizer {
public:
    Tokenizer(TokenizerConfig cfg, uint64_t init_seed);

    const TokenizerConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // image {16,16} -> latents {N,C}; differentiable.
    Tensor encode(const Tensor& image) const;

    // Nearest codebook row per position (squared Euclidean, ties toward the
    // lowest index). Returns indices and the selected embeddings.
    std::pair<TokenSeq, Tensor> quantize(const Tensor& latents) const;

    // Convenience: quantize(encode(image)) without graph construction.
    TokenSeq tokenize(const Tensor& image) const;

    // latents {N,C} -> image {16,16}; differentiable.
    Tensor decode_latents(const Tensor& latents) const;
    Tensor decode(const TokenSeq& tokens) const;

private:
    TokenizerConfig cfg_;
    ParamStore params_;
};

struct TokenizerLossWeights {
    double lambda_p = 0.5;
    double lambda_q = 1.0;
    double beta_commit = 0.25;
};

// Stop-gradient branches captured at a linearization point. Production code
// leaves this null (branches pin to the current forward); the
// finite-difference oracle pins them to the unperturbed point so that
// numeric and analytic gradients compare the same function.
struct QuantizerPins {
    Tensor z_ref;
    Tensor embed_ref;
    TokenSeq tokens;
};

struct TokenizerLossResult {
    Tensor total;
    // component graphs, retained so contracts on them stay testable
    Tensor recon_mse;
    Tensor recon_perceptual;
    Tensor quant_codebook;  // ||sg[z] - e||^2 / N
    Tensor quant_commit;    // ||z - sg[e]||^2 / N
    double mse = 0.0;
    double perceptual = 0.0;
    double quant = 0.0;
    TokenSeq tokens;
};

TokenizerLossResult tokenizer_loss(const Tokenizer& tok, const FeatureBank& bank,
                                   const Tensor& image, const TokenizerLossWeights& w,
                                   const QuantizerPins* pins = nullptr);

QuantizerPins capture_quantizer_pins(const Tokenizer& tok, const Tensor& image);

struct TokenizerStepMetrics {
    double total = 0.0;
    double mse = 0.0;
    double perceptual = 0.0;
    double quant = 0.0;
    int distinct_tokens = 0;
};

TokenizerStepMetrics train_tokenizer_step(Tokenizer& tok, const FeatureBank& bank,
                                          const std::vector<const ImageSample*>& batch,
                                          const TokenizerLossWeights& w, AdamW& opt);

}  // namespace vapi
