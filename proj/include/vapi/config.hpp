// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vapi/argen.hpp"
#include "vapi/tokenizer.hpp"
#include "vapi/vapitrain.hpp"

namespace vapi {

// Flat key = value run configuration with strict schema validation; unknown
// keys are errors so hyperparameter typos cannot pass silently.
struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir = "runs/default";

    // data
    int data_samples_per_class = 100;
    uint64_t data_base_seed = 101;
    int eval_samples_per_class = 32;
    uint64_t eval_base_seed = 7707;

    // model
    int patch = 4;
    int codebook_size = 32;
    int latent_dim = 8;
    int enc_hidden = 32;
    int ar_dim = 32;
    int ar_heads = 2;
    int ar_layers = 2;

    // tokenizer pretraining
    int tok_steps = 2000;
    int tok_batch = 16;
    double tok_lr = 1e-3;
    double lambda_p = 0.5;
    double lambda_q = 1.0;
    double beta_commit = 0.25;

    // AR pretraining
    int ar_steps = 5000;
    int ar_batch = 16;
    double ar_lr = 1e-3;

    // post-training (all methods share step/batch budget)
    int post_steps = 200;
    int post_batch = 4;
    double post_lr = 1e-4;
    int group_size = 8;
    double beta = 0.1;
    double clip_epsilon = 0.2;
    double xi = 0.5;
    double max_advantage_clip = 5.0;
    double max_grad_norm = 1.0;
    int inner_epochs = 1;
    std::string ratio_granularity = "token";  // token | sequence
    double ste_tau = 1.0;

    double weight_decay = 1e-4;
    int ckpt_every = 100;

    // evaluation
    double sigma = 0.1;
    int elbo_mc = 64;
    int elbo_images = 8;
    int exposure_mc = 8;
    int exposure_images = 64;
    int eval_gen_per_class = 32;
    double eval_temperature = 1.0;
    int tf_reward_samples = 4;

    TokenizerConfig tokenizer_config() const;
    ArConfig ar_config() const;
    VapiConfig vapi_config() const;
    SteConfig ste_config() const;
    TokPtConfig tokpt_config() const;
    TokenizerLossWeights tokenizer_loss_weights() const;
    RewardWeights reward_weights() const { return RewardWeights{lambda_p}; }

    // Canonical sorted key=value rendering; basis of the config hash.
    std::string canonical() const;
    uint64_t hash() const;

    void validate() const;
};

// Parses `key = value` lines ('#' comments); throws on unknown keys or
// malformed values.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

}  // namespace vapi
