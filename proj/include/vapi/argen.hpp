// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "vapi/params.hpp"
#include "vapi/rng.hpp"
#include "vapi/tensor.hpp"

namespace vapi {

struct ArConfig {
    int vocab = 32;  // K
    int num_classes = 8;
    int seq_len = 16;  // N
    int dim = 32;
    int heads = 2;
    int layers = 2;
    int ffn_mult = 4;

    int class_index(int label) const { return vocab + label; }
    int bos_index() const { return vocab + num_classes; }
    int table_rows() const { return vocab + num_classes + 1; }
    int input_len() const { return seq_len + 1; }  // class + BOS + N-1 tokens
    int head_dim() const { return dim / heads; }
};

// Tiny reference used by enumeration oracles: every token sequence fits in
// a brute-force sweep (6^4 joints).
ArConfig enumerable_ar_config();

// Class-conditional causal transformer over token sequences. Position t of
// the logit output conditions on the class token, BOS, and tokens < t.
class ArModel {
public:
    ArModel(ArConfig cfg, uint64_t init_seed);

    const ArConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Full teacher-forced pass: prefix length N, logits {N,K}. Row t uses
    // only prefix[0..t-1].
    Tensor forward_logits(int label, const TokenSeq& prefix) const;

    // Same computation; its softmax rows are the teacher-forced posterior
    // factors that rollouts sample from.
    Tensor teacher_forced_dist(int label, const TokenSeq& gt_prefix) const;

    // Next-token logits {K} for a partial prefix (length < N).
    Tensor next_token_logits(int label, const TokenSeq& prefix) const;

    // Mean over positions of -log pi(x_t | x_<t); the pretraining loss.
    Tensor nll(int label, const TokenSeq& targets) const;

    // Sequential sampling; temperature 0 is argmax with lowest-index ties.
    TokenSeq sample_free_running(int label, double temperature, SeededRng& rng) const;

    // Instrumentation: total causal passes executed by this process.
    static uint64_t forward_pass_count();

private:
    Tensor hidden_states(int label, const TokenSeq& tokens_in) const;

    ArConfig cfg_;
    ParamStore params_;
};

// One independent draw per logit row; the per-position sampling used on
// teacher-forced rows.
TokenSeq sample_from_rows(const Tensor& logits, double temperature, SeededRng& rng);

// Value-level log softmax picks, one per row.
std::vector<double> row_log_probs(const Tensor& logits, const TokenSeq& picks);

}  // namespace vapi
