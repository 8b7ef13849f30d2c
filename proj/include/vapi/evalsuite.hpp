// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vapi/alignkit.hpp"
#include "vapi/argen.hpp"
#include "vapi/synthdata.hpp"
#include "vapi/tokenizer.hpp"

namespace vapi {

// Isotropic Gaussian log-density of `image` around `decoded`:
// -|I - D|^2 / (2 sigma^2) - (P/2) ln(2 pi sigma^2).
double pixel_loglik(const Tensor& image, const Tensor& decoded, double sigma);

// Full autoregressive law over {0..K-1}^N, abstracted so enumeration
// oracles run both on real models and on synthetic conditional tables.
class SequenceLaw {
public:
    virtual ~SequenceLaw() = default;
    virtual int vocab() const = 0;
    virtual int length() const = 0;
    // conditional distribution of the next token given a prefix
    virtual std::vector<double> conditional(const TokenSeq& prefix) const = 0;
    // log-probability of a complete sequence; default chains conditionals
    virtual double log_prob(const TokenSeq& x) const;
};

// Free-running law of an AR model for one class label.
class ArLaw : public SequenceLaw {
public:
    ArLaw(const ArModel& model, int label) : model_(&model), label_(label) {}
    int vocab() const override { return model_->config().vocab; }
    int length() const override { return model_->config().seq_len; }
    std::vector<double> conditional(const TokenSeq& prefix) const override;
    double log_prob(const TokenSeq& x) const override;

private:
    const ArModel* model_;
    int label_;
};

// Law defined by an explicit conditional callback; test scaffolding for
// degenerate cases.
class CallbackLaw : public SequenceLaw {
public:
    using Fn = std::function<std::vector<double>(const TokenSeq&)>;
    CallbackLaw(int vocab, int length, Fn fn)
        : vocab_(vocab), length_(length), fn_(std::move(fn)) {}
    int vocab() const override { return vocab_; }
    int length() const override { return length_; }
    std::vector<double> conditional(const TokenSeq& prefix) const override {
        return fn_(prefix);
    }

private:
    int vocab_;
    int length_;
    Fn fn_;
};

struct KlChainResult {
    double joint_kl = 0.0;
    double chained_kl = 0.0;
    double abs_diff = 0.0;
};

// Joint KL by exhaustive enumeration of complete sequences, and chained KL
// by exhaustive prefix enumeration; two independent routes to the same
// quantity.
KlChainResult kl_chain_check(const SequenceLaw& p, const SequenceLaw& q);

struct ElboReport {
    double recon = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
    bool has_exact = false;
    double exact_log_marginal = 0.0;
    double slack = 0.0;  // exact_log_marginal - elbo, when computed
};

// Reconstruction term by Monte Carlo over teacher-forced draws; KL term with
// exact per-position categorical KLs along sampled prefixes.
ElboReport elbo_estimate(const ArModel& ar, const Tokenizer& tok,
                         const ImageSample& sample, double sigma, int num_mc,
                         SeededRng& rng, bool with_exact = false);

// log sum_x [ pi(x) * p(I|x) ] over all K^N sequences. `reversed_order`
// enumerates and accumulates in a different order for cross-checking.
double exact_log_marginal(const ArModel& ar, const Tokenizer& tok,
                          const ImageSample& sample, double sigma,
                          bool reversed_order = false);

// Free-running log-probabilities of every sequence, odometer order.
std::vector<double> enumerate_sequence_log_probs(const ArModel& ar, int label);

bool enumerable(int vocab, int seq_len);

// Mean nats per token of the exact per-position KL between teacher-forced
// and free-running conditionals, Monte Carlo over teacher-forced prefixes.
double exposure_bias_estimate(const ArModel& ar, const Tokenizer& tok,
                              const std::vector<ImageSample>& data,
                              int num_prefix_mc, SeededRng& rng,
                              int max_images = -1);

struct FeatureStats {
    std::vector<double> mean;  // 16
    std::vector<double> cov;   // 16x16 row-major
};

FeatureStats fit_feature_stats(const std::vector<Tensor>& images,
                               const FeatureBank& bank);

// Frechet distance between Gaussians fitted to pooled frozen features.
double toy_fid(const std::vector<Tensor>& real_images,
               const std::vector<Tensor>& generated_images,
               const FeatureBank& bank);

// Symmetric eigendecomposition (cyclic Jacobi); exposed for tests.
void jacobi_eigen_sym(const std::vector<double>& a, int n,
                      std::vector<double>& eigvals, std::vector<double>& eigvecs);

double recon_psnr(double mse_value);
int codebook_usage(const Tokenizer& tok, const std::vector<ImageSample>& data);

}  // namespace vapi
