// SPDX-License-Identifier: Apache-2.0
#include "vapi/vapitrain.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace vapi {

namespace {

std::atomic<uint64_t> g_snapshot_allocs{0};

void require_tokenizer_frozen(const Tokenizer& tok) {
    for (const auto& [path, t] : tok.params())
        if (t.requires_grad())
            throw std::runtime_error("tokenizer must be frozen for this stage");
}

TokenSeq argmax_rows(const Tensor& logits) {
    const int n = logits.dim(0), k = logits.dim(1);
    TokenSeq out(static_cast<size_t>(n), 0);
    std::vector<double> row(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) row[static_cast<size_t>(j)] = logits.at(i, j);
        out[static_cast<size_t>(i)] = argmax_lowest(row);
    }
    return out;
}

}  // namespace

RolloutGroup rollout_group(const ArModel& ar, const Tokenizer& tok,
                           const FeatureBank& bank, const ImageSample& sample,
                           const VapiConfig& cfg, SeededRng& rng) {
    if (cfg.group_size < 2) throw std::runtime_error("group size must be >= 2");
    NoGradGuard guard;
    RolloutGroup g;
    g.reference = sample;
    g.gt_tokens = tok.tokenize(sample.image);
    g.noisy_tokens =
        corrupt(g.gt_tokens, CorruptionSpec{cfg.xi, tok.config().codebook_size}, rng);

    // the single causal pass this group ever needs
    const Tensor logits = ar.teacher_forced_dist(sample.label, g.noisy_tokens);
    if (!all_finite(logits.data())) throw std::runtime_error("non-finite logits");

    g.samples.reserve(static_cast<size_t>(cfg.group_size));
    g.old_logprobs.reserve(static_cast<size_t>(cfg.group_size));
    g.rewards.reserve(static_cast<size_t>(cfg.group_size));
    for (int i = 0; i < cfg.group_size; ++i) {
        TokenSeq x = (cfg.sample_temperature == 0.0)
                         ? argmax_rows(logits)
                         : sample_from_rows(logits, cfg.sample_temperature, rng);
        g.old_logprobs.push_back(row_log_probs(logits, x));
        const Tensor decoded = tok.decode(x);
        g.rewards.push_back(reward(decoded, sample.image, cfg.reward_weights, bank));
        g.samples.push_back(std::move(x));
    }
    g.advantages = group_advantages(g.rewards, cfg.max_advantage_clip);
    return g;
}

Tensor prior_loss(const ArModel& ar, int label, const TokenSeq& x_star,
                  const TokenSeq& x_tilde) {
    if (x_star.size() != x_tilde.size()) throw std::runtime_error("shape mismatch");
    return cross_entropy_seq(ar.teacher_forced_dist(label, x_tilde), x_star);
}

VapiObjective vapi_objective_with_old(const ArModel& ar, const RolloutGroup& group,
                                      const std::vector<std::vector<double>>& old_logprobs,
                                      const VapiConfig& cfg) {
    const int n = static_cast<int>(group.gt_tokens.size());
    const int g_size = static_cast<int>(group.samples.size());
    const double lo = 1.0 - cfg.clip_epsilon;
    const double hi = 1.0 + cfg.clip_epsilon;

    const Tensor logits = ar.teacher_forced_dist(group.reference.label, group.noisy_tokens);
    const Tensor logp = log_softmax(logits);
    const Tensor prior = neg(mean(pick_per_row(logp, group.gt_tokens)));

    Tensor acc;
    int64_t clipped = 0;
    for (int i = 0; i < g_size; ++i) {
        const double adv = group.advantages[static_cast<size_t>(i)];
        const Tensor lp_i = pick_per_row(logp, group.samples[static_cast<size_t>(i)]);
        const Tensor old_i =
            Tensor::from_data({n}, old_logprobs[static_cast<size_t>(i)]);
        Tensor term;
        if (cfg.ratio_granularity == VapiConfig::RatioGranularity::kToken) {
            const Tensor ratio = exp_(sub(lp_i, old_i));
            for (double r : ratio.data())
                if (r < lo || r > hi) ++clipped;
            term = sum(minimum(scale(ratio, adv), scale(clamp(ratio, lo, hi), adv)));
        } else {
            const Tensor ratio = exp_(sub(sum(lp_i), sum(old_i)));
            if (ratio.item() < lo || ratio.item() > hi) clipped += n;
            term = scale(minimum(scale(ratio, adv), scale(clamp(ratio, lo, hi), adv)),
                         static_cast<double>(n));
        }
        acc = acc.defined() ? add(acc, term) : term;
    }
    const Tensor surrogate = scale(acc, 1.0 / (static_cast<double>(g_size) * n));

    VapiObjective out;
    out.objective = sub(surrogate, scale(prior, cfg.beta));
    out.surrogate = surrogate.item();
    out.prior = prior.item();
    out.clip_fraction =
        static_cast<double>(clipped) / (static_cast<double>(g_size) * n);
    return out;
}

VapiObjective vapi_objective(const ArModel& ar, const RolloutGroup& group,
                             const VapiConfig& cfg) {
    return vapi_objective_with_old(ar, group, group.old_logprobs, cfg);
}

uint64_t snapshot_allocation_count() { return g_snapshot_allocs.load(); }

VapiStepMetrics vapi_step(ArModel& ar, const Tokenizer& tok, const FeatureBank& bank,
                          const std::vector<const ImageSample*>& batch,
                          const VapiConfig& cfg, AdamW& opt, SeededRng& rng) {
    if (batch.empty()) throw std::runtime_error("empty batch");
    require_tokenizer_frozen(tok);

    std::vector<RolloutGroup> groups;
    groups.reserve(batch.size());
    for (const ImageSample* s : batch)
        groups.push_back(rollout_group(ar, tok, bank, *s, cfg, rng));

    // pi_theta_old beyond the first inner epoch: a frozen parameter copy;
    // with a single inner epoch the stored log-probabilities suffice.
    std::unique_ptr<ArModel> snapshot;
    if (cfg.inner_epochs > 1) {
        snapshot = std::make_unique<ArModel>(ar.config(), 0);
        snapshot->params().copy_values_from(ar.params());
        snapshot->params().set_requires_grad(false);
        g_snapshot_allocs.fetch_add(1);
    }

    VapiStepMetrics metrics;
    for (const RolloutGroup& g : groups) {
        for (double r : g.rewards) metrics.mean_reward += r;
        for (double a : g.advantages) metrics.mean_abs_advantage += std::abs(a);
    }
    metrics.mean_reward /= static_cast<double>(groups.size()) * cfg.group_size;
    metrics.mean_abs_advantage /= static_cast<double>(groups.size()) * cfg.group_size;

    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
        Tensor acc;
        double surrogate = 0.0, prior = 0.0, clip_fraction = 0.0;
        for (const RolloutGroup& g : groups) {
            VapiObjective obj;
            if (snapshot) {
                std::vector<std::vector<double>> old_lps;
                {
                    NoGradGuard guard;
                    const Tensor old_logits =
                        snapshot->teacher_forced_dist(g.reference.label, g.noisy_tokens);
                    old_lps.reserve(g.samples.size());
                    for (const TokenSeq& x : g.samples)
                        old_lps.push_back(row_log_probs(old_logits, x));
                }
                obj = vapi_objective_with_old(ar, g, old_lps, cfg);
            } else {
                obj = vapi_objective(ar, g, cfg);
            }
            surrogate += obj.surrogate;
            prior += obj.prior;
            clip_fraction += obj.clip_fraction;
            acc = acc.defined() ? add(acc, obj.objective) : obj.objective;
        }
        const double inv_b = 1.0 / static_cast<double>(groups.size());
        const Tensor objective = scale(acc, inv_b);
        if (!std::isfinite(objective.item())) throw std::runtime_error("diverged");
        const Tensor loss = neg(objective);

        ar.params().zero_grad();
        loss.backward();
        metrics.grad_norm = AdamW::clip_grad_norm(ar.params(), cfg.max_grad_norm);
        opt.step(ar.params());

        metrics.surrogate = surrogate * inv_b;
        metrics.prior = prior * inv_b;
        metrics.clip_fraction = clip_fraction * inv_b;
        metrics.objective = objective.item();
    }
    return metrics;
}

StePins capture_ste_pins(const Tensor& logits_values, double tau) {
    NoGradGuard guard;
    const int n = logits_values.dim(0), k = logits_values.dim(1);
    const Tensor y_soft = softmax(logits_values, tau);
    const TokenSeq hard_tokens = argmax_rows(logits_values);
    std::vector<double> offset(y_soft.data());
    for (double& v : offset) v = -v;
    for (int i = 0; i < n; ++i)
        offset[static_cast<size_t>(i) * k + hard_tokens[static_cast<size_t>(i)]] += 1.0;
    return StePins{Tensor::from_data({n, k}, std::move(offset))};
}

Tensor ste_decode_from_logits(const Tensor& logits, const Tokenizer& tok, double tau,
                              const StePins* pins) {
    const int n = logits.dim(0), k = logits.dim(1);
    if (k != tok.config().codebook_size || n != tok.config().seq_len())
        throw std::runtime_error("shape mismatch");
    const Tensor y_soft = softmax(logits, tau);
    Tensor y_st;
    if (pins == nullptr) {
        const TokenSeq hard_tokens = argmax_rows(logits);
        std::vector<double> onehot(static_cast<size_t>(n) * k, 0.0);
        for (int i = 0; i < n; ++i)
            onehot[static_cast<size_t>(i) * k + hard_tokens[static_cast<size_t>(i)]] = 1.0;
        const Tensor y_hard = Tensor::from_data({n, k}, std::move(onehot));
        y_st = straight_through(y_hard, y_soft);
    } else {
        // linearized form: identical value and gradient at the pin point,
        // but an honestly differentiable function of the logits
        y_st = add(y_soft, pins->offset);
    }
    const Tensor latents = matmul(y_st, tok.params().at("codebook"));
    return tok.decode_latents(latents);
}

SteStepMetrics ste_finetune_step(ArModel& ar, const Tokenizer& tok,
                                 const FeatureBank& bank,
                                 const std::vector<const ImageSample*>& batch,
                                 const SteConfig& cfg, AdamW& opt) {
    if (batch.empty()) throw std::runtime_error("empty batch");
    require_tokenizer_frozen(tok);

    SteStepMetrics metrics;
    Tensor acc;
    for (const ImageSample* s : batch) {
        const TokenSeq x_star = tok.tokenize(s->image);
        const Tensor logits = ar.teacher_forced_dist(s->label, x_star);
        const Tensor decoded = ste_decode_from_logits(logits, tok, cfg.tau);
        const Tensor l_mse = mse(decoded, s->image);
        const Tensor l_p =
            mse(bank.feature_map(decoded), bank.feature_map(s->image));
        const Tensor loss_b = add(l_mse, scale(l_p, cfg.reward_weights.lambda_p));
        metrics.mse += l_mse.item();
        metrics.perceptual += l_p.item();
        acc = acc.defined() ? add(acc, loss_b) : loss_b;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const Tensor loss = scale(acc, inv_b);
    if (!std::isfinite(loss.item())) throw std::runtime_error("diverged");
    metrics.loss = loss.item();
    metrics.mse *= inv_b;
    metrics.perceptual *= inv_b;

    ar.params().zero_grad();
    loss.backward();
    metrics.grad_norm = AdamW::clip_grad_norm(ar.params(), cfg.max_grad_norm);
    opt.step(ar.params());
    return metrics;
}

TokPtStepMetrics tokenizer_posttrain_step(const ArModel& ar, Tokenizer& tok,
                                          const FeatureBank& bank,
                                          const std::vector<const ImageSample*>& batch,
                                          const TokPtConfig& cfg, AdamW& opt,
                                          SeededRng& rng) {
    if (batch.empty()) throw std::runtime_error("empty batch");
    for (const auto& [path, t] : tok.params()) {
        const bool is_decoder = path.rfind("decoder.", 0) == 0;
        if (t.requires_grad() != is_decoder)
            throw std::runtime_error("only decoder weights may be trainable here");
    }

    TokPtStepMetrics metrics;
    Tensor acc;
    for (const ImageSample* s : batch) {
        TokenSeq x;
        {
            NoGradGuard guard;
            const TokenSeq x_star = tok.tokenize(s->image);
            const Tensor logits = ar.teacher_forced_dist(s->label, x_star);
            x = sample_from_rows(logits, cfg.sample_temperature, rng);
        }
        const Tensor decoded = tok.decode(x);
        const Tensor l_mse = mse(decoded, s->image);
        const Tensor l_p =
            mse(bank.feature_map(decoded), bank.feature_map(s->image));
        metrics.mse += l_mse.item();
        metrics.perceptual += l_p.item();
        const Tensor loss_b = add(l_mse, scale(l_p, cfg.reward_weights.lambda_p));
        acc = acc.defined() ? add(acc, loss_b) : loss_b;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const Tensor loss = scale(acc, inv_b);
    if (!std::isfinite(loss.item())) throw std::runtime_error("diverged");
    metrics.loss = loss.item();
    metrics.mse *= inv_b;
    metrics.perceptual *= inv_b;

    tok.params().zero_grad();
    loss.backward();
    AdamW::clip_grad_norm(tok.params(), cfg.max_grad_norm);
    opt.step(tok.params());
    return metrics;
}

}  // namespace vapi
