// SPDX-License-Identifier: Apache-2.0
#include "vapi/tokenizer.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace vapi {

Tokenizer::Tokenizer(TokenizerConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    SeededRng rng(init_seed, SeededRng::stream_of({0x70, 0x6B}));
    const int pd = cfg_.patch_dim();
    const double enc_std = 1.0 / std::sqrt(static_cast<double>(pd));
    const double dec_std = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
    params_.add("encoder.w1", Tensor::randn({pd, cfg_.hidden}, enc_std, rng, true));
    params_.add("encoder.b1", Tensor::zeros({cfg_.hidden}, true));
    params_.add("encoder.w2", Tensor::randn({cfg_.hidden, cfg_.latent_dim},
                                            1.0 / std::sqrt(static_cast<double>(cfg_.hidden)),
                                            rng, true));
    params_.add("encoder.b2", Tensor::zeros({cfg_.latent_dim}, true));
    // codebook spread roughly like early encoder outputs
    params_.add("codebook", Tensor::randn({cfg_.codebook_size, cfg_.latent_dim}, 0.3, rng, true));
    params_.add("decoder.w1",
                Tensor::randn({cfg_.latent_dim, cfg_.hidden},
                              1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim)), rng, true));
    params_.add("decoder.b1", Tensor::zeros({cfg_.hidden}, true));
    params_.add("decoder.w2", Tensor::randn({cfg_.hidden, pd}, dec_std, rng, true));
    params_.add("decoder.b2", Tensor::zeros({pd}, true));
}

Tensor Tokenizer::encode(const Tensor& image) const {
    if (image.ndim() != 2 || image.dim(0) != cfg_.image_size ||
        image.dim(1) != cfg_.image_size)
        throw std::runtime_error("shape mismatch");
    Tensor patches = extract_patches(image, cfg_.patch);
    Tensor h = tanh_(add_rowvec(matmul(patches, params_.at("encoder.w1")),
                                params_.at("encoder.b1")));
    return add_rowvec(matmul(h, params_.at("encoder.w2")), params_.at("encoder.b2"));
}

std::pair<TokenSeq, Tensor> Tokenizer::quantize(const Tensor& latents) const {
    if (latents.ndim() != 2 || latents.dim(1) != cfg_.latent_dim)
        throw std::runtime_error("shape mismatch");
    const Tensor& cb = params_.at("codebook");
    const int n = latents.dim(0);
    const int k = cfg_.codebook_size;
    const int c = cfg_.latent_dim;
    TokenSeq tokens(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        double best = 0.0;
        int best_k = 0;
        for (int kk = 0; kk < k; ++kk) {
            double d2 = 0.0;
            for (int j = 0; j < c; ++j) {
                const double diff = latents.at(i, j) - cb.at(kk, j);
                d2 += diff * diff;
            }
            if (kk == 0 || d2 < best) {  // strict < keeps ties at the lowest index
                best = d2;
                best_k = kk;
            }
        }
        tokens[static_cast<size_t>(i)] = best_k;
    }
    return {tokens, gather_rows(cb, tokens)};
}

TokenSeq Tokenizer::tokenize(const Tensor& image) const {
    NoGradGuard guard;
    return quantize(encode(image)).first;
}

Tensor Tokenizer::decode_latents(const Tensor& latents) const {
    if (latents.ndim() != 2 || latents.dim(0) != cfg_.seq_len() ||
        latents.dim(1) != cfg_.latent_dim)
        throw std::runtime_error("shape mismatch");
    Tensor h = tanh_(add_rowvec(matmul(latents, params_.at("decoder.w1")),
                                params_.at("decoder.b1")));
    Tensor patches = sigmoid_(
        add_rowvec(matmul(h, params_.at("decoder.w2")), params_.at("decoder.b2")));
    return assemble_patches(patches, cfg_.patch, cfg_.image_size);
}

Tensor Tokenizer::decode(const TokenSeq& tokens) const {
    for (int t : tokens)
        if (t < 0 || t >= cfg_.codebook_size)
            throw std::runtime_error("token out of vocabulary");
    return decode_latents(gather_rows(params_.at("codebook"), tokens));
}

QuantizerPins capture_quantizer_pins(const Tokenizer& tok, const Tensor& image) {
    NoGradGuard guard;
    Tensor z = tok.encode(image);
    auto [tokens, embeds] = tok.quantize(z);
    return QuantizerPins{z.detach(), embeds.detach(), tokens};
}

TokenizerLossResult tokenizer_loss(const Tokenizer& tok, const FeatureBank& bank,
                                   const Tensor& image, const TokenizerLossWeights& w,
                                   const QuantizerPins* pins) {
    const TokenizerConfig& cfg = tok.config();
    Tensor z = tok.encode(image);

    QuantizerPins local;
    if (pins == nullptr) {
        auto [tokens, embeds] = tok.quantize(z);
        local.z_ref = z.detach();
        local.embed_ref = embeds.detach();
        local.tokens = std::move(tokens);
        pins = &local;
    }
    Tensor e = gather_rows(tok.params().at("codebook"), pins->tokens);

    // Quantizer pass-through: value follows the selected embeddings while the
    // reconstruction gradient reaches the encoder; the codebook is updated by
    // the quantization term only.
    Tensor zq = add(z, sub(pins->embed_ref, pins->z_ref));
    Tensor recon = tok.decode_latents(zq);

    Tensor l_mse = mse(recon, image);
    Tensor l_p = mse(bank.feature_map(recon), bank.feature_map(image));

    const double inv_n = 1.0 / static_cast<double>(cfg.seq_len());
    Tensor codebook_term = scale(sum_sq(sub(pins->z_ref, e)), inv_n);
    Tensor commit_term = scale(sum_sq(sub(z, pins->embed_ref)), inv_n);
    Tensor l_q = add(codebook_term, scale(commit_term, w.beta_commit));

    Tensor total = add(add(l_mse, scale(l_p, w.lambda_p)), scale(l_q, w.lambda_q));

    TokenizerLossResult out;
    out.total = total;
    out.recon_mse = l_mse;
    out.recon_perceptual = l_p;
    out.quant_codebook = codebook_term;
    out.quant_commit = commit_term;
    out.mse = l_mse.item();
    out.perceptual = l_p.item();
    out.quant = l_q.item();
    out.tokens = pins->tokens;
    return out;
}

TokenizerStepMetrics train_tokenizer_step(Tokenizer& tok, const FeatureBank& bank,
                                          const std::vector<const ImageSample*>& batch,
                                          const TokenizerLossWeights& w, AdamW& opt) {
    if (batch.empty()) throw std::runtime_error("empty batch");
    TokenizerStepMetrics metrics;
    std::set<int> used;
    Tensor acc;
    for (const ImageSample* s : batch) {
        TokenizerLossResult r = tokenizer_loss(tok, bank, s->image, w);
        metrics.mse += r.mse;
        metrics.perceptual += r.perceptual;
        metrics.quant += r.quant;
        used.insert(r.tokens.begin(), r.tokens.end());
        acc = acc.defined() ? add(acc, r.total) : r.total;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Tensor loss = scale(acc, inv_b);
    if (!std::isfinite(loss.item())) throw std::runtime_error("diverged");
    metrics.total = loss.item();
    metrics.mse *= inv_b;
    metrics.perceptual *= inv_b;
    metrics.quant *= inv_b;
    metrics.distinct_tokens = static_cast<int>(used.size());

    tok.params().zero_grad();
    loss.backward();
    opt.step(tok.params());
    return metrics;
}

}  // namespace vapi
