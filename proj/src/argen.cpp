// SPDX-License-Identifier: Apache-2.0
#include "vapi/argen.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vapi {

namespace {

std::atomic<uint64_t> g_forward_passes{0};

Tensor causal_mask(int t) {
    std::vector<double> m(static_cast<size_t>(t) * t, 0.0);
    for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) m[static_cast<size_t>(i) * t + j] = -1e30;
    return Tensor::from_data({t, t}, std::move(m));
}

}  // namespace

ArConfig enumerable_ar_config() {
    ArConfig cfg;
    cfg.vocab = 6;
    cfg.seq_len = 4;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    return cfg;
}

ArModel::ArModel(ArConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.dim % cfg_.heads != 0) throw std::runtime_error("dim must divide by heads");
    SeededRng rng(init_seed, SeededRng::stream_of({0x61, 0x72}));
    const int d = cfg_.dim;
    const double std_w = 0.08;
    params_.add("embed", Tensor::randn({cfg_.table_rows(), d}, std_w, rng, true));
    params_.add("pos", Tensor::randn({cfg_.input_len(), d}, std_w, rng, true));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        params_.add(p + "ln1.g", Tensor::full({d}, 1.0, true));
        params_.add(p + "ln1.b", Tensor::zeros({d}, true));
        params_.add(p + "attn.wq", Tensor::randn({d, d}, std_w, rng, true));
        params_.add(p + "attn.wk", Tensor::randn({d, d}, std_w, rng, true));
        params_.add(p + "attn.wv", Tensor::randn({d, d}, std_w, rng, true));
        params_.add(p + "attn.wo", Tensor::randn({d, d}, std_w, rng, true));
        params_.add(p + "attn.bo", Tensor::zeros({d}, true));
        params_.add(p + "ln2.g", Tensor::full({d}, 1.0, true));
        params_.add(p + "ln2.b", Tensor::zeros({d}, true));
        params_.add(p + "ffn.w1", Tensor::randn({d, cfg_.ffn_mult * d}, std_w, rng, true));
        params_.add(p + "ffn.b1", Tensor::zeros({cfg_.ffn_mult * d}, true));
        params_.add(p + "ffn.w2", Tensor::randn({cfg_.ffn_mult * d, d}, std_w, rng, true));
        params_.add(p + "ffn.b2", Tensor::zeros({d}, true));
    }
    params_.add("final_ln.g", Tensor::full({d}, 1.0, true));
    params_.add("final_ln.b", Tensor::zeros({d}, true));
    params_.add("out.w", Tensor::randn({d, cfg_.vocab}, std_w, rng, true));
    params_.add("out.b", Tensor::zeros({cfg_.vocab}, true));
}

Tensor ArModel::hidden_states(int label, const TokenSeq& tokens_in) const {
    if (label < 0 || label >= cfg_.num_classes)
        throw std::runtime_error("invalid class label");
    if (static_cast<int>(tokens_in.size()) > cfg_.seq_len - 1)
        throw std::runtime_error("shape mismatch");
    g_forward_passes.fetch_add(1, std::memory_order_relaxed);

    TokenSeq ids;
    ids.reserve(tokens_in.size() + 2);
    ids.push_back(cfg_.class_index(label));
    ids.push_back(cfg_.bos_index());
    for (int tok : tokens_in) {
        if (tok < 0 || tok >= cfg_.vocab) throw std::runtime_error("token out of vocabulary");
        ids.push_back(tok);
    }
    const int t = static_cast<int>(ids.size());
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor x = add(gather_rows(params_.at("embed"), ids),
                   slice_rows(params_.at("pos"), 0, t));
    const Tensor mask = causal_mask(t);

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        Tensor a = layer_norm_rows(x, params_.at(p + "ln1.g"), params_.at(p + "ln1.b"));
        Tensor q = matmul(a, params_.at(p + "attn.wq"));
        Tensor k = matmul(a, params_.at(p + "attn.wk"));
        Tensor v = matmul(a, params_.at(p + "attn.wv"));
        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg_.heads));
        for (int h = 0; h < cfg_.heads; ++h) {
            Tensor qh = slice_cols(q, h * hd, hd);
            Tensor kh = slice_cols(k, h * hd, hd);
            Tensor vh = slice_cols(v, h * hd, hd);
            Tensor scores = add(scale(matmul(qh, transpose(kh)), att_scale), mask);
            heads.push_back(matmul(softmax(scores), vh));
        }
        Tensor ctx = concat_cols(heads);
        x = add(x, add_rowvec(matmul(ctx, params_.at(p + "attn.wo")),
                              params_.at(p + "attn.bo")));
        Tensor f = layer_norm_rows(x, params_.at(p + "ln2.g"), params_.at(p + "ln2.b"));
        Tensor h1 = tanh_(add_rowvec(matmul(f, params_.at(p + "ffn.w1")),
                                     params_.at(p + "ffn.b1")));
        x = add(x, add_rowvec(matmul(h1, params_.at(p + "ffn.w2")),
                              params_.at(p + "ffn.b2")));
    }
    return layer_norm_rows(x, params_.at("final_ln.g"), params_.at("final_ln.b"));
}

Tensor ArModel::forward_logits(int label, const TokenSeq& prefix) const {
    if (static_cast<int>(prefix.size()) != cfg_.seq_len)
        throw std::runtime_error("shape mismatch");
    TokenSeq tokens_in(prefix.begin(), prefix.end() - 1);
    Tensor h = hidden_states(label, tokens_in);
    Tensor rows = slice_rows(h, 1, cfg_.seq_len);
    return add_rowvec(matmul(rows, params_.at("out.w")), params_.at("out.b"));
}

Tensor ArModel::teacher_forced_dist(int label, const TokenSeq& gt_prefix) const {
    return forward_logits(label, gt_prefix);
}

Tensor ArModel::next_token_logits(int label, const TokenSeq& prefix) const {
    if (static_cast<int>(prefix.size()) >= cfg_.seq_len)
        throw std::runtime_error("shape mismatch");
    Tensor h = hidden_states(label, prefix);
    Tensor last = slice_rows(h, h.dim(0) - 1, 1);
    Tensor logits = add_rowvec(matmul(last, params_.at("out.w")), params_.at("out.b"));
    return reshape(logits, {cfg_.vocab});
}

Tensor ArModel::nll(int label, const TokenSeq& targets) const {
    return cross_entropy_seq(forward_logits(label, targets), targets);
}

TokenSeq ArModel::sample_free_running(int label, double temperature,
                                      SeededRng& rng) const {
    if (temperature < 0.0) throw std::runtime_error("temperature must be >= 0");
    NoGradGuard guard;
    TokenSeq out;
    out.reserve(static_cast<size_t>(cfg_.seq_len));
    for (int t = 0; t < cfg_.seq_len; ++t) {
        Tensor logits = next_token_logits(label, out);
        if (temperature == 0.0) {
            out.push_back(argmax_lowest(logits.data()));
        } else {
            Tensor probs = softmax(logits, temperature);
            out.push_back(categorical_sample(probs, rng));
        }
    }
    return out;
}

uint64_t ArModel::forward_pass_count() {
    return g_forward_passes.load(std::memory_order_relaxed);
}

TokenSeq sample_from_rows(const Tensor& logits, double temperature, SeededRng& rng) {
    NoGradGuard guard;
    const int n = logits.dim(0);
    const int k = logits.dim(1);
    const Tensor probs = softmax(logits, temperature);
    TokenSeq out(static_cast<size_t>(n), 0);
    std::vector<double> row(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) row[static_cast<size_t>(j)] = probs.at(i, j);
        out[static_cast<size_t>(i)] = categorical_sample(row, rng);
    }
    return out;
}

std::vector<double> row_log_probs(const Tensor& logits, const TokenSeq& picks) {
    NoGradGuard guard;
    return pick_per_row(log_softmax(logits), picks).data();
}

}  // namespace vapi
