// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "vapi/vapitrain.hpp"

namespace vapi::testing {

inline TokenizerConfig tiny_tokenizer_config() {
    TokenizerConfig cfg;
    cfg.patch = 8;  // 2x2 grid -> N=4
    cfg.codebook_size = 6;
    cfg.latent_dim = 4;
    cfg.hidden = 8;
    return cfg;
}

// Enumerable tokenizer + AR pair pretrained for a few steps so gradient
// spectra sit at a generic operating point rather than a saturated init.
struct TrainedTinyRig {
    Tokenizer tok;
    ArModel ar;
    FeatureBank bank;
    std::vector<ImageSample> data;

    explicit TrainedTinyRig(uint64_t seed, int tok_steps = 150, int ar_steps = 150)
        : tok(tiny_tokenizer_config(), seed),
          ar(enumerable_ar_config(), seed + 1),
          data(make_dataset(DatasetSpec{2, seed + 2})) {
        std::vector<const ImageSample*> batch;
        for (const auto& s : data) batch.push_back(&s);
        AdamW topt({.lr = 2e-3});
        for (int i = 0; i < tok_steps; ++i)
            train_tokenizer_step(tok, bank, batch, TokenizerLossWeights{}, topt);
        AdamW aopt({.lr = 2e-3});
        for (int i = 0; i < ar_steps; ++i) {
            Tensor acc;
            for (const ImageSample* s : batch) {
                Tensor l = ar.nll(s->label, tok.tokenize(s->image));
                acc = acc.defined() ? add(acc, l) : l;
            }
            Tensor loss = scale(acc, 1.0 / static_cast<double>(batch.size()));
            ar.params().zero_grad();
            loss.backward();
            aopt.step(ar.params());
        }
    }
};

}  // namespace vapi::testing
