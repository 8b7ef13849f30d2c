// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vapi/params.hpp"

namespace vapi {

// AdamW with decoupled weight decay. Parameters with requires_grad unset are
// skipped entirely (their moments are never allocated).
class AdamW {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW() = default;
    explicit AdamW(Options opt) : opt_(opt) {}

    Options& options() { return opt_; }
    const Options& options() const { return opt_; }
    uint64_t step_count() const { return t_; }

    // Applies one update from the gradients accumulated in `params`.
    void step(ParamStore& params);

    // Global L2 gradient clip across trainable parameters; returns the
    // pre-clip norm.
    static double clip_grad_norm(ParamStore& params, double max_norm);

    // Checkpoint access.
    std::map<std::string, std::vector<double>>& first_moments() { return m_; }
    std::map<std::string, std::vector<double>>& second_moments() { return v_; }
    const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
    const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
    void set_step_count(uint64_t t) { t_ = t; }

private:
    Options opt_;
    uint64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

}  // namespace vapi
