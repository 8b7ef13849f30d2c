// SPDX-License-Identifier: Apache-2.0
#include "vapi/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vapi {

void AdamW::step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& [path, p] : params) {
        if (!p.requires_grad()) continue;
        const std::vector<double> g = p.grad();
        auto& m = m_[path];
        auto& v = v_[path];
        if (m.empty()) m.assign(g.size(), 0.0);
        if (v.empty()) v.assign(g.size(), 0.0);
        if (m.size() != g.size()) throw std::runtime_error("optimizer state mismatch");
        auto& data = p.mutable_data();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
            v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                                  opt_.weight_decay * data[i]);
        }
    }
}

double AdamW::clip_grad_norm(ParamStore& params, double max_norm) {
    double sq = 0.0;
    for (auto& [path, p] : params) {
        if (!p.requires_grad() || !p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [path, p] : params) {
            if (!p.requires_grad() || !p.has_grad()) continue;
            // scale in place through the node's grad buffer
            auto node = p.node();
            for (double& g : node->grad) g *= s;
        }
    }
    return norm;
}

}  // namespace vapi
