// SPDX-License-Identifier: Apache-2.0
#include "vapi/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace vapi {

double grad_check(const std::function<Tensor(ParamStore&)>& f, ParamStore& params,
                  double h) {
    params.zero_grad();
    Tensor out = f(params);
    out.backward();

    std::map<std::string, std::vector<double>> analytic;
    for (auto& [path, p] : params) {
        if (!p.requires_grad()) continue;
        analytic[path] = p.grad();
        if (!all_finite(analytic[path])) throw std::runtime_error("gradient blow-up");
    }

    double max_rel = 0.0;
    for (auto& [path, p] : params) {
        if (!p.requires_grad()) continue;
        auto& data = p.mutable_data();
        const auto& g_ad = analytic[path];
        for (size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double fp = f(params).item();
            data[i] = saved - h;
            const double fm = f(params).item();
            data[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("gradient blow-up");
            const double g_fd = (fp - fm) / (2.0 * h);
            const double denom = std::max(1e-8, std::abs(g_ad[i]) + std::abs(g_fd));
            max_rel = std::max(max_rel, std::abs(g_ad[i] - g_fd) / denom);
        }
    }
    return max_rel;
}

}  // namespace vapi
