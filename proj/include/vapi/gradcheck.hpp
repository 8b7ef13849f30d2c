// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "vapi/params.hpp"

namespace vapi {

// Compares the reverse-mode gradient of `f` against central finite
// differences, element by element over every trainable parameter. Returns
// the max of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double grad_check(const std::function<Tensor(ParamStore&)>& f, ParamStore& params,
                  double h);

}  // namespace vapi
