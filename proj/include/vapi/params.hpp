// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "vapi/tensor.hpp"

namespace vapi {

// Named parameter leaves with stable lexicographic iteration order.
class ParamStore {
public:
    Tensor& add(const std::string& path, Tensor t);
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
    bool contains(const std::string& path) const { return params_.count(path) > 0; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    size_t size() const { return params_.size(); }

    int64_t scalar_count() const;
    void zero_grad();
    void set_requires_grad(bool v);
    // Prefix-scoped freeze/unfreeze, e.g. "decoder." to train the decoder only.
    void set_requires_grad_prefix(const std::string& prefix, bool v);

    // Deep value copy (fresh leaves, same paths and flags).
    ParamStore clone() const;
    // Copies values from another store with identical paths/shapes.
    void copy_values_from(const ParamStore& other);

private:
    std::map<std::string, Tensor> params_;
};

}  // namespace vapi
