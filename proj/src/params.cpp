// SPDX-License-Identifier: Apache-2.0
#include "vapi/params.hpp"

#include <stdexcept>

namespace vapi {

Tensor& ParamStore::add(const std::string& path, Tensor t) {
    auto [it, inserted] = params_.emplace(path, std::move(t));
    if (!inserted) throw std::runtime_error("duplicate parameter path: " + path);
    return it->second;
}

Tensor& ParamStore::at(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end()) throw std::runtime_error("unknown parameter path: " + path);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw std::runtime_error("unknown parameter path: " + path);
    return it->second;
}

int64_t ParamStore::scalar_count() const {
    int64_t n = 0;
    for (const auto& [path, t] : params_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [path, t] : params_) t.zero_grad();
}

void ParamStore::set_requires_grad(bool v) {
    for (auto& [path, t] : params_) t.set_requires_grad(v);
}

void ParamStore::set_requires_grad_prefix(const std::string& prefix, bool v) {
    for (auto& [path, t] : params_)
        if (path.rfind(prefix, 0) == 0) t.set_requires_grad(v);
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& [path, t] : params_) {
        Tensor copy = Tensor::from_data(t.shape(), t.data(), t.requires_grad());
        out.add(path, std::move(copy));
    }
    return out;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.size() != params_.size())
        throw std::runtime_error("parameter store layout mismatch");
    auto it = params_.begin();
    for (const auto& [path, t] : other.params_) {
        if (it->first != path || it->second.numel() != t.numel())
            throw std::runtime_error("parameter store layout mismatch");
        it->second.mutable_data() = t.data();
        ++it;
    }
}

}  // namespace vapi
