// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vapi/optim.hpp"
#include "vapi/params.hpp"

namespace vapi {

// Binary container: magic "VAPI", version, stage tag, config hash, step,
// run seed, optimizer step count, then a named tensor table (path, shape,
// f64 little-endian payload). Saving a loaded checkpoint reproduces the
// file byte for byte.
struct Checkpoint {
    std::string stage;
    uint64_t config_hash = 0;
    uint64_t step = 0;
    uint64_t run_seed = 0;
    uint64_t opt_step = 0;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Pack/unpack helpers; paths are prefixed ("ar.", "tok.", "opt.m.", ...).
void pack_params(Checkpoint& c, const std::string& prefix, const ParamStore& params);
void unpack_params(const Checkpoint& c, const std::string& prefix, ParamStore& params);
void pack_optimizer(Checkpoint& c, const std::string& prefix, const AdamW& opt);
void unpack_optimizer(const Checkpoint& c, const std::string& prefix, AdamW& opt);

}  // namespace vapi
