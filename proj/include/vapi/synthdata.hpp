// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vapi/tensor.hpp"

namespace vapi {

// Eight procedural grayscale classes on a 16x16 grid. Every sample is a pure
// function of (label, sample_seed): seeded variation covers phase, +/-1 px
// jitter, and an intensity scale in [0.5, 1.0].
constexpr int kNumClasses = 8;
constexpr int kImageSize = 16;

const char* class_name(int label);
int class_id(const std::string& name);

struct ImageSample {
    Tensor image;  // {16,16}, values in [0,1]
    int label = 0;
    uint64_t sample_seed = 0;
};

struct DatasetSpec {
    int num_samples_per_class = 100;
    uint64_t base_seed = 0;
};

ImageSample render_class_image(int label, uint64_t sample_seed);

// 8 * num_samples_per_class samples, class-major then index-minor;
// sample_seed = hash(base_seed, class id, index).
std::vector<ImageSample> make_dataset(const DatasetSpec& spec);

// VAPD container: magic "VAPD", version u32, count u32, then per sample
// label u8, seed u64, 256 f32 pixels (little-endian).
void write_vapd(const std::string& path, const std::vector<ImageSample>& samples);
std::vector<ImageSample> read_vapd(const std::string& path);

}  // namespace vapi
