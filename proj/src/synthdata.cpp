// SPDX-License-Identifier: Apache-2.0
#include "vapi/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vapi {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

const char* kClassNames[kNumClasses] = {"h-stripes", "v-stripes", "checker",
                                        "diagonal",  "disc",      "gradient",
                                        "constant",  "blobs"};

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

const char* class_name(int label) {
    if (label < 0 || label >= kNumClasses) throw std::runtime_error("invalid class label");
    return kClassNames[label];
}

int class_id(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i)
        if (name == kClassNames[i]) return i;
    throw std::runtime_error("invalid class name: " + name);
}

ImageSample render_class_image(int label, uint64_t sample_seed) {
    if (label < 0 || label >= kNumClasses) throw std::runtime_error("invalid class label");
    SeededRng rng(sample_seed, SeededRng::stream_of({0x5A31u, static_cast<uint64_t>(label)}));

    // Shared variation knobs, drawn in fixed order. Phases advance in whole
    // pixels so every family is a lattice shift of one base pattern.
    const double intensity = 0.5 + 0.5 * rng.next_double();          // [0.5, 1.0]
    const int phase = static_cast<int>(rng.next_below(4));           // {0..3} px
    const int jx = static_cast<int>(rng.next_below(3)) - 1;          // {-1,0,1}
    const int jy = static_cast<int>(rng.next_below(3)) - 1;

    std::vector<double> img(static_cast<size_t>(kImageSize) * kImageSize, 0.0);
    auto px = [&](int y, int x) -> double& {
        return img[static_cast<size_t>(y) * kImageSize + x];
    };

    // smooth square wave, period 8, for the checker family
    auto block_wave = [](int t) {
        return 0.5 + 0.5 * std::tanh(1.6 * std::sin(kTwoPi * t / 8.0 + 0.3927));
    };

    switch (label) {
        case 0:  // h-stripes: sine bands constant along x, period 4 px
            for (int y = 0; y < kImageSize; ++y) {
                const double v = 0.5 + 0.5 * std::sin(kTwoPi * (y + jy + phase) / 4.0);
                for (int x = 0; x < kImageSize; ++x) px(y, x) = intensity * v;
            }
            break;
        case 1:  // v-stripes
            for (int x = 0; x < kImageSize; ++x) {
                const double v = 0.5 + 0.5 * std::sin(kTwoPi * (x + jx + phase) / 4.0);
                for (int y = 0; y < kImageSize; ++y) px(y, x) = intensity * v;
            }
            break;
        case 2:  // checker: soft-edged 4x4 blocks, full spatial period 8 px
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) {
                    const double sx = block_wave(x + jx + (phase & 1));
                    const double sy = block_wave(y + jy + (phase >> 1));
                    const double cell = sx * sy + (1.0 - sx) * (1.0 - sy);
                    px(y, x) = intensity * (0.1 + 0.9 * cell);
                }
            break;
        case 3:  // diagonal: sine bands along x+y, period 4 px
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) {
                    const double v =
                        0.5 + 0.5 * std::sin(kTwoPi * (x + y + jx + phase) / 4.0);
                    px(y, x) = intensity * v;
                }
            break;
        case 4: {  // disc: soft-edged filled circle near the center
            const double r = 4.0 + 1.5 * rng.next_double();
            const double cx = 7.5 + jx, cy = 7.5 + jy;
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) {
                    const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                    const double inside = 1.0 / (1.0 + std::exp(-2.0 * (r - d)));
                    px(y, x) = intensity * (0.08 + 0.92 * inside);
                }
            break;
        }
        case 5:  // gradient: left-to-right ramp
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) {
                    const double t = (x + jx + 1) / 17.0;
                    px(y, x) = intensity * (0.08 + 0.84 * t);
                }
            break;
        case 6:  // constant: one seeded level everywhere
            for (double& v : img) v = intensity;
            break;
        case 7: {  // blobs: three gaussian bumps
            double cx[3], cy[3], sg[3];
            for (int i = 0; i < 3; ++i) {
                cx[i] = 2.5 + 11.0 * rng.next_double() + jx;
                cy[i] = 2.5 + 11.0 * rng.next_double() + jy;
                sg[i] = 1.2 + 0.8 * rng.next_double();
            }
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) {
                    double field = 0.0;
                    for (int i = 0; i < 3; ++i) {
                        const double d2 =
                            (x - cx[i]) * (x - cx[i]) + (y - cy[i]) * (y - cy[i]);
                        field += std::exp(-d2 / (2.0 * sg[i] * sg[i]));
                    }
                    px(y, x) = intensity * (0.05 + 0.95 * std::min(1.0, field));
                }
            break;
        }
        default:
            break;
    }

    for (double& v : img) v = clamp01(v);
    ImageSample out;
    out.image = Tensor::from_data({kImageSize, kImageSize}, std::move(img));
    out.label = label;
    out.sample_seed = sample_seed;
    return out;
}

std::vector<ImageSample> make_dataset(const DatasetSpec& spec) {
    if (spec.num_samples_per_class < 1)
        throw std::runtime_error("num_samples_per_class must be >= 1");
    std::vector<ImageSample> out;
    out.reserve(static_cast<size_t>(kNumClasses) * spec.num_samples_per_class);
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < spec.num_samples_per_class; ++i) {
            const uint64_t seed = hash_combine(
                hash_combine(spec.base_seed, static_cast<uint64_t>(c)),
                static_cast<uint64_t>(i));
            out.push_back(render_class_image(c, seed));
        }
    return out;
}

void write_vapd(const std::string& path, const std::vector<ImageSample>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write dataset file: " + path);
    f.write("VAPD", 4);
    const uint32_t version = 1;
    const uint32_t count = static_cast<uint32_t>(samples.size());
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const ImageSample& s : samples) {
        const uint8_t label = static_cast<uint8_t>(s.label);
        f.write(reinterpret_cast<const char*>(&label), 1);
        f.write(reinterpret_cast<const char*>(&s.sample_seed), 8);
        for (double v : s.image.data()) {
            const float fv = static_cast<float>(v);
            f.write(reinterpret_cast<const char*>(&fv), 4);
        }
    }
    if (!f) throw std::runtime_error("short write on dataset file: " + path);
}

std::vector<ImageSample> read_vapd(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "VAPD", 4) != 0)
        throw std::runtime_error("bad dataset magic: " + path);
    uint32_t version = 0, count = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&count), 4);
    if (version != 1) throw std::runtime_error("unsupported dataset version");
    std::vector<ImageSample> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint8_t label = 0;
        uint64_t seed = 0;
        f.read(reinterpret_cast<char*>(&label), 1);
        f.read(reinterpret_cast<char*>(&seed), 8);
        std::vector<double> img(static_cast<size_t>(kImageSize) * kImageSize);
        for (double& v : img) {
            float fv = 0.0f;
            f.read(reinterpret_cast<char*>(&fv), 4);
            v = static_cast<double>(fv);
        }
        if (!f) throw std::runtime_error("truncated dataset file: " + path);
        ImageSample s;
        s.image = Tensor::from_data({kImageSize, kImageSize}, std::move(img));
        s.label = static_cast<int>(label);
        s.sample_seed = seed;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace vapi
