// SPDX-License-Identifier: Apache-2.0
#include "vapi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vapi {

namespace {

void write_u32(std::ostream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
}
void write_str(std::ostream& f, const std::string& s) {
    write_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint32_t read_u32(std::istream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& f) {
    const uint32_t n = read_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write("VAPI", 4);
    write_u32(f, 1);  // format version
    write_str(f, c.stage);
    write_u64(f, c.config_hash);
    write_u64(f, c.step);
    write_u64(f, c.run_seed);
    write_u64(f, c.opt_step);
    write_u32(f, static_cast<uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        write_str(f, name);
        write_u32(f, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_u32(f, static_cast<uint32_t>(d));
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "VAPI", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    const uint32_t version = read_u32(f);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    Checkpoint c;
    c.stage = read_str(f);
    c.config_hash = read_u64(f);
    c.step = read_u64(f);
    c.run_seed = read_u64(f);
    c.opt_step = read_u64(f);
    const uint32_t count = read_u32(f);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_str(f);
        const uint32_t ndim = read_u32(f);
        std::vector<int> shape(ndim);
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(read_u32(f));
            numel *= shape[d];
        }
        std::vector<double> data(static_cast<size_t>(numel));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!f) throw std::runtime_error("truncated checkpoint: " + path);
        c.tensors.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    return c;
}

void pack_params(Checkpoint& c, const std::string& prefix, const ParamStore& params) {
    for (const auto& [path, t] : params)
        c.tensors.emplace(prefix + path, Tensor::from_data(t.shape(), t.data()));
}

void unpack_params(const Checkpoint& c, const std::string& prefix, ParamStore& params) {
    for (auto& [path, t] : params) {
        const auto it = c.tensors.find(prefix + path);
        if (it == c.tensors.end())
            throw std::runtime_error("checkpoint missing tensor: " + prefix + path);
        if (it->second.shape() != t.shape())
            throw std::runtime_error("checkpoint shape mismatch: " + prefix + path);
        t.mutable_data() = it->second.data();
    }
}

void pack_optimizer(Checkpoint& c, const std::string& prefix, const AdamW& opt) {
    for (const auto& [path, m] : opt.first_moments())
        c.tensors.emplace(prefix + "m." + path,
                          Tensor::from_data({static_cast<int>(m.size())}, m));
    for (const auto& [path, v] : opt.second_moments())
        c.tensors.emplace(prefix + "v." + path,
                          Tensor::from_data({static_cast<int>(v.size())}, v));
}

void unpack_optimizer(const Checkpoint& c, const std::string& prefix, AdamW& opt) {
    opt.first_moments().clear();
    opt.second_moments().clear();
    const std::string m_prefix = prefix + "m.";
    const std::string v_prefix = prefix + "v.";
    for (const auto& [name, t] : c.tensors) {
        if (name.rfind(m_prefix, 0) == 0)
            opt.first_moments()[name.substr(m_prefix.size())] = t.data();
        else if (name.rfind(v_prefix, 0) == 0)
            opt.second_moments()[name.substr(v_prefix.size())] = t.data();
    }
    opt.set_step_count(c.opt_step);
}

}  // namespace vapi
