// SPDX-License-Identifier: Apache-2.0
#include "vapi/config.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vapi {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

int64_t parse_int(const std::string& v) {
    size_t pos = 0;
    const int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::runtime_error("malformed integer: " + v);
    return out;
}

uint64_t parse_u64(const std::string& v) {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::runtime_error("malformed integer: " + v);
    return out;
}

double parse_double(const std::string& v) {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::runtime_error("malformed number: " + v);
    return out;
}

const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> s = [] {
        std::map<std::string, Field> m;
        auto add_int = [&m](const std::string& key, int RunConfig::*member) {
            m[key] = Field{
                [member](RunConfig& c, const std::string& v) {
                    c.*member = static_cast<int>(parse_int(v));
                },
                [member](const RunConfig& c) { return std::to_string(c.*member); }};
        };
        auto add_u64 = [&m](const std::string& key, uint64_t RunConfig::*member) {
            m[key] = Field{
                [member](RunConfig& c, const std::string& v) { c.*member = parse_u64(v); },
                [member](const RunConfig& c) { return std::to_string(c.*member); }};
        };
        auto add_double = [&m](const std::string& key, double RunConfig::*member) {
            m[key] = Field{
                [member](RunConfig& c, const std::string& v) { c.*member = parse_double(v); },
                [member](const RunConfig& c) { return fmt_double(c.*member); }};
        };
        auto add_string = [&m](const std::string& key, std::string RunConfig::*member) {
            m[key] = Field{
                [member](RunConfig& c, const std::string& v) { c.*member = v; },
                [member](const RunConfig& c) { return c.*member; }};
        };

        add_u64("seed", &RunConfig::seed);
        add_string("out", &RunConfig::out_dir);
        add_int("data.samples_per_class", &RunConfig::data_samples_per_class);
        add_u64("data.base_seed", &RunConfig::data_base_seed);
        add_int("eval.samples_per_class", &RunConfig::eval_samples_per_class);
        add_u64("eval.base_seed", &RunConfig::eval_base_seed);
        add_int("model.patch", &RunConfig::patch);
        add_int("model.codebook_size", &RunConfig::codebook_size);
        add_int("model.latent_dim", &RunConfig::latent_dim);
        add_int("model.enc_hidden", &RunConfig::enc_hidden);
        add_int("model.ar_dim", &RunConfig::ar_dim);
        add_int("model.ar_heads", &RunConfig::ar_heads);
        add_int("model.ar_layers", &RunConfig::ar_layers);
        add_int("tok.steps", &RunConfig::tok_steps);
        add_int("tok.batch", &RunConfig::tok_batch);
        add_double("tok.lr", &RunConfig::tok_lr);
        add_double("tok.lambda_p", &RunConfig::lambda_p);
        add_double("tok.lambda_q", &RunConfig::lambda_q);
        add_double("tok.beta_commit", &RunConfig::beta_commit);
        add_int("ar.steps", &RunConfig::ar_steps);
        add_int("ar.batch", &RunConfig::ar_batch);
        add_double("ar.lr", &RunConfig::ar_lr);
        add_int("post.steps", &RunConfig::post_steps);
        add_int("post.batch", &RunConfig::post_batch);
        add_double("post.lr", &RunConfig::post_lr);
        add_int("post.group_size", &RunConfig::group_size);
        add_double("post.beta", &RunConfig::beta);
        add_double("post.clip_epsilon", &RunConfig::clip_epsilon);
        add_double("post.xi", &RunConfig::xi);
        add_double("post.max_advantage_clip", &RunConfig::max_advantage_clip);
        add_double("post.max_grad_norm", &RunConfig::max_grad_norm);
        add_int("post.inner_epochs", &RunConfig::inner_epochs);
        add_string("post.ratio_granularity", &RunConfig::ratio_granularity);
        add_double("post.ste_tau", &RunConfig::ste_tau);
        add_double("train.weight_decay", &RunConfig::weight_decay);
        add_int("train.ckpt_every", &RunConfig::ckpt_every);
        add_double("eval.sigma", &RunConfig::sigma);
        add_int("eval.elbo_mc", &RunConfig::elbo_mc);
        add_int("eval.elbo_images", &RunConfig::elbo_images);
        add_int("eval.exposure_mc", &RunConfig::exposure_mc);
        add_int("eval.exposure_images", &RunConfig::exposure_images);
        add_int("eval.gen_per_class", &RunConfig::eval_gen_per_class);
        add_double("eval.temperature", &RunConfig::eval_temperature);
        add_int("eval.tf_reward_samples", &RunConfig::tf_reward_samples);
        return m;
    }();
    return s;
}

}  // namespace

TokenizerConfig RunConfig::tokenizer_config() const {
    TokenizerConfig cfg;
    cfg.image_size = kImageSize;
    cfg.patch = patch;
    cfg.codebook_size = codebook_size;
    cfg.latent_dim = latent_dim;
    cfg.hidden = enc_hidden;
    return cfg;
}

ArConfig RunConfig::ar_config() const {
    ArConfig cfg;
    cfg.vocab = codebook_size;
    cfg.num_classes = kNumClasses;
    cfg.seq_len = tokenizer_config().seq_len();
    cfg.dim = ar_dim;
    cfg.heads = ar_heads;
    cfg.layers = ar_layers;
    return cfg;
}

VapiConfig RunConfig::vapi_config() const {
    VapiConfig cfg;
    cfg.group_size = group_size;
    cfg.beta = beta;
    cfg.clip_epsilon = clip_epsilon;
    cfg.xi = xi;
    cfg.max_advantage_clip = max_advantage_clip;
    cfg.max_grad_norm = max_grad_norm;
    cfg.inner_epochs = inner_epochs;
    cfg.reward_weights = reward_weights();
    cfg.ratio_granularity = ratio_granularity == "sequence"
                                ? VapiConfig::RatioGranularity::kSequence
                                : VapiConfig::RatioGranularity::kToken;
    return cfg;
}

SteConfig RunConfig::ste_config() const {
    SteConfig cfg;
    cfg.tau = ste_tau;
    cfg.max_grad_norm = max_grad_norm;
    cfg.reward_weights = reward_weights();
    return cfg;
}

TokPtConfig RunConfig::tokpt_config() const {
    TokPtConfig cfg;
    cfg.max_grad_norm = max_grad_norm;
    cfg.reward_weights = reward_weights();
    return cfg;
}

TokenizerLossWeights RunConfig::tokenizer_loss_weights() const {
    return TokenizerLossWeights{lambda_p, lambda_q, beta_commit};
}

std::string RunConfig::canonical() const {
    std::ostringstream out;
    for (const auto& [key, field] : schema()) out << key << " = " << field.get(*this) << "\n";
    return out.str();
}

uint64_t RunConfig::hash() const {
    const std::string text = canonical();
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a 64
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
    if (data_samples_per_class < 1) fail("data.samples_per_class must be >= 1");
    if (eval_samples_per_class < 1) fail("eval.samples_per_class must be >= 1");
    if (patch < 1 || kImageSize % patch != 0) fail("model.patch must divide 16");
    if (codebook_size < 1) fail("model.codebook_size must be >= 1");
    if (latent_dim < 1 || enc_hidden < 1) fail("latent/hidden dims must be >= 1");
    if (ar_dim < 1 || ar_layers < 1 || ar_heads < 1 || ar_dim % ar_heads != 0)
        fail("model.ar_dim must divide by model.ar_heads");
    if (tok_steps < 0 || ar_steps < 0 || post_steps < 0) fail("steps must be >= 0");
    if (tok_batch < 1 || ar_batch < 1 || post_batch < 1) fail("batch sizes must be >= 1");
    if (group_size < 2) fail("post.group_size must be >= 2");
    if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0) fail("post.clip_epsilon must lie in (0,1)");
    if (beta < 0.0) fail("post.beta must be >= 0");
    if (xi < 0.0 || xi > 1.0) fail("post.xi must lie in [0,1]");
    if (inner_epochs < 1) fail("post.inner_epochs must be >= 1");
    if (ratio_granularity != "token" && ratio_granularity != "sequence")
        fail("post.ratio_granularity must be token or sequence");
    if (sigma <= 0.0) fail("eval.sigma must be positive");
    if (ckpt_every < 1) fail("train.ckpt_every must be >= 1");
    if (elbo_mc < 1 || exposure_mc < 1) fail("Monte Carlo counts must be >= 1");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = schema().find(key);
        if (it == schema().end())
            throw std::runtime_error("config: unknown key '" + key + "'");
        it->second.set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace vapi
