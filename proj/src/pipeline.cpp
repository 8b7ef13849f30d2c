// SPDX-License-Identifier: Apache-2.0
#include "vapi/pipeline.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "vapi/checkpoint.hpp"
#include "vapi/metrics.hpp"

namespace vapi {

namespace fs = std::filesystem;

namespace {

// stream ids for the per-step counter-based generators
enum StreamPurpose : uint64_t {
    kBatchSelect = 1,
    kRollout = 2,
    kTokPtSample = 3,
    kEvalGenerate = 4,
    kEvalTfReward = 5,
    kEvalExposure = 6,
    kEvalElbo = 7,
};

uint64_t stage_id(const std::string& tag) {
    uint64_t h = 0;
    for (char c : tag) h = hash_combine(h, static_cast<uint64_t>(c));
    return h;
}

SeededRng step_rng(const RunConfig& cfg, const std::string& tag, uint64_t purpose,
                   uint64_t step) {
    return SeededRng(cfg.seed,
                     SeededRng::stream_of({stage_id(tag), purpose, step}));
}

uint64_t tok_init_seed(const RunConfig& cfg) { return hash_combine(cfg.seed, 0x70AD); }
uint64_t ar_init_seed(const RunConfig& cfg) { return hash_combine(cfg.seed, 0xA7AD); }

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<const ImageSample*> pick_batch(const std::vector<ImageSample>& data,
                                           int batch_size, SeededRng& rng) {
    std::vector<const ImageSample*> out;
    out.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i)
        out.push_back(&data[rng.next_below(data.size())]);
    return out;
}

std::vector<ImageSample> load_dataset_or_fail(const RunConfig& cfg) {
    const std::string path = dataset_path(cfg);
    if (!fs::exists(path))
        throw std::runtime_error("missing prerequisite: dataset file " + path +
                                 " (run `vapi gen-data` first)");
    return read_vapd(path);
}

Checkpoint load_stage_or_fail(const RunConfig& cfg, const std::string& tag,
                              const std::string& hint_stage) {
    const std::string path = final_checkpoint_path(cfg, tag);
    if (!fs::exists(path))
        throw std::runtime_error("missing prerequisite: stage " + tag +
                                 " (run `vapi train --stage " + hint_stage + "` first)");
    return load_checkpoint(path);
}

// newest periodic checkpoint below the step budget, if any
std::string find_resume_checkpoint(const RunConfig& cfg, const std::string& tag,
                                   int total_steps, uint64_t* step_out) {
    std::string best;
    uint64_t best_step = 0;
    const fs::path dir(cfg.out_dir);
    if (!fs::exists(dir)) return {};
    const std::string prefix = tag + ".step";
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) != 0 || name.size() < prefix.size() + 5) continue;
        const uint64_t step = std::strtoull(name.c_str() + prefix.size(), nullptr, 10);
        if (step > best_step && step < static_cast<uint64_t>(total_steps)) {
            best_step = step;
            best = entry.path().string();
        }
    }
    *step_out = best_step;
    return best;
}

double mean_recon_mse(const Tokenizer& tok, const std::vector<ImageSample>& data,
                      size_t limit = 0) {
    NoGradGuard guard;
    const size_t n = limit > 0 ? std::min(limit, data.size()) : data.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Tensor recon = tok.decode(tok.tokenize(data[i].image));
        total += mse(recon, data[i].image).item();
    }
    return total / static_cast<double>(n);
}

struct StageIo {
    MetricsWriter metrics;
    MetricsWriter timing;
    StageIo(const RunConfig& cfg, const std::string& tag, bool append)
        : metrics(cfg.out_dir + "/metrics-" + tag + ".jsonl", append),
          timing(cfg.out_dir + "/timing-" + tag + ".jsonl", append) {}
};

void save_stage_checkpoint(const RunConfig& cfg, const std::string& tag,
                           uint64_t step, bool final,
                           const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                           const AdamW& opt) {
    Checkpoint ck;
    ck.stage = tag;
    ck.config_hash = cfg.hash();
    ck.step = step;
    ck.run_seed = cfg.seed;
    ck.opt_step = opt.step_count();
    for (const auto& [prefix, store] : stores) pack_params(ck, prefix, *store);
    pack_optimizer(ck, "opt.", opt);
    const std::string path = final ? final_checkpoint_path(cfg, tag)
                                   : periodic_checkpoint_path(cfg, tag, step);
    save_checkpoint(path, ck);
}

uint64_t try_resume(const RunConfig& cfg, const std::string& tag, int total_steps,
                    const std::vector<std::pair<std::string, ParamStore*>>& stores,
                    AdamW& opt) {
    uint64_t step = 0;
    const std::string path = find_resume_checkpoint(cfg, tag, total_steps, &step);
    if (path.empty()) return 0;
    const Checkpoint ck = load_checkpoint(path);
    if (ck.config_hash != cfg.hash())
        throw std::runtime_error("config hash mismatch on resume: " + path);
    for (const auto& [prefix, store] : stores) unpack_params(ck, prefix, *store);
    unpack_optimizer(ck, "opt.", opt);
    std::printf("[%s] resuming from step %llu (%s)\n", tag.c_str(),
                static_cast<unsigned long long>(ck.step), path.c_str());
    return ck.step;
}

void run_tok_pretrain(const RunConfig& cfg) {
    const auto data = load_dataset_or_fail(cfg);
    const std::string tag = kStageTokPretrain;
    FeatureBank bank;
    Tokenizer tok(cfg.tokenizer_config(), tok_init_seed(cfg));
    AdamW opt({.lr = cfg.tok_lr, .weight_decay = cfg.weight_decay});
    const uint64_t start =
        try_resume(cfg, tag, cfg.tok_steps, {{"tok.", &tok.params()}}, opt);
    StageIo io(cfg, tag, start > 0);
    const TokenizerLossWeights weights = cfg.tokenizer_loss_weights();

    for (uint64_t step = start + 1; step <= static_cast<uint64_t>(cfg.tok_steps); ++step) {
        const double t0 = now_ms();
        SeededRng rng = step_rng(cfg, tag, kBatchSelect, step);
        const auto batch = pick_batch(data, cfg.tok_batch, rng);
        const TokenizerStepMetrics m = train_tokenizer_step(tok, bank, batch, weights, opt);
        io.metrics.write(tag, step,
                         {{"loss", m.total},
                          {"mse", m.mse},
                          {"perceptual", m.perceptual},
                          {"quant", m.quant},
                          {"batch_codebook_usage", static_cast<double>(m.distinct_tokens)}});
        io.timing.write(tag, step, {{"wall_ms", now_ms() - t0}});
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 &&
            step < static_cast<uint64_t>(cfg.tok_steps))
            save_stage_checkpoint(cfg, tag, step, false, {{"tok.", &tok.params()}}, opt);
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 ||
            step == static_cast<uint64_t>(cfg.tok_steps))
            std::printf("[%s] step %llu/%d loss %.5f mse %.5f\n", tag.c_str(),
                        static_cast<unsigned long long>(step), cfg.tok_steps, m.total, m.mse);
    }
    const double train_psnr = recon_psnr(mean_recon_mse(tok, data));
    const int usage = codebook_usage(tok, data);
    io.metrics.write(tag + std::string("-final"), static_cast<uint64_t>(cfg.tok_steps),
                     {{"train_psnr", train_psnr}, {"codebook_usage", static_cast<double>(usage)}});
    std::printf("[%s] done: train PSNR %.2f dB, codebook usage %d/%d\n", tag.c_str(),
                train_psnr, usage, cfg.codebook_size);
    save_stage_checkpoint(cfg, tag, static_cast<uint64_t>(cfg.tok_steps), true,
                          {{"tok.", &tok.params()}}, opt);
}

void run_ar_pretrain(const RunConfig& cfg) {
    const auto data = load_dataset_or_fail(cfg);
    const std::string tag = kStageArPretrain;
    const Checkpoint tok_ck = load_stage_or_fail(cfg, kStageTokPretrain, kStageTokPretrain);
    Tokenizer tok(cfg.tokenizer_config(), tok_init_seed(cfg));
    unpack_params(tok_ck, "tok.", tok.params());

    // token targets are fixed by the frozen tokenizer; cache them once
    std::vector<TokenSeq> targets;
    targets.reserve(data.size());
    for (const ImageSample& s : data) targets.push_back(tok.tokenize(s.image));

    ArModel ar(cfg.ar_config(), ar_init_seed(cfg));
    AdamW opt({.lr = cfg.ar_lr, .weight_decay = cfg.weight_decay});
    const uint64_t start = try_resume(cfg, tag, cfg.ar_steps, {{"ar.", &ar.params()}}, opt);
    StageIo io(cfg, tag, start > 0);

    for (uint64_t step = start + 1; step <= static_cast<uint64_t>(cfg.ar_steps); ++step) {
        const double t0 = now_ms();
        SeededRng rng = step_rng(cfg, tag, kBatchSelect, step);
        Tensor acc;
        for (int b = 0; b < cfg.ar_batch; ++b) {
            const size_t idx = rng.next_below(data.size());
            Tensor l = ar.nll(data[idx].label, targets[idx]);
            acc = acc.defined() ? add(acc, l) : l;
        }
        Tensor loss = scale(acc, 1.0 / static_cast<double>(cfg.ar_batch));
        if (!std::isfinite(loss.item())) throw std::runtime_error("diverged");
        ar.params().zero_grad();
        loss.backward();
        const double gnorm = AdamW::clip_grad_norm(ar.params(), cfg.max_grad_norm);
        opt.step(ar.params());
        io.metrics.write(tag, step, {{"nll", loss.item()}, {"grad_norm", gnorm}});
        io.timing.write(tag, step, {{"wall_ms", now_ms() - t0}});
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 &&
            step < static_cast<uint64_t>(cfg.ar_steps))
            save_stage_checkpoint(cfg, tag, step, false, {{"ar.", &ar.params()}}, opt);
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 ||
            step == static_cast<uint64_t>(cfg.ar_steps))
            std::printf("[%s] step %llu/%d nll %.4f\n", tag.c_str(),
                        static_cast<unsigned long long>(step), cfg.ar_steps, loss.item());
    }
    save_stage_checkpoint(cfg, tag, static_cast<uint64_t>(cfg.ar_steps), true,
                          {{"ar.", &ar.params()}}, opt);
}

void run_posttrain(const RunConfig& cfg, const std::string& method) {
    const auto data = load_dataset_or_fail(cfg);
    const std::string tag = stage_tag(kStagePosttrain, method);
    const Checkpoint tok_ck = load_stage_or_fail(cfg, kStageTokPretrain, kStageTokPretrain);
    const Checkpoint ar_ck = load_stage_or_fail(cfg, kStageArPretrain, kStageArPretrain);

    FeatureBank bank;
    Tokenizer tok(cfg.tokenizer_config(), tok_init_seed(cfg));
    unpack_params(tok_ck, "tok.", tok.params());
    ArModel ar(cfg.ar_config(), ar_init_seed(cfg));
    unpack_params(ar_ck, "ar.", ar.params());

    AdamW opt({.lr = cfg.post_lr, .weight_decay = cfg.weight_decay});
    std::vector<std::pair<std::string, ParamStore*>> resume_stores = {
        {"tok.", &tok.params()}, {"ar.", &ar.params()}};
    std::vector<std::pair<std::string, const ParamStore*>> save_stores = {
        {"tok.", &tok.params()}, {"ar.", &ar.params()}};

    if (method == "vapi" || method == "ste") {
        tok.params().set_requires_grad(false);
    } else if (method == "tok-pt") {
        ar.params().set_requires_grad(false);
        tok.params().set_requires_grad(false);
        tok.params().set_requires_grad_prefix("decoder.", true);
    } else {
        throw std::runtime_error("unknown posttrain method: " + method);
    }

    const uint64_t start = try_resume(cfg, tag, cfg.post_steps, resume_stores, opt);
    StageIo io(cfg, tag, start > 0);
    const VapiConfig vapi_cfg = cfg.vapi_config();
    const SteConfig ste_cfg = cfg.ste_config();
    const TokPtConfig tokpt_cfg = cfg.tokpt_config();

    for (uint64_t step = start + 1; step <= static_cast<uint64_t>(cfg.post_steps); ++step) {
        const double t0 = now_ms();
        SeededRng batch_rng = step_rng(cfg, tag, kBatchSelect, step);
        const auto batch = pick_batch(data, cfg.post_batch, batch_rng);
        std::map<std::string, double> record;
        if (method == "vapi") {
            SeededRng rng = step_rng(cfg, tag, kRollout, step);
            const VapiStepMetrics m = vapi_step(ar, tok, bank, batch, vapi_cfg, opt, rng);
            record = {{"mean_reward", m.mean_reward},
                      {"mean_abs_advantage", m.mean_abs_advantage},
                      {"surrogate", m.surrogate},
                      {"prior", m.prior},
                      {"objective", m.objective},
                      {"clip_fraction", m.clip_fraction},
                      {"grad_norm", m.grad_norm}};
        } else if (method == "ste") {
            const SteStepMetrics m = ste_finetune_step(ar, tok, bank, batch, ste_cfg, opt);
            record = {{"loss", m.loss},
                      {"mse", m.mse},
                      {"perceptual", m.perceptual},
                      {"grad_norm", m.grad_norm}};
        } else {
            SeededRng rng = step_rng(cfg, tag, kTokPtSample, step);
            const TokPtStepMetrics m =
                tokenizer_posttrain_step(ar, tok, bank, batch, tokpt_cfg, opt, rng);
            record = {{"loss", m.loss}, {"mse", m.mse}, {"perceptual", m.perceptual}};
            if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0) {
                // ground-truth-token reconstruction may drift; logged only
                record["gt_psnr"] = recon_psnr(mean_recon_mse(tok, data, 64));
            }
        }
        io.metrics.write(tag, step, record);
        io.timing.write(tag, step, {{"wall_ms", now_ms() - t0}});
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 &&
            step < static_cast<uint64_t>(cfg.post_steps))
            save_stage_checkpoint(cfg, tag, step, false, save_stores, opt);
        if (step % static_cast<uint64_t>(cfg.ckpt_every) == 0 ||
            step == static_cast<uint64_t>(cfg.post_steps)) {
            const auto it = record.begin();
            std::printf("[%s] step %llu/%d %s %.5f\n", tag.c_str(),
                        static_cast<unsigned long long>(step), cfg.post_steps,
                        it->first.c_str(), it->second);
        }
    }
    save_stage_checkpoint(cfg, tag, static_cast<uint64_t>(cfg.post_steps), true,
                          save_stores, opt);
}

}  // namespace

std::string stage_tag(const std::string& stage, const std::string& method) {
    if (stage == kStagePosttrain) return stage + "-" + (method.empty() ? "vapi" : method);
    return stage;
}

std::string dataset_path(const RunConfig& cfg) { return cfg.out_dir + "/dataset.vapd"; }

std::string final_checkpoint_path(const RunConfig& cfg, const std::string& tag) {
    return cfg.out_dir + "/" + tag + ".ckpt";
}

std::string periodic_checkpoint_path(const RunConfig& cfg, const std::string& tag,
                                     uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ".step%06llu.ckpt",
                  static_cast<unsigned long long>(step));
    return cfg.out_dir + "/" + tag + buf;
}

std::string eval_report_path(const RunConfig& cfg, const std::string& tag) {
    return cfg.out_dir + "/eval-" + tag + ".json";
}

void cmd_gen_data(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const auto data = make_dataset(DatasetSpec{cfg.data_samples_per_class, cfg.data_base_seed});
    write_vapd(dataset_path(cfg), data);
    std::printf("[gen-data] wrote %zu samples to %s\n", data.size(),
                dataset_path(cfg).c_str());
}

void cmd_train(const RunConfig& cfg, const std::string& stage, const std::string& method) {
    fs::create_directories(cfg.out_dir);
    if (stage == kStageTokPretrain)
        run_tok_pretrain(cfg);
    else if (stage == kStageArPretrain)
        run_ar_pretrain(cfg);
    else if (stage == kStagePosttrain)
        run_posttrain(cfg, method.empty() ? "vapi" : method);
    else
        throw std::runtime_error("unknown stage: " + stage);
}

EvalReport cmd_eval(const RunConfig& cfg, const std::string& stage,
                    const std::string& method) {
    const std::string tag = stage_tag(stage, method);
    FeatureBank bank;
    Tokenizer tok(cfg.tokenizer_config(), tok_init_seed(cfg));
    ArModel ar(cfg.ar_config(), ar_init_seed(cfg));

    if (stage == kStageArPretrain) {
        const Checkpoint tok_ck = load_stage_or_fail(cfg, kStageTokPretrain, kStageTokPretrain);
        const Checkpoint ar_ck = load_stage_or_fail(cfg, kStageArPretrain, kStageArPretrain);
        unpack_params(tok_ck, "tok.", tok.params());
        unpack_params(ar_ck, "ar.", ar.params());
    } else if (stage == kStagePosttrain) {
        const Checkpoint ck = load_stage_or_fail(cfg, tag, "posttrain --method " +
                                                          (method.empty() ? "vapi" : method));
        unpack_params(ck, "tok.", tok.params());
        unpack_params(ck, "ar.", ar.params());
    } else {
        throw std::runtime_error("eval supports stages ar-pretrain and posttrain");
    }

    NoGradGuard guard;
    const auto eval_data =
        make_dataset(DatasetSpec{cfg.eval_samples_per_class, cfg.eval_base_seed});
    const std::string eval_tag = "eval-" + tag;

    EvalReport rep;
    rep.tag = tag;

    // reconstruction quality of the tokenizer in effect
    rep.psnr = recon_psnr(mean_recon_mse(tok, eval_data));
    rep.codebook_usage = codebook_usage(tok, eval_data);

    // teacher-forced NLL and reward on held-out images
    double nll_sum = 0.0;
    double tf_reward_sum = 0.0;
    int64_t tf_count = 0;
    for (size_t i = 0; i < eval_data.size(); ++i) {
        const ImageSample& s = eval_data[i];
        const TokenSeq x_star = tok.tokenize(s.image);
        nll_sum += ar.nll(s.label, x_star).item();
        const Tensor logits = ar.teacher_forced_dist(s.label, x_star);
        SeededRng rng(cfg.seed, SeededRng::stream_of({stage_id(eval_tag), kEvalTfReward,
                                                      static_cast<uint64_t>(i)}));
        for (int k = 0; k < cfg.tf_reward_samples; ++k) {
            const TokenSeq x = sample_from_rows(logits, 1.0, rng);
            tf_reward_sum += reward(tok.decode(x), s.image, cfg.reward_weights(), bank);
            ++tf_count;
        }
    }
    rep.mean_nll = nll_sum / static_cast<double>(eval_data.size());
    rep.mean_tf_reward = tf_reward_sum / static_cast<double>(tf_count);

    // free-running samples, class-major like the dataset
    std::vector<Tensor> real_images, gen_images;
    for (const ImageSample& s : eval_data) real_images.push_back(s.image);
    std::vector<std::vector<size_t>> class_slots(static_cast<size_t>(kNumClasses));
    for (size_t i = 0; i < eval_data.size(); ++i)
        class_slots[static_cast<size_t>(eval_data[i].label)].push_back(i);
    double fr_reward_sum = 0.0;
    int64_t fr_count = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < cfg.eval_gen_per_class; ++i) {
            SeededRng rng(cfg.seed,
                          SeededRng::stream_of({stage_id(eval_tag), kEvalGenerate,
                                                static_cast<uint64_t>(c),
                                                static_cast<uint64_t>(i)}));
            const TokenSeq x = ar.sample_free_running(c, cfg.eval_temperature, rng);
            const Tensor img = tok.decode(x);
            gen_images.push_back(img);
            const auto& slots = class_slots[static_cast<size_t>(c)];
            if (!slots.empty()) {
                const ImageSample& ref = eval_data[slots[static_cast<size_t>(i) % slots.size()]];
                fr_reward_sum += reward(img, ref.image, cfg.reward_weights(), bank);
                ++fr_count;
            }
        }
    }
    rep.mean_fr_reward = fr_reward_sum / static_cast<double>(fr_count);
    rep.toy_fid = toy_fid(real_images, gen_images, bank);

    {
        SeededRng rng(cfg.seed, SeededRng::stream_of({stage_id(eval_tag), kEvalExposure}));
        rep.exposure_bias = exposure_bias_estimate(ar, tok, eval_data, cfg.exposure_mc, rng,
                                                   cfg.exposure_images);
    }

    {
        const bool with_exact =
            enumerable(cfg.codebook_size, cfg.tokenizer_config().seq_len());
        const int n_img = std::min<int>(cfg.elbo_images, static_cast<int>(eval_data.size()));
        double recon = 0.0, kl = 0.0, exact = 0.0, slack = 0.0;
        for (int i = 0; i < n_img; ++i) {
            SeededRng rng(cfg.seed, SeededRng::stream_of({stage_id(eval_tag), kEvalElbo,
                                                          static_cast<uint64_t>(i)}));
            const ElboReport er =
                elbo_estimate(ar, tok, eval_data[static_cast<size_t>(i)], cfg.sigma,
                              cfg.elbo_mc, rng, with_exact);
            recon += er.recon;
            kl += er.kl;
            if (with_exact) {
                exact += er.exact_log_marginal;
                slack += er.slack;
            }
        }
        rep.elbo_recon = recon / n_img;
        rep.elbo_kl = kl / n_img;
        rep.elbo = rep.elbo_recon - rep.elbo_kl;
        rep.elbo_has_exact = with_exact;
        if (with_exact) {
            rep.elbo_exact = exact / n_img;
            rep.elbo_slack = slack / n_img;
        }
    }

    nlohmann::json j;
    j["tag"] = rep.tag;
    j["config_hash"] = cfg.hash();
    j["toy_fid"] = rep.toy_fid;
    j["mean_tf_reward"] = rep.mean_tf_reward;
    j["mean_fr_reward"] = rep.mean_fr_reward;
    j["exposure_bias"] = rep.exposure_bias;
    j["mean_nll"] = rep.mean_nll;
    j["psnr"] = rep.psnr;
    j["codebook_usage"] = rep.codebook_usage;
    j["elbo_recon"] = rep.elbo_recon;
    j["elbo_kl"] = rep.elbo_kl;
    j["elbo"] = rep.elbo;
    j["elbo_has_exact"] = rep.elbo_has_exact;
    if (rep.elbo_has_exact) {
        j["elbo_exact_log_marginal"] = rep.elbo_exact;
        j["elbo_slack"] = rep.elbo_slack;
    }
    std::ofstream out(eval_report_path(cfg, tag));
    if (!out) throw std::runtime_error("cannot write eval report");
    out << j.dump(2) << "\n";
    std::printf("[eval] %s: toy_fid %.4f tf_reward %.5f exposure %.5f psnr %.2f\n",
                tag.c_str(), rep.toy_fid, rep.mean_tf_reward, rep.exposure_bias, rep.psnr);
    return rep;
}

EvalReport read_eval_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open eval report: " + path);
    nlohmann::json j;
    f >> j;
    EvalReport rep;
    rep.tag = j.at("tag").get<std::string>();
    rep.toy_fid = j.at("toy_fid").get<double>();
    rep.mean_tf_reward = j.at("mean_tf_reward").get<double>();
    rep.mean_fr_reward = j.at("mean_fr_reward").get<double>();
    rep.exposure_bias = j.at("exposure_bias").get<double>();
    rep.mean_nll = j.at("mean_nll").get<double>();
    rep.psnr = j.at("psnr").get<double>();
    rep.codebook_usage = j.at("codebook_usage").get<int>();
    rep.elbo_recon = j.at("elbo_recon").get<double>();
    rep.elbo_kl = j.at("elbo_kl").get<double>();
    rep.elbo = j.at("elbo").get<double>();
    rep.elbo_has_exact = j.at("elbo_has_exact").get<bool>();
    if (rep.elbo_has_exact) {
        rep.elbo_exact = j.at("elbo_exact_log_marginal").get<double>();
        rep.elbo_slack = j.at("elbo_slack").get<double>();
    }
    return rep;
}

}  // namespace vapi
