// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vapi/config.hpp"
#include "vapi/evalsuite.hpp"

namespace vapi {

inline constexpr const char* kStageTokPretrain = "tok-pretrain";
inline constexpr const char* kStageArPretrain = "ar-pretrain";
inline constexpr const char* kStagePosttrain = "posttrain";

// "tok-pretrain", "ar-pretrain", or "posttrain-<method>".
std::string stage_tag(const std::string& stage, const std::string& method);

void cmd_gen_data(const RunConfig& cfg);

// Runs one stage to its configured step budget. Resumes from the newest
// periodic checkpoint when the final one is absent; a config-hash mismatch
// on resume is an error.
void cmd_train(const RunConfig& cfg, const std::string& stage,
               const std::string& method);

struct EvalReport {
    std::string tag;
    double toy_fid = 0.0;
    double mean_tf_reward = 0.0;
    double mean_fr_reward = 0.0;
    double exposure_bias = 0.0;
    double mean_nll = 0.0;
    double psnr = 0.0;
    int codebook_usage = 0;
    double elbo_recon = 0.0;
    double elbo_kl = 0.0;
    double elbo = 0.0;
    bool elbo_has_exact = false;
    double elbo_exact = 0.0;
    double elbo_slack = 0.0;
};

// Evaluates the models of a completed stage against a held-out generated
// set; writes eval-<tag>.json in the run directory and returns the report.
EvalReport cmd_eval(const RunConfig& cfg, const std::string& stage,
                    const std::string& method);

EvalReport read_eval_report(const std::string& path);

// Aggregates eval reports plus stage wall-clock into an aligned text table
// and a CSV under out_dir.
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// Paths within a run directory.
std::string dataset_path(const RunConfig& cfg);
std::string final_checkpoint_path(const RunConfig& cfg, const std::string& tag);
std::string periodic_checkpoint_path(const RunConfig& cfg, const std::string& tag,
                                     uint64_t step);
std::string eval_report_path(const RunConfig& cfg, const std::string& tag);

}  // namespace vapi
