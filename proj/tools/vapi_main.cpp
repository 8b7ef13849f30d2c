// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "vapi/pipeline.hpp"

namespace {

vapi::RunConfig resolve_config(const std::string& config_path, bool seed_set,
                               uint64_t seed, const std::string& out_dir) {
    vapi::RunConfig cfg;
    if (!config_path.empty()) cfg = vapi::load_config_file(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"class-conditional discrete-token image generation with "
                 "pixel-space policy alignment"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string stage;
    std::string method = "vapi";
    std::vector<std::string> run_dirs;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file (key = value)");
        sub->add_option("--seed", seed, "override the run seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out_dir, "override the output directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the dataset file");
    add_common(gen);

    CLI::App* train = app.add_subcommand("train", "run one training stage");
    add_common(train);
    train->add_option("--stage", stage, "tok-pretrain | ar-pretrain | posttrain")
        ->required();
    train->add_option("--method", method, "posttrain method: vapi | ste | tok-pt");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained stage");
    add_common(eval);
    eval->add_option("--stage", stage, "ar-pretrain | posttrain")->required();
    eval->add_option("--method", method, "posttrain method: vapi | ste | tok-pt");

    CLI::App* report = app.add_subcommand("report", "compare completed runs");
    report->add_option("dirs", run_dirs, "run directories")->required();
    report->add_option("--out", out_dir, "report output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            vapi::cmd_gen_data(resolve_config(config_path, seed_set, seed, out_dir));
        } else if (train->parsed()) {
            vapi::cmd_train(resolve_config(config_path, seed_set, seed, out_dir), stage,
                            method);
        } else if (eval->parsed()) {
            vapi::cmd_eval(resolve_config(config_path, seed_set, seed, out_dir), stage,
                           method);
        } else if (report->parsed()) {
            vapi::cmd_report(run_dirs, out_dir.empty() ? "." : out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
