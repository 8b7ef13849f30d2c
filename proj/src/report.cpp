// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vapi/metrics.hpp"
#include "vapi/pipeline.hpp"

namespace vapi {

namespace fs = std::filesystem;

namespace {

struct Row {
    std::string run;
    std::string tag;
    double toy_fid = 0.0;
    double tf_reward = 0.0;
    double fr_reward = 0.0;
    double exposure = 0.0;
    double psnr = 0.0;
    double wall_min = 0.0;
};

double stage_wall_minutes(const std::string& run_dir, const std::string& tag) {
    const std::string path = run_dir + "/timing-" + tag + ".jsonl";
    if (!fs::exists(path)) return 0.0;
    double total_ms = 0.0;
    for (const MetricRecord& r : read_metrics(path)) {
        const auto it = r.values.find("wall_ms");
        if (it != r.values.end()) total_ms += it->second;
    }
    return total_ms / 60000.0;
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

}  // namespace

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw std::runtime_error("report needs at least one run directory");
    std::vector<Row> rows;
    for (const std::string& dir : run_dirs) {
        if (!fs::exists(dir)) throw std::runtime_error("no such run directory: " + dir);
        std::vector<std::string> report_files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("eval-", 0) == 0 && name.size() > 10 &&
                name.substr(name.size() - 5) == ".json")
                report_files.push_back(entry.path().string());
        }
        std::sort(report_files.begin(), report_files.end());
        for (const std::string& path : report_files) {
            const EvalReport rep = read_eval_report(path);
            Row row;
            row.run = dir;
            row.tag = rep.tag;
            row.toy_fid = rep.toy_fid;
            row.tf_reward = rep.mean_tf_reward;
            row.fr_reward = rep.mean_fr_reward;
            row.exposure = rep.exposure_bias;
            row.psnr = rep.psnr;
            row.wall_min = stage_wall_minutes(dir, rep.tag);
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty())
        throw std::runtime_error("no eval reports found; run `vapi eval` first");

    const std::vector<std::string> headers = {"run",      "tag",       "toy_fid",
                                              "tf_reward", "fr_reward", "exposure_bias",
                                              "psnr",     "wall_min"};
    std::vector<std::vector<std::string>> cells;
    for (const Row& r : rows)
        cells.push_back({r.run, r.tag, fmt(r.toy_fid), fmt(r.tf_reward, 5),
                         fmt(r.fr_reward, 5), fmt(r.exposure, 5), fmt(r.psnr, 2),
                         fmt(r.wall_min, 2)});

    std::vector<size_t> widths(headers.size());
    for (size_t c = 0; c < headers.size(); ++c) {
        widths[c] = headers[c].size();
        for (const auto& row : cells) widths[c] = std::max(widths[c], row[c].size());
    }
    std::ostringstream table;
    for (size_t c = 0; c < headers.size(); ++c)
        table << (c ? "  " : "") << headers[c]
              << std::string(widths[c] - headers[c].size(), ' ');
    table << "\n";
    for (const auto& row : cells) {
        for (size_t c = 0; c < headers.size(); ++c)
            table << (c ? "  " : "") << row[c] << std::string(widths[c] - row[c].size(), ' ');
        table << "\n";
    }
    std::fputs(table.str().c_str(), stdout);

    fs::create_directories(out_dir);
    {
        std::ofstream txt(out_dir + "/comparison.txt");
        txt << table.str();
    }
    {
        std::ofstream csv(out_dir + "/comparison.csv");
        for (size_t c = 0; c < headers.size(); ++c) csv << (c ? "," : "") << headers[c];
        csv << "\n";
        for (const auto& row : cells) {
            for (size_t c = 0; c < row.size(); ++c) csv << (c ? "," : "") << row[c];
            csv << "\n";
        }
    }
    std::printf("[report] wrote %s/comparison.{txt,csv}\n", out_dir.c_str());
}

}  // namespace vapi
