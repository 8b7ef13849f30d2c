// SPDX-License-Identifier: Apache-2.0
#include "vapi/metrics.hpp"

#include <json.hpp>
#include <stdexcept>
#include <vector>

namespace vapi {

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : file_(path, append ? std::ios::app : std::ios::trunc) {
    if (!file_) throw std::runtime_error("cannot open metrics file: " + path);
}

void MetricsWriter::write(const std::string& stage, uint64_t step,
                          const std::map<std::string, double>& values) {
    nlohmann::json rec;
    rec["stage"] = stage;
    rec["step"] = step;
    rec["metrics"] = values;
    file_ << rec.dump() << "\n";
    file_.flush();
}

std::vector<MetricRecord> read_metrics(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open metrics file: " + path);
    std::vector<MetricRecord> out;
    std::string line;
    uint64_t last_step = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const nlohmann::json rec = nlohmann::json::parse(line);
        MetricRecord r;
        r.stage = rec.at("stage").get<std::string>();
        r.step = rec.at("step").get<uint64_t>();
        for (const auto& [k, v] : rec.at("metrics").items())
            r.values[k] = v.get<double>();
        if (!out.empty() && r.step < last_step)
            throw std::runtime_error("metric steps out of order in " + path);
        last_step = r.step;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace vapi
