// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace vapi {

// Line-delimited records: one JSON object per line, keys sorted, doubles in
// shortest round-trip form. Records from identical runs compare byte-equal.
class MetricsWriter {
public:
    MetricsWriter(const std::string& path, bool append);
    void write(const std::string& stage, uint64_t step,
               const std::map<std::string, double>& values);

private:
    std::ofstream file_;
};

struct MetricRecord {
    std::string stage;
    uint64_t step = 0;
    std::map<std::string, double> values;
};

std::vector<MetricRecord> read_metrics(const std::string& path);

}  // namespace vapi
