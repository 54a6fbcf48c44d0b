#pragma once

#include "fsdc/config.hpp"
#include "fsdc/fuse.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fsdc {

struct RunReport {
    std::string command;
    std::optional<Metrics> metrics;
    StageTimings timings;
    double wall_seconds = 0;
    Json config;  // echo, enough to rerun
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<std::pair<std::string, std::string>> hashes;  // artifact -> sha256
    Json details = Json::object();                             // bench / inspect extras
};

Json report_to_json(const RunReport& r);
// Fixed-width table in Time (s) / Error Rate (%) layout.
std::string report_table(const RunReport& r);
void write_report(const RunReport& r, const std::filesystem::path& json_path);

// "%.2f" of an error rate.
std::string format_percent(double v);
std::string sha256_file(const std::filesystem::path& path);

// Trains, persists the model under config.output, evaluates on the test file
// (or the held-out split) and writes the report next to the model.
RunReport cmd_train(const RunConfig& config);
RunReport cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& test_path,
                   std::optional<unsigned> threads = std::nullopt);
// DC pipeline against a single undecomposed learner on the same split.
RunReport cmd_bench(const RunConfig& config);
// Decomposition diagnostics of a saved model.
RunReport cmd_inspect(const std::filesystem::path& model_path);

// Relative error reduction in percent, 100 * (base - dc) / base. Zero when
// both are zero; nullopt when only the baseline is zero.
std::optional<double> relative_reduction(double base_error, double dc_error);

}  // namespace fsdc
