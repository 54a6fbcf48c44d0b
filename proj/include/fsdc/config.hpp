#pragma once

#include "fsdc/dataset.hpp"
#include "fsdc/fuse.hpp"
#include "fsdc/serialize.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fsdc {

// Run configuration, read from a JSON file whose keys match these fields.
// Unknown keys are errors.
//
//   {
//     "train_path": "data/toy.svm",
//     "test_path": null,                       // omit to split train_path
//     "split": {"train_fraction": 0.8, "seed": 7},
//     "scaling": false,
//     "min_features": 0,
//     "decomposition": [{"method": "RD", "n_subspaces": 2, "group_size": 4}],
//     "local":  {"type": "linear", "lambda": 0, "sigma": 0, "order": 2},
//     "global": {"type": "trbf",   "lambda": 0, "sigma": 0, "order": 2},
//     "baseline": {"type": "linear", "lambda": 0, "sigma": 0, "order": 2},
//     "guards": {"max_dense_features": 4096, "max_intrinsic_dim": 20000},
//     "output": {"dir": "out", "model": "model.json", "report": "report.json"},
//     "threads": 0,                            // 0 = all cores
//     "seed": 1,
//     "cross_fit": false, "cross_fit_folds": 5,
//     "center_pca": true, "center_bcd": false, "dca_ridge": 0, "pad_abd": true
//   }
struct OutputPaths {
    std::filesystem::path dir = "out";
    std::string model = "model.json";
    std::string report = "report.json";

    std::filesystem::path model_path() const { return dir / model; }
    std::filesystem::path report_path() const { return dir / report; }
};

struct RunConfig {
    std::filesystem::path train_path;
    std::optional<std::filesystem::path> test_path;
    SplitSpec split{0.8, 1};
    bool scaling = false;
    std::size_t min_features = 0;
    DcConfig dc;
    LearnerSpec baseline;
    OutputPaths output;
};

// Collects every problem before throwing a single ConfigError listing all
// of them, one per line.
RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
Json run_config_to_json(const RunConfig& c);

}  // namespace fsdc
