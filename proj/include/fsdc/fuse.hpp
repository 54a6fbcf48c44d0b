#pragma once

#include "fsdc/classify.hpp"
#include "fsdc/dataset.hpp"
#include "fsdc/decompose.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsdc {

// h x N matrix of local scores; row i comes from local classifier i on
// subspace view i.
using LocalOutputMatrix = Matrix;

// Per-row affine map fitted on training R: zero mean, unit variance. Rows
// with zero variance are passed through untouched.
struct Standardizer {
    Vector shift;
    Vector scale;

    static Standardizer fit(const LocalOutputMatrix& r);
    LocalOutputMatrix apply(const LocalOutputMatrix& r) const;
};

struct DcConfig {
    std::vector<PlanEntry> plan;
    DecomposeOptions decompose;
    LearnerSpec local;
    LearnerSpec global{LearnerType::trbf, 0, 0, 2};
    std::size_t max_intrinsic_dim = 20000;
    // Build the fusion training R from out-of-fold local scores.
    bool cross_fit = false;
    std::size_t cross_fit_folds = 5;
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

struct DcModel {
    CompositeDecomposition decomposition;
    std::vector<Model> locals;
    Standardizer standardizer;
    Model global;
    DcConfig config;
    // Per-feature max-abs scaling applied to inputs before decomposition;
    // empty when scaling is off.
    std::vector<double> feature_scale;
};

// Wall-clock seconds per pipeline stage, in execution order.
struct StageTimings {
    std::vector<std::pair<std::string, double>> stages;

    void add(std::string name, double seconds) { stages.emplace_back(std::move(name), seconds); }
    double total() const;
};

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

LocalOutputMatrix build_r(const std::vector<Model>& locals, const std::vector<SubspaceMatrix>& views,
                          unsigned threads = 1);

DcModel train_dc(const Dataset& train, const DcConfig& config, StageTimings* timings = nullptr);

struct Prediction {
    std::vector<int> labels;  // sign(score), sign(0) = +1
    Vector scores;
};

Prediction predict_dc(const DcModel& model, const Dataset& test, StageTimings* timings = nullptr);
// Global-classifier step alone, for a precomputed R.
Prediction predict_from_r(const DcModel& model, const LocalOutputMatrix& r);

struct Metrics {
    double error_rate = 0;  // percent
    std::size_t n = 0;
    std::size_t true_pos = 0, true_neg = 0, false_pos = 0, false_neg = 0;
};

Metrics evaluate(std::span<const int> predicted, std::span<const int> truth);

Json config_to_json(const DcConfig& c);
DcConfig config_from_json(const Json& j);

// Versioned archive of decomposition, locals, standardizer, global model and
// configuration. Loading refuses any other version.
Json dc_model_to_json(const DcModel& m);
DcModel dc_model_from_json(const Json& j);
void save_dc_model(const std::filesystem::path& path, const DcModel& m);
DcModel load_dc_model(const std::filesystem::path& path);

inline constexpr int kModelFormatVersion = 1;

}  // namespace fsdc
