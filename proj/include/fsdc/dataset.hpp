#pragma once

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fsdc {

// One stored entry of a sparse instance. `index` is 0-based in memory; the
// text format is 1-based.
struct Feature {
    std::uint32_t index;
    double value;

    friend bool operator==(const Feature&, const Feature&) = default;
};

using SparseVector = std::vector<Feature>;

// M features x N instances, stored column-per-instance (CSC layout), with
// labels in {-1, +1}. Immutable once built.
class Dataset {
public:
    Dataset() = default;

    // Validates every invariant and throws ValidationError on violation.
    static Dataset from_columns(std::size_t n_features, const std::vector<SparseVector>& columns,
                                std::vector<int> labels);

    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t n_instances() const noexcept { return labels_.size(); }
    std::size_t nnz() const noexcept { return entries_.size(); }

    std::span<const Feature> column(std::size_t k) const {
        return {entries_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
    }
    int label(std::size_t k) const { return labels_[k]; }
    const std::vector<int>& labels() const noexcept { return labels_; }

    // Same instances, feature dimension raised to `m` (never lowered).
    Dataset with_min_features(std::size_t m) const;
    // Instances at `rows`, in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
    // Instances and labels with the feature values scaled per feature.
    Dataset scaled(std::span<const double> feature_scale) const;

    Eigen::SparseMatrix<double> matrix() const;  // M x N, column-major

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t n_features_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<Feature> entries_;
    std::vector<int> labels_;
};

// LIBSVM / SVM-light sparse text. `min_features` raises M so that train and
// test files agree on dimension.
Dataset parse_libsvm(std::istream& in, std::size_t min_features = 0);
Dataset parse_libsvm(std::string_view text, std::size_t min_features = 0);
// Reads a file, transparently inflating it when the name ends in `.gz`.
Dataset load_libsvm(const std::filesystem::path& path, std::size_t min_features = 0);

void write_libsvm(std::ostream& out, const Dataset& ds);
std::string serialize_libsvm(const Dataset& ds);
void save_libsvm(const std::filesystem::path& path, const Dataset& ds);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

// Seeded shuffle partition; each side keeps file order. Sizes are
// (round(fraction * N), N - that).
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// Per-feature max-abs scaling fitted on one dataset and applied to others.
class MaxAbsScaler {
public:
    static MaxAbsScaler fit(const Dataset& ds);
    Dataset apply(const Dataset& ds) const;
    const std::vector<double>& scale() const noexcept { return scale_; }

private:
    std::vector<double> scale_;
};

}  // namespace fsdc
