#pragma once

#include "fsdc/dataset.hpp"
#include "fsdc/numerics.hpp"
#include "fsdc/serialize.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fsdc {

enum class Method { RD, PCA, DCA, BCD, ABD };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

// One subspace view: d x N, column per instance.
using SubspaceMatrix = Eigen::SparseMatrix<double>;

// Feature index groups (0-based). Groups may overlap; indices inside one
// group are unique and ascending.
struct IndexGroups {
    std::vector<std::vector<std::uint32_t>> groups;

    std::size_t count() const noexcept { return groups.size(); }
    // Throws ValidationError on an index >= dim or a duplicate within a group.
    void validate(std::size_t dim) const;
    bool disjoint() const;
};

// Random-subspace groups over `dim` coordinates: one seeded permutation is cut
// into consecutive runs of `group_size`; when n_subspaces * group_size > dim
// the stream continues with a fresh permutation, so groups overlap.
IndexGroups random_groups(std::size_t dim, std::size_t n_subspaces, std::size_t group_size,
                          std::uint64_t seed);

// Disjoint groups for the block methods: dim is padded to
// max(dim, n_subspaces * group_size) slots, the slots are shuffled and cut
// into n_subspaces runs of group_size, and padding slots are dropped.
// Features beyond n_subspaces * group_size slots are left out.
IndexGroups block_groups(std::size_t dim, std::size_t n_subspaces, std::size_t group_size,
                         std::uint64_t seed);

struct DecomposeOptions {
    std::size_t max_dense_features = 4096;  // guard for PCA / DCA / BCD
    bool center_pca = true;
    bool center_bcd = false;
    double dca_ridge = 0.0;  // <= 0 selects 1e-3 * trace(S_w) / M
    bool pad_abd = true;
};

// A fitted sub-method: X* = transform(select(X)), split by `groups` over the
// output coordinates.
//
// select(X) takes rows `slots` of X (kPadding is a zero row); an empty
// `slots` means all M rows in order. The transform is the identity (RD),
// the dense `transform` (PCA, DCA, BCD), or block_mix (x) I_block_size (ABD).
struct SubspaceDecomposition {
    static constexpr std::int64_t kPadding = -1;

    Method method = Method::RD;
    std::size_t input_dim = 0;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> slots;
    Matrix transform;
    Matrix block_mix;
    std::size_t block_size = 0;
    IndexGroups groups;

    // Diagnostics recorded at fit time.
    Vector spectrum;            // eigenvalues, descending (PCA, DCA, ABD)
    double block_residual = 0;  // off-diagonal block norm / ||S||_F after BCD; re-Gram for ABD
    double ridge = 0;           // DCA rho, or BCD pivot ridge if one was needed

    std::size_t selected_dim() const { return slots.empty() ? input_dim : slots.size(); }
    std::size_t output_dim() const;
    std::size_t subspace_count() const { return groups.count(); }

    // The full output_dim x input_dim matrix, including the row selection.
    // Only for small M.
    Matrix dense_transform() const;

    // Transformed coordinates of one instance (output_dim values).
    Vector transform_instance(std::span<const Feature> x) const;
};

SubspaceDecomposition make_rd(std::size_t n_features, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed);
SubspaceDecomposition fit_pca(const Dataset& x, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed, const DecomposeOptions& opt = {});
SubspaceDecomposition fit_dca(const Dataset& x, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed, const DecomposeOptions& opt = {});
SubspaceDecomposition fit_bcd(const Dataset& x, const IndexGroups& groups, const DecomposeOptions& opt = {});
SubspaceDecomposition fit_abd(const Dataset& x, const IndexGroups& groups, const DecomposeOptions& opt = {});

// Scatter matrices over the dataset, accumulated in fixed instance chunks.
SymMatrix feature_scatter(const Dataset& x, bool center);
SymMatrix within_class_scatter(const Dataset& x);
// Subspace Gram of equally sized blocks: G(i,j) = sum over row r and instance
// n of X(block_i[r], n) * X(block_j[r], n). kPadding rows are zero.
SymMatrix block_gram(const Dataset& x, const std::vector<std::vector<std::int64_t>>& blocks);

struct PlanEntry {
    Method method = Method::RD;
    std::size_t n_subspaces = 1;
    std::size_t group_size = 1;
};

class CompositeDecomposition {
public:
    CompositeDecomposition() = default;
    explicit CompositeDecomposition(std::vector<SubspaceDecomposition> parts, std::uint64_t seed = 0);

    const std::vector<SubspaceDecomposition>& parts() const noexcept { return parts_; }
    std::size_t h() const noexcept { return h_; }
    std::size_t input_dim() const noexcept { return parts_.front().input_dim; }
    std::uint64_t seed() const noexcept { return seed_; }

    // h subspace matrices: parts in order, groups in order within a part.
    std::vector<SubspaceMatrix> apply(const Dataset& x, unsigned threads = 1) const;

    Json to_json() const;
    static CompositeDecomposition from_json(const Json& j);
    void save(const std::filesystem::path& path) const;
    static CompositeDecomposition load(const std::filesystem::path& path);

private:
    std::vector<SubspaceDecomposition> parts_;
    std::size_t h_ = 0;
    std::uint64_t seed_ = 0;
};

// Throws on an empty part list or parts fitted on different M.
CompositeDecomposition compose(std::vector<SubspaceDecomposition> parts, std::uint64_t seed = 0);

// Fits one plan entry with its own seed.
SubspaceDecomposition fit_entry(const Dataset& x, const PlanEntry& entry, std::uint64_t seed,
                                const DecomposeOptions& opt = {});

// Fits every plan entry (concurrently across entries). Part k uses the seed
// mix_seed(seed, k).
CompositeDecomposition fit_plan(const Dataset& x, const std::vector<PlanEntry>& plan, std::uint64_t seed,
                                const DecomposeOptions& opt = {}, unsigned threads = 1);

}  // namespace fsdc
