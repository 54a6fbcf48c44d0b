#include "fsdc/decompose.hpp"

#include "fsdc/error.hpp"
#include "fsdc/parallel.hpp"
#include "fsdc/random.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fsdc {

namespace {

constexpr int kFormatVersion = 1;
constexpr std::size_t kChunk = 512;

// Dense copy of instances [begin, end) restricted to M rows.
Matrix dense_chunk(const Dataset& x, std::size_t begin, std::size_t end) {
    Matrix c = Matrix::Zero(static_cast<Eigen::Index>(x.n_features()), static_cast<Eigen::Index>(end - begin));
    for (std::size_t k = begin; k < end; ++k)
        for (const auto& f : x.column(k)) c(f.index, static_cast<Eigen::Index>(k - begin)) = f.value;
    return c;
}

Vector feature_mean(const Dataset& x) {
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(x.n_features()));
    for (std::size_t k = 0; k < x.n_instances(); ++k)
        for (const auto& f : x.column(k)) mu(f.index) += f.value;
    return mu / static_cast<double>(x.n_instances());
}

double off_block_norm(const Matrix& s, const std::vector<std::size_t>& starts) {
    double sum = 0;
    for (std::size_t bi = 0; bi + 1 < starts.size(); ++bi)
        for (std::size_t bj = 0; bj + 1 < starts.size(); ++bj) {
            if (bi == bj) continue;
            auto blk = s.block(static_cast<Eigen::Index>(starts[bi]), static_cast<Eigen::Index>(starts[bj]),
                               static_cast<Eigen::Index>(starts[bi + 1] - starts[bi]),
                               static_cast<Eigen::Index>(starts[bj + 1] - starts[bj]));
            sum += blk.squaredNorm();
        }
    return std::sqrt(sum);
}

// Dataset restricted to rows `slots` (renumbered 0..slots.size()-1).
Dataset select_rows(const Dataset& x, const std::vector<std::int64_t>& slots) {
    std::vector<std::int64_t> where(x.n_features(), -1);
    for (std::size_t r = 0; r < slots.size(); ++r)
        if (slots[r] >= 0) where[static_cast<std::size_t>(slots[r])] = static_cast<std::int64_t>(r);
    std::vector<SparseVector> cols(x.n_instances());
    for (std::size_t k = 0; k < x.n_instances(); ++k) {
        for (const auto& f : x.column(k))
            if (where[f.index] >= 0) cols[k].push_back({static_cast<std::uint32_t>(where[f.index]), f.value});
        std::sort(cols[k].begin(), cols[k].end(), [](const Feature& a, const Feature& b) { return a.index < b.index; });
    }
    return Dataset::from_columns(std::max<std::size_t>(slots.size(), 1), cols, x.labels());
}

void check_dense_guard(std::size_t m, const DecomposeOptions& opt, Method method) {
    if (m > opt.max_dense_features)
        throw ConfigError(std::string(method_name(method)) + " needs dense " + std::to_string(m) + "x" +
                          std::to_string(m) + " matrices, above max_dense_features=" +
                          std::to_string(opt.max_dense_features) + "; use RD or ABD for this dataset");
}

void check_group_args(std::size_t dim, std::size_t n_subspaces, std::size_t group_size) {
    if (n_subspaces == 0) throw ConfigError("number of subspaces must be at least 1");
    if (group_size == 0) throw ConfigError("group size must be at least 1");
    if (group_size > dim)
        throw ConfigError("group size " + std::to_string(group_size) + " exceeds feature dimension " +
                          std::to_string(dim));
}

std::vector<std::uint32_t> iota_group(std::size_t begin, std::size_t size) {
    std::vector<std::uint32_t> g(size);
    std::iota(g.begin(), g.end(), static_cast<std::uint32_t>(begin));
    return g;
}

}  // namespace

std::string_view method_name(Method m) {
    switch (m) {
        case Method::RD: return "RD";
        case Method::PCA: return "PCA";
        case Method::DCA: return "DCA";
        case Method::BCD: return "BCD";
        case Method::ABD: return "ABD";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::RD, Method::PCA, Method::DCA, Method::BCD, Method::ABD})
        if (method_name(m) == name) return m;
    throw ConfigError("unknown decomposition method '" + std::string(name) + "'");
}

void IndexGroups::validate(std::size_t dim) const {
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& grp = groups[g];
        for (std::size_t i = 0; i < grp.size(); ++i) {
            if (grp[i] >= dim)
                throw ValidationError("group " + std::to_string(g) + ": index " + std::to_string(grp[i]) +
                                      " outside dimension " + std::to_string(dim));
            if (i > 0 && grp[i] <= grp[i - 1])
                throw ValidationError("group " + std::to_string(g) + ": indices must be unique and ascending");
        }
    }
}

bool IndexGroups::disjoint() const {
    std::vector<std::uint32_t> all;
    for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
    std::sort(all.begin(), all.end());
    return std::adjacent_find(all.begin(), all.end()) == all.end();
}

IndexGroups random_groups(std::size_t dim, std::size_t n_subspaces, std::size_t group_size, std::uint64_t seed) {
    check_group_args(dim, n_subspaces, group_size);
    Rng rng(seed);
    auto perm = seeded_permutation(dim, rng);
    std::size_t pos = 0;
    std::vector<std::size_t> stamp(dim, 0);
    IndexGroups out;
    out.groups.resize(n_subspaces);
    for (std::size_t g = 0; g < n_subspaces; ++g) {
        auto& grp = out.groups[g];
        grp.reserve(group_size);
        while (grp.size() < group_size) {
            if (pos == dim) {
                perm = seeded_permutation(dim, rng);
                pos = 0;
            }
            std::size_t f = perm[pos++];
            if (stamp[f] == g + 1) continue;
            stamp[f] = g + 1;
            grp.push_back(static_cast<std::uint32_t>(f));
        }
        std::sort(grp.begin(), grp.end());
    }
    return out;
}

IndexGroups block_groups(std::size_t dim, std::size_t n_subspaces, std::size_t group_size, std::uint64_t seed) {
    if (n_subspaces == 0) throw ConfigError("number of subspaces must be at least 1");
    if (group_size == 0) throw ConfigError("group size must be at least 1");
    const std::size_t slots = std::max(dim, n_subspaces * group_size);
    Rng rng(seed);
    auto perm = seeded_permutation(slots, rng);
    IndexGroups out;
    out.groups.resize(n_subspaces);
    for (std::size_t g = 0; g < n_subspaces; ++g) {
        for (std::size_t i = g * group_size; i < (g + 1) * group_size; ++i)
            if (perm[i] < dim) out.groups[g].push_back(static_cast<std::uint32_t>(perm[i]));
        std::sort(out.groups[g].begin(), out.groups[g].end());
    }
    return out;
}

std::size_t SubspaceDecomposition::output_dim() const {
    switch (method) {
        case Method::RD: return input_dim;
        case Method::ABD: return static_cast<std::size_t>(block_mix.rows()) * block_size;
        default: return static_cast<std::size_t>(transform.rows());
    }
}

Matrix SubspaceDecomposition::dense_transform() const {
    const auto m = static_cast<Eigen::Index>(input_dim);
    if (method == Method::RD) return Matrix::Identity(m, m);
    Matrix sel = Matrix::Zero(static_cast<Eigen::Index>(selected_dim()), m);
    if (slots.empty())
        sel.setIdentity();
    else
        for (std::size_t r = 0; r < slots.size(); ++r)
            if (slots[r] >= 0) sel(static_cast<Eigen::Index>(r), slots[r]) = 1.0;
    if (method == Method::ABD) {
        const auto b = static_cast<Eigen::Index>(block_size);
        Matrix kron = Matrix::Zero(block_mix.rows() * b, block_mix.cols() * b);
        for (Eigen::Index i = 0; i < block_mix.rows(); ++i)
            for (Eigen::Index j = 0; j < block_mix.cols(); ++j)
                kron.block(i * b, j * b, b, b).diagonal().setConstant(block_mix(i, j));
        return kron * sel;
    }
    return transform * sel;
}

Vector SubspaceDecomposition::transform_instance(std::span<const Feature> x) const {
    Vector sel = Vector::Zero(static_cast<Eigen::Index>(selected_dim()));
    if (slots.empty()) {
        for (const auto& f : x) sel(f.index) = f.value;
    } else {
        std::vector<std::int64_t> where(input_dim, -1);
        for (std::size_t r = 0; r < slots.size(); ++r)
            if (slots[r] >= 0) where[static_cast<std::size_t>(slots[r])] = static_cast<std::int64_t>(r);
        for (const auto& f : x)
            if (where[f.index] >= 0) sel(where[f.index]) = f.value;
    }
    switch (method) {
        case Method::RD: return sel;
        case Method::ABD: {
            const auto b = static_cast<Eigen::Index>(block_size);
            const Eigen::Index m = block_mix.rows();
            Eigen::Map<const Matrix> blocks(sel.data(), b, m);  // column j = block j
            Matrix out = blocks * block_mix.transpose();        // column i = output block i
            return Eigen::Map<const Vector>(out.data(), b * m);
        }
        default: return transform * sel;
    }
}

SubspaceDecomposition make_rd(std::size_t n_features, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed) {
    SubspaceDecomposition d;
    d.method = Method::RD;
    d.input_dim = n_features;
    d.seed = seed;
    d.groups = random_groups(n_features, n_subspaces, group_size, seed);
    return d;
}

SymMatrix feature_scatter(const Dataset& x, bool center) {
    const auto m = static_cast<Eigen::Index>(x.n_features());
    Vector mu = center ? feature_mean(x) : Vector::Zero(m);
    Matrix s = Matrix::Zero(m, m);
    for (std::size_t b = 0; b < x.n_instances(); b += kChunk) {
        Matrix c = dense_chunk(x, b, std::min(b + kChunk, x.n_instances()));
        if (center) c.colwise() -= mu;
        s.selfadjointView<Eigen::Upper>().rankUpdate(c);
    }
    return SymMatrix(s);
}

SymMatrix within_class_scatter(const Dataset& x) {
    const auto m = static_cast<Eigen::Index>(x.n_features());
    Vector mu_pos = Vector::Zero(m), mu_neg = Vector::Zero(m);
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t k = 0; k < x.n_instances(); ++k) {
        Vector& mu = x.label(k) > 0 ? mu_pos : mu_neg;
        (x.label(k) > 0 ? n_pos : n_neg)++;
        for (const auto& f : x.column(k)) mu(f.index) += f.value;
    }
    if (n_pos) mu_pos /= static_cast<double>(n_pos);
    if (n_neg) mu_neg /= static_cast<double>(n_neg);
    Matrix s = Matrix::Zero(m, m);
    for (std::size_t b = 0; b < x.n_instances(); b += kChunk) {
        const std::size_t e = std::min(b + kChunk, x.n_instances());
        Matrix c = dense_chunk(x, b, e);
        for (std::size_t k = b; k < e; ++k) c.col(static_cast<Eigen::Index>(k - b)) -= x.label(k) > 0 ? mu_pos : mu_neg;
        s.selfadjointView<Eigen::Upper>().rankUpdate(c);
    }
    return SymMatrix(s);
}

SymMatrix block_gram(const Dataset& x, const std::vector<std::vector<std::int64_t>>& blocks) {
    const std::size_t m = blocks.size();
    struct Slot {
        std::uint32_t block;
        std::uint32_t row;
    };
    constexpr std::uint32_t kNone = ~0u;
    std::vector<Slot> where(x.n_features(), Slot{kNone, kNone});
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t r = 0; r < blocks[j].size(); ++r)
            if (blocks[j][r] >= 0)
                where[static_cast<std::size_t>(blocks[j][r])] = {static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(r)};

    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    struct Hit {
        std::uint32_t row, block;
        double value;
    };
    std::vector<Hit> hits;
    for (std::size_t k = 0; k < x.n_instances(); ++k) {
        hits.clear();
        for (const auto& f : x.column(k))
            if (where[f.index].block != kNone) hits.push_back({where[f.index].row, where[f.index].block, f.value});
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
            return a.row != b.row ? a.row < b.row : a.block < b.block;
        });
        for (std::size_t s = 0; s < hits.size();) {
            std::size_t e = s;
            while (e < hits.size() && hits[e].row == hits[s].row) ++e;
            for (std::size_t a = s; a < e; ++a)
                for (std::size_t b = a; b < e; ++b) g(hits[a].block, hits[b].block) += hits[a].value * hits[b].value;
            s = e;
        }
    }
    return SymMatrix(g);
}

SubspaceDecomposition fit_pca(const Dataset& x, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed, const DecomposeOptions& opt) {
    check_dense_guard(x.n_features(), opt, Method::PCA);
    auto groups = random_groups(x.n_features(), n_subspaces, group_size, seed);
    SymMatrix s = feature_scatter(x, opt.center_pca);
    EigResult eig = sym_eig(s);

    SubspaceDecomposition d;
    d.method = Method::PCA;
    d.input_dim = x.n_features();
    d.seed = seed;
    d.transform = eig.vectors.transpose();
    d.spectrum = eig.values;
    d.groups = std::move(groups);
    Matrix rotated = d.transform * s.dense() * d.transform.transpose();
    rotated.diagonal().setZero();
    d.block_residual = rotated.norm() / std::max(s.dense().norm(), 1e-300);
    return d;
}

SubspaceDecomposition fit_dca(const Dataset& x, std::size_t n_subspaces, std::size_t group_size,
                              std::uint64_t seed, const DecomposeOptions& opt) {
    check_dense_guard(x.n_features(), opt, Method::DCA);
    const auto& y = x.labels();
    if (std::all_of(y.begin(), y.end(), [&](int l) { return l == y.front(); }))
        throw ValidationError("DCA needs instances from both classes");
    auto groups = random_groups(x.n_features(), n_subspaces, group_size, seed);

    const auto m = static_cast<Eigen::Index>(x.n_features());
    SymMatrix s = feature_scatter(x, opt.center_pca);
    SymMatrix sw = within_class_scatter(x);
    double rho = opt.dca_ridge;
    if (rho <= 0) rho = 1e-3 * sw.dense().trace() / static_cast<double>(m);
    if (rho <= 0) rho = 1e-3 * s.dense().trace() / static_cast<double>(m);
    if (rho <= 0) rho = 1e-3;
    Matrix b = sw.dense();
    b.diagonal().array() += rho;
    EigResult eig = gen_sym_eig(s, SymMatrix(b));

    SubspaceDecomposition d;
    d.method = Method::DCA;
    d.input_dim = x.n_features();
    d.seed = seed;
    d.transform = eig.vectors.transpose();
    d.spectrum = eig.values;
    d.ridge = rho;
    d.groups = std::move(groups);
    return d;
}

SubspaceDecomposition fit_bcd(const Dataset& x, const IndexGroups& groups, const DecomposeOptions& opt) {
    groups.validate(x.n_features());
    if (groups.count() == 0) throw ValidationError("BCD needs at least one group");
    if (!groups.disjoint()) throw ValidationError("BCD needs disjoint index groups");
    for (const auto& g : groups.groups)
        if (g.empty()) throw ValidationError("BCD groups must be non-empty");

    SubspaceDecomposition d;
    d.method = Method::BCD;
    d.input_dim = x.n_features();
    std::vector<std::size_t> starts{0};
    for (const auto& g : groups.groups) {
        d.slots.insert(d.slots.end(), g.begin(), g.end());
        starts.push_back(d.slots.size());
    }
    const std::size_t mb = d.slots.size();
    check_dense_guard(mb, opt, Method::BCD);

    Matrix s = feature_scatter(select_rows(x, d.slots), opt.center_bcd).dense();
    const double s_norm = s.norm();
    const double eps = 1e-8 * s_norm / static_cast<double>(mb);
    Matrix w = Matrix::Identity(static_cast<Eigen::Index>(mb), static_cast<Eigen::Index>(mb));

    for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
        const auto p0 = static_cast<Eigen::Index>(starts[i]);
        const auto pb = static_cast<Eigen::Index>(starts[i + 1] - starts[i]);
        const auto r0 = p0 + pb;
        const auto rn = static_cast<Eigen::Index>(mb) - r0;
        if (rn == 0) break;

        Matrix pivot = s.block(p0, p0, pb, pb);
        Eigen::LLT<Matrix> llt(pivot);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
            pivot.diagonal().array() += eps;
            d.ridge = eps;
            llt.compute(pivot);
            if (llt.info() != Eigen::Success || eps <= 0)
                throw NumericError("BCD pivot block " + std::to_string(i + 1) +
                                   " is singular even after ridge augmentation");
        }
        // L = S_below,i * pivot^-1
        Matrix l = llt.solve(s.block(p0, r0, pb, rn)).transpose();
        Matrix s_ii = s.block(p0, p0, pb, pb);
        Matrix s_bi = s.block(r0, p0, rn, pb);
        // B S B^T restricted to the trailing rows/columns.
        Matrix new_bb = s.block(r0, r0, rn, rn) - l * s_bi.transpose() - s_bi * l.transpose() + l * s_ii * l.transpose();
        Matrix new_bi = s_bi - l * s_ii;
        s.block(r0, r0, rn, rn) = 0.5 * (new_bb + new_bb.transpose());
        s.block(r0, p0, rn, pb) = new_bi;
        s.block(p0, r0, pb, rn) = new_bi.transpose();
        w.block(r0, 0, rn, static_cast<Eigen::Index>(mb)) -= l * w.block(p0, 0, pb, static_cast<Eigen::Index>(mb));
    }
    d.transform = std::move(w);
    d.block_residual = s_norm > 0 ? off_block_norm(s, starts) / s_norm : 0.0;
    for (std::size_t i = 0; i + 1 < starts.size(); ++i)
        d.groups.groups.push_back(iota_group(starts[i], starts[i + 1] - starts[i]));
    return d;
}

SubspaceDecomposition fit_abd(const Dataset& x, const IndexGroups& groups, const DecomposeOptions& opt) {
    groups.validate(x.n_features());
    if (groups.count() == 0) throw ValidationError("ABD needs at least one group");
    if (!groups.disjoint()) throw ValidationError("ABD needs disjoint index groups");
    std::size_t b = 0;
    for (const auto& g : groups.groups) b = std::max(b, g.size());
    for (const auto& g : groups.groups)
        if (g.size() != b && !opt.pad_abd)
            throw ValidationError("ABD groups have unequal sizes and padding is disabled");
    if (b == 0) throw ValidationError("ABD groups are all empty");

    std::vector<std::vector<std::int64_t>> blocks;
    SubspaceDecomposition d;
    d.method = Method::ABD;
    d.input_dim = x.n_features();
    d.block_size = b;
    for (const auto& g : groups.groups) {
        std::vector<std::int64_t> blk(g.begin(), g.end());
        blk.resize(b, SubspaceDecomposition::kPadding);
        d.slots.insert(d.slots.end(), blk.begin(), blk.end());
        blocks.push_back(std::move(blk));
    }
    SymMatrix gram = block_gram(x, blocks);
    EigResult eig = sym_eig(gram);
    d.block_mix = eig.vectors.transpose();
    d.spectrum = eig.values;
    Matrix re = d.block_mix * gram.dense() * d.block_mix.transpose();
    re.diagonal().setZero();
    d.block_residual = gram.dense().norm() > 0 ? re.norm() / gram.dense().norm() : 0.0;
    for (std::size_t i = 0; i < blocks.size(); ++i) d.groups.groups.push_back(iota_group(i * b, b));
    return d;
}

CompositeDecomposition::CompositeDecomposition(std::vector<SubspaceDecomposition> parts, std::uint64_t seed)
    : parts_(std::move(parts)), seed_(seed) {
    if (parts_.empty()) throw ConfigError("a decomposition needs at least one sub-method");
    for (const auto& p : parts_) {
        if (p.input_dim != parts_.front().input_dim)
            throw DimensionError("sub-methods were fitted on different feature dimensions");
        if (p.subspace_count() == 0) throw ConfigError("sub-method without index groups");
        p.groups.validate(p.output_dim());
        h_ += p.subspace_count();
    }
}

CompositeDecomposition compose(std::vector<SubspaceDecomposition> parts, std::uint64_t seed) {
    return CompositeDecomposition(std::move(parts), seed);
}

namespace {

std::vector<SubspaceMatrix> apply_rd(const SubspaceDecomposition& part, const Dataset& x) {
    std::vector<SubspaceMatrix> out;
    std::vector<std::int32_t> where(part.input_dim, -1);
    for (const auto& grp : part.groups.groups) {
        for (std::size_t i = 0; i < grp.size(); ++i) where[grp[i]] = static_cast<std::int32_t>(i);
        SubspaceMatrix m(static_cast<Eigen::Index>(grp.size()), static_cast<Eigen::Index>(x.n_instances()));
        for (std::size_t k = 0; k < x.n_instances(); ++k) {
            m.startVec(static_cast<Eigen::Index>(k));
            for (const auto& f : x.column(k))
                if (where[f.index] >= 0) m.insertBack(where[f.index], static_cast<Eigen::Index>(k)) = f.value;
        }
        m.finalize();
        for (auto f : grp) where[f] = -1;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<SubspaceMatrix> apply_dense(const SubspaceDecomposition& part, const Dataset& x) {
    const std::size_t n = x.n_instances();
    std::vector<std::int64_t> where(part.input_dim, -1);
    if (part.slots.empty())
        std::iota(where.begin(), where.end(), std::int64_t{0});
    else
        for (std::size_t r = 0; r < part.slots.size(); ++r)
            if (part.slots[r] >= 0) where[static_cast<std::size_t>(part.slots[r])] = static_cast<std::int64_t>(r);

    const auto sel_dim = static_cast<Eigen::Index>(part.selected_dim());
    const auto out_dim = static_cast<Eigen::Index>(part.output_dim());
    const bool abd = part.method == Method::ABD;
    const auto b = static_cast<Eigen::Index>(part.block_size);

    std::vector<SubspaceMatrix> out;
    for (const auto& grp : part.groups.groups) {
        out.emplace_back(static_cast<Eigen::Index>(grp.size()), static_cast<Eigen::Index>(n));
        out.back().reserve(static_cast<Eigen::Index>(std::min(grp.size() * n, x.nnz() * 4 + n)));
    }

    Vector sel = Vector::Zero(sel_dim);
    Vector z = Vector::Zero(out_dim);
    std::vector<Eigen::Index> touched;
    for (std::size_t k = 0; k < n; ++k) {
        touched.clear();
        for (const auto& f : x.column(k))
            if (where[f.index] >= 0) {
                sel(where[f.index]) = f.value;
                touched.push_back(where[f.index]);
            }
        if (abd) {
            // Output block i, row r mixes row r of every input block.
            for (Eigen::Index t : touched) {
                const Eigen::Index j = t / b, r = t % b;
                for (Eigen::Index i = 0; i < part.block_mix.rows(); ++i) z(i * b + r) += part.block_mix(i, j) * sel(t);
            }
        } else {
            z.noalias() = part.transform * sel;
        }
        for (std::size_t g = 0; g < part.groups.groups.size(); ++g) {
            auto& m = out[g];
            m.startVec(static_cast<Eigen::Index>(k));
            const auto& grp = part.groups.groups[g];
            for (std::size_t i = 0; i < grp.size(); ++i)
                if (z(grp[i]) != 0.0) m.insertBack(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = z(grp[i]);
        }
        for (Eigen::Index t : touched) sel(t) = 0.0;
        if (abd)
            for (Eigen::Index t : touched)
                for (Eigen::Index i = 0; i < part.block_mix.rows(); ++i) z(i * b + t % b) = 0.0;
    }
    for (auto& m : out) m.finalize();
    return out;
}

}  // namespace

std::vector<SubspaceMatrix> CompositeDecomposition::apply(const Dataset& x, unsigned threads) const {
    if (x.n_features() != input_dim())
        throw DimensionError("dataset has " + std::to_string(x.n_features()) +
                             " features; decomposition was fitted on " + std::to_string(input_dim()));
    std::vector<std::vector<SubspaceMatrix>> per_part(parts_.size());
    parallel_for(parts_.size(), threads, [&](std::size_t i) {
        per_part[i] = parts_[i].method == Method::RD ? apply_rd(parts_[i], x) : apply_dense(parts_[i], x);
    });
    std::vector<SubspaceMatrix> out;
    out.reserve(h_);
    for (auto& v : per_part)
        for (auto& m : v) out.push_back(std::move(m));
    return out;
}

SubspaceDecomposition fit_entry(const Dataset& x, const PlanEntry& e, std::uint64_t seed,
                                const DecomposeOptions& opt) {
    SubspaceDecomposition part;
    switch (e.method) {
        case Method::RD: part = make_rd(x.n_features(), e.n_subspaces, e.group_size, seed); break;
        case Method::PCA: part = fit_pca(x, e.n_subspaces, e.group_size, seed, opt); break;
        case Method::DCA: part = fit_dca(x, e.n_subspaces, e.group_size, seed, opt); break;
        case Method::BCD: part = fit_bcd(x, block_groups(x.n_features(), e.n_subspaces, e.group_size, seed), opt); break;
        case Method::ABD: part = fit_abd(x, block_groups(x.n_features(), e.n_subspaces, e.group_size, seed), opt); break;
    }
    part.seed = seed;
    return part;
}

CompositeDecomposition fit_plan(const Dataset& x, const std::vector<PlanEntry>& plan, std::uint64_t seed,
                                const DecomposeOptions& opt, unsigned threads) {
    if (plan.empty()) throw ConfigError("decomposition plan is empty");
    std::vector<SubspaceDecomposition> parts(plan.size());
    parallel_for(plan.size(), threads,
                 [&](std::size_t k) { parts[k] = fit_entry(x, plan[k], mix_seed(seed, k), opt); });
    return CompositeDecomposition(std::move(parts), seed);
}

Json CompositeDecomposition::to_json() const {
    Json jparts = Json::array();
    for (const auto& p : parts_) {
        Json jp{{"method", std::string(method_name(p.method))},
                {"seed", p.seed},
                {"input_dim", p.input_dim},
                {"slots", p.slots},
                {"block_size", p.block_size},
                {"spectrum", vector_to_json(p.spectrum)},
                {"block_residual", hex_double(p.block_residual)},
                {"ridge", hex_double(p.ridge)}};
        jp["transform"] = p.transform.size() ? matrix_to_json(p.transform) : Json(nullptr);
        jp["block_mix"] = p.block_mix.size() ? matrix_to_json(p.block_mix) : Json(nullptr);
        jp["groups"] = p.groups.groups;
        jparts.push_back(std::move(jp));
    }
    return Json{{"format", "fsdc-decomposition"},
                {"version", kFormatVersion},
                {"input_dim", input_dim()},
                {"seed", seed_},
                {"h", h_},
                {"parts", std::move(jparts)}};
}

CompositeDecomposition CompositeDecomposition::from_json(const Json& j) {
    if (require(j, "format") != "fsdc-decomposition") throw DataError("not a decomposition file");
    if (require(j, "version").get<int>() != kFormatVersion)
        throw DataError("decomposition format version " + require(j, "version").dump() + " is not supported (expected " +
                        std::to_string(kFormatVersion) + ")");
    std::vector<SubspaceDecomposition> parts;
    for (const auto& jp : require(j, "parts")) {
        SubspaceDecomposition p;
        p.method = parse_method(require(jp, "method").get<std::string>());
        p.seed = require(jp, "seed").get<std::uint64_t>();
        p.input_dim = require(jp, "input_dim").get<std::size_t>();
        p.slots = require(jp, "slots").get<std::vector<std::int64_t>>();
        p.block_size = require(jp, "block_size").get<std::size_t>();
        p.spectrum = vector_from_json(require(jp, "spectrum"));
        p.block_residual = parse_hex_double(require(jp, "block_residual").get<std::string>());
        p.ridge = parse_hex_double(require(jp, "ridge").get<std::string>());
        if (!require(jp, "transform").is_null()) p.transform = matrix_from_json(jp["transform"]);
        if (!require(jp, "block_mix").is_null()) p.block_mix = matrix_from_json(jp["block_mix"]);
        p.groups.groups = require(jp, "groups").get<std::vector<std::vector<std::uint32_t>>>();
        parts.push_back(std::move(p));
    }
    CompositeDecomposition d(std::move(parts), require(j, "seed").get<std::uint64_t>());
    if (d.input_dim() != require(j, "input_dim").get<std::size_t>())
        throw DataError("decomposition header M does not match its parts");
    return d;
}

void CompositeDecomposition::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json().dump(1) << '\n';
}

CompositeDecomposition CompositeDecomposition::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace fsdc
