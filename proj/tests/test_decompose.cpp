#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsdc/decompose.hpp"
#include "fsdc/error.hpp"
#include "oracles.hpp"

#include <set>

using namespace fsdc;

namespace {

// Rows of X picked in slot order, padding rows zero.
Matrix selected(const Matrix& x, const std::vector<std::int64_t>& slots) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(slots.size()), x.cols());
    for (std::size_t r = 0; r < slots.size(); ++r)
        if (slots[r] >= 0) out.row(static_cast<Eigen::Index>(r)) = x.row(slots[r]);
    return out;
}

Matrix to_dense(const SubspaceMatrix& m) { return Matrix(m); }

double off_block(const Matrix& s, const IndexGroups& g) {
    std::vector<int> owner(static_cast<std::size_t>(s.rows()), -1);
    for (std::size_t i = 0; i < g.count(); ++i)
        for (auto r : g.groups[i]) owner[r] = static_cast<int>(i);
    double sum = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (owner[static_cast<std::size_t>(i)] != owner[static_cast<std::size_t>(j)]) sum += s(i, j) * s(i, j);
    return std::sqrt(sum);
}

std::vector<int> alternating(std::size_t n) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = i % 2 ? -1 : 1;
    return y;
}

}  // namespace

TEST_CASE("method names") {
    for (auto m : {Method::RD, Method::PCA, Method::DCA, Method::BCD, Method::ABD})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("LDA"), ConfigError);
}

TEST_CASE("random groups: exact cover") {
    auto g = random_groups(4, 2, 2, 17);
    REQUIRE(g.count() == 2);
    std::set<std::uint32_t> all;
    for (const auto& grp : g.groups) {
        CHECK(grp.size() == 2);
        all.insert(grp.begin(), grp.end());
    }
    CHECK(all == std::set<std::uint32_t>{0, 1, 2, 3});
    CHECK(g.disjoint());
    CHECK(random_groups(4, 2, 2, 17).groups == g.groups);
    CHECK(random_groups(4, 2, 2, 18).groups.size() == 2);
}

TEST_CASE("random groups overlap when they oversubscribe M") {
    const std::size_t m = 47236, gs = 23618;
    auto g = random_groups(m, 4, gs, 5);
    REQUIRE(g.count() == 4);
    g.validate(m);
    for (const auto& grp : g.groups) {
        CHECK(grp.size() == gs);
        CHECK(std::is_sorted(grp.begin(), grp.end()));
    }
    // the first two groups are one permutation: disjoint and covering M
    std::set<std::uint32_t> first(g.groups[0].begin(), g.groups[0].end());
    first.insert(g.groups[1].begin(), g.groups[1].end());
    CHECK(first.size() == m);
    CHECK_FALSE(g.disjoint());
    // covtype-style 4 x 40 over 54 features
    auto c = random_groups(54, 4, 40, 3);
    c.validate(54);
    for (const auto& grp : c.groups) CHECK(grp.size() == 40);
}

TEST_CASE("random groups reject bad sizes") {
    CHECK_THROWS_AS(random_groups(3, 1, 4, 0), ConfigError);
    CHECK_THROWS_AS(random_groups(3, 0, 1, 0), ConfigError);
    CHECK_THROWS_AS(random_groups(3, 1, 0, 0), ConfigError);
}

TEST_CASE("block groups are disjoint") {
    auto g = block_groups(54, 4, 27, 9);
    CHECK(g.count() == 4);
    CHECK(g.disjoint());
    std::size_t total = 0;
    for (const auto& grp : g.groups) total += grp.size();
    CHECK(total == 54);
    auto t = block_groups(20, 2, 5, 9);  // leaves 10 features out
    CHECK(t.disjoint());
    CHECK(t.groups[0].size() + t.groups[1].size() == 10);
}

TEST_CASE("RD is identity selection") {
    auto d = make_rd(10, 3, 4, 1);
    CHECK(d.output_dim() == 10);
    CHECK(d.dense_transform() == Matrix::Identity(10, 10));
    CHECK_THROWS_AS(make_rd(3, 1, 4, 1), ConfigError);
}

TEST_CASE("PCA hand case") {
    // features are rows: feature 1 = (2, -2), feature 2 = (0, 0)
    auto ds = oracle::from_dense(Matrix{{2, -2}, {0, 0}}, {1, -1});
    auto d = fit_pca(ds, 1, 2, 0);
    CHECK(d.spectrum(0) == doctest::Approx(8));
    CHECK(d.spectrum(1) == doctest::Approx(0));
    CHECK(std::abs(d.transform(0, 0)) == doctest::Approx(1));
    CHECK(std::abs(d.transform(0, 1)) < 1e-12);
}

TEST_CASE("PCA isotropic tie") {
    // two instances cannot be isotropic after centering, so take them as given
    auto ds = oracle::from_dense(Matrix{{1, -1}, {1, 1}}, {1, -1});
    DecomposeOptions opt;
    opt.center_pca = false;
    auto d = fit_pca(ds, 1, 2, 0, opt);
    CHECK(d.spectrum(0) == doctest::Approx(2));
    CHECK(d.spectrum(1) == doctest::Approx(2));
    CHECK(oracle::frob(d.transform * d.transform.transpose() - Matrix::Identity(2, 2)) < 1e-12);
}

TEST_CASE("PCA diagonalizes the centered scatter") {
    std::mt19937_64 rng(21);
    auto ds = oracle::random_dataset(10, 200, rng);
    auto d = fit_pca(ds, 3, 3, 4);
    Matrix s = oracle::gram(oracle::centered_rows(oracle::dense(ds)));
    Matrix rotated = d.transform * s * d.transform.transpose();
    CHECK(oracle::off_diagonal(rotated) <= 1e-8 * oracle::frob(s));
    CHECK(oracle::frob(d.transform.transpose() * rotated * d.transform - s) <= 1e-8 * oracle::frob(s));
    CHECK(oracle::frob(d.transform * d.transform.transpose() - Matrix::Identity(10, 10)) <= 1e-10);
    auto [values, vectors] = oracle::jacobi_eig(s);
    for (Eigen::Index k = 0; k < 10; ++k) CHECK(std::abs(d.spectrum(k) - values(k)) <= 1e-9 * oracle::frob(s));
    CHECK(d.output_dim() == 10);
    CHECK(d.subspace_count() == 3);
}

TEST_CASE("PCA dense guard") {
    std::mt19937_64 rng(2);
    auto ds = oracle::random_dataset(12, 20, rng);
    DecomposeOptions opt;
    opt.max_dense_features = 8;
    CHECK_THROWS_AS(fit_pca(ds, 1, 2, 0, opt), ConfigError);
    CHECK_THROWS_AS(fit_dca(ds, 1, 2, 0, opt), ConfigError);
}

TEST_CASE("DCA with singleton classes reduces to scaled PCA") {
    auto ds = oracle::from_dense(Matrix{{1, 3}, {2, -1}}, {1, -1});
    DecomposeOptions opt;
    opt.dca_ridge = 0.5;
    auto d = fit_dca(ds, 1, 2, 0, opt);
    Matrix s = oracle::gram(oracle::centered_rows(oracle::dense(ds)));
    auto [values, vectors] = oracle::jacobi_eig(s);
    CHECK(d.spectrum(0) == doctest::Approx(values(0) / 0.5));
    CHECK(std::abs(d.transform.row(0).normalized().dot(vectors.col(0))) == doctest::Approx(1));
    CHECK(d.ridge == 0.5);
}

TEST_CASE("DCA picks the discriminant axis") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0, 1.0);
    std::normal_distribution<double> small(0, 0.05);
    const int n = 200;
    Matrix x(2, n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = i % 2 ? 1 : -1;
        x(0, i) = y[i] + small(rng);
        x(1, i) = 3 * noise(rng);
    }
    auto d = fit_dca(oracle::from_dense(x, y), 1, 2, 0);
    Vector top = d.transform.row(0).transpose().normalized();
    CHECK(std::abs(top(0)) >= 0.99);
}

TEST_CASE("DCA satisfies the generalized eigen equation") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 4; ++trial) {
        auto ds = oracle::random_dataset(8, 60, rng);
        auto d = fit_dca(ds, 2, 4, 1);
        Matrix x = oracle::dense(ds);
        Matrix s = oracle::gram(oracle::centered_rows(x));
        Matrix sw = Matrix::Zero(8, 8);
        for (int cls : {1, -1}) {
            std::vector<Eigen::Index> cols;
            for (std::size_t k = 0; k < ds.n_instances(); ++k)
                if (ds.label(k) == cls) cols.push_back(static_cast<Eigen::Index>(k));
            Matrix xc(8, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c) xc.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
            sw += oracle::gram(oracle::centered_rows(xc));
        }
        CHECK(d.ridge == doctest::Approx(1e-3 * sw.trace() / 8));
        Matrix b = sw + d.ridge * Matrix::Identity(8, 8);
        for (Eigen::Index k = 0; k < 8; ++k) {
            Vector v = d.transform.row(k).transpose();
            CHECK((s * v - d.spectrum(k) * b * v).norm() <= 1e-6);
        }
        CHECK(oracle::frob(d.transform * b * d.transform.transpose() - Matrix::Identity(8, 8)) <= 1e-8);
    }
}

TEST_CASE("DCA needs both classes") {
    auto ds = oracle::from_dense(Matrix{{1, 2}, {3, 4}}, {1, 1});
    CHECK_THROWS_AS(fit_dca(ds, 1, 1, 0), ValidationError);
}

TEST_CASE("BCD with one group is the identity") {
    std::mt19937_64 rng(1);
    auto ds = oracle::random_dataset(5, 30, rng);
    auto d = fit_bcd(ds, IndexGroups{{{0, 1, 2, 3, 4}}});
    CHECK(d.transform == Matrix::Identity(5, 5));
}

TEST_CASE("BCD hand Schur complement") {
    auto ds = oracle::from_dense(Matrix{{2, 0}, {1, 1}}, {1, -1});
    auto d = fit_bcd(ds, IndexGroups{{{0}, {1}}});
    Matrix s{{4, 2}, {2, 2}};
    CHECK(oracle::frob(d.transform - Matrix{{1, 0}, {-0.5, 1}}) < 1e-14);
    Matrix diag = d.transform * s * d.transform.transpose();
    CHECK(oracle::frob(diag - Matrix{{4, 0}, {0, 1}}) < 1e-14);
}

TEST_CASE("BCD matches dense blocked elimination") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        auto ds = oracle::random_dataset(12, 80, rng);
        auto groups = block_groups(12, 3, 4, static_cast<std::uint64_t>(trial));
        auto d = fit_bcd(ds, groups);
        Matrix xs = selected(oracle::dense(ds), d.slots);
        Matrix s = oracle::gram(xs);
        Matrix w = oracle::blocked_elimination(s, {4, 4, 4});
        CHECK(oracle::frob(d.transform - w) <= 1e-8 * (1 + oracle::frob(w)));
        Matrix after = d.transform * s * d.transform.transpose();
        CHECK(off_block(after, d.groups) <= 1e-8 * oracle::frob(s));
        CHECK(d.block_residual <= 1e-8);
        // unit block lower triangular
        for (int i = 0; i < 3; ++i) {
            CHECK(d.transform.block(4 * i, 4 * i, 4, 4) == Matrix::Identity(4, 4));
            for (int j = i + 1; j < 3; ++j) CHECK(d.transform.block(4 * i, 4 * j, 4, 4).isZero(0));
        }
    }
}

TEST_CASE("BCD ridge retry on a singular pivot") {
    // feature 1 is all zero: the first pivot is singular
    auto ds = oracle::from_dense(Matrix{{0, 0, 0}, {1, 2, 3}}, {1, -1, 1});
    auto d = fit_bcd(ds, IndexGroups{{{0}, {1}}});
    CHECK(d.ridge > 0);
    CHECK(d.transform.allFinite());
}

TEST_CASE("BCD requires disjoint groups") {
    std::mt19937_64 rng(1);
    auto ds = oracle::random_dataset(4, 10, rng);
    CHECK_THROWS_AS(fit_bcd(ds, IndexGroups{{{0, 1}, {1, 2}}}), ValidationError);
}

TEST_CASE("ABD hand case") {
    auto ds = oracle::from_dense(Matrix{{1, 0}, {1, 0}}, {1, -1});
    auto d = fit_abd(ds, IndexGroups{{{0}, {1}}});
    CHECK(d.spectrum(0) == doctest::Approx(2));
    CHECK(std::abs(d.spectrum(1)) < 1e-14);
    const double h = std::sqrt(0.5);
    CHECK(std::abs(d.block_mix(0, 0)) == doctest::Approx(h));
    CHECK(std::abs(d.block_mix(0, 1)) == doctest::Approx(h));
    CHECK(d.block_mix(1, 0) * d.block_mix(1, 1) == doctest::Approx(-0.5));

    auto views = compose({d}).apply(ds);
    REQUIRE(views.size() == 2);
    Matrix v0 = to_dense(views[0]), v1 = to_dense(views[1]);
    CHECK(std::abs(v0(0, 0)) == doctest::Approx(std::sqrt(2.0)));
    CHECK(std::abs(v0(0, 1)) < 1e-14);
    CHECK(std::abs(v1(0, 0)) < 1e-14);
    CHECK(std::abs(v1(0, 1)) < 1e-14);
}

TEST_CASE("ABD orthogonal rows tie case") {
    auto ds = oracle::from_dense(Matrix{{1, 1}, {1, -1}}, {1, -1});
    auto d = fit_abd(ds, IndexGroups{{{0}, {1}}});
    CHECK(d.spectrum(0) == doctest::Approx(2));
    CHECK(d.spectrum(1) == doctest::Approx(2));
    Matrix w = d.dense_transform();
    CHECK(oracle::frob(w * w.transpose() - Matrix::Identity(2, 2)) < 1e-12);
}

TEST_CASE("ABD is orthogonal and diagonalizes the subspace Gram") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 5; ++trial) {
        auto ds = oracle::random_dataset(20, 70, rng, 0.6);
        auto groups = block_groups(20, 4, 5, static_cast<std::uint64_t>(trial));
        auto d = fit_abd(ds, groups);
        Matrix w = d.dense_transform();
        REQUIRE(w.rows() == 20);
        CHECK(oracle::frob(w * w.transpose() - Matrix::Identity(20, 20)) <= 1e-10);
        // oracle Gram of the transformed blocks
        Matrix xt = w * oracle::dense(ds);
        Matrix g(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) g(i, j) = xt.middleRows(5 * i, 5).cwiseProduct(xt.middleRows(5 * j, 5)).sum();
        Matrix g0(4, 4);
        Matrix xs = selected(oracle::dense(ds), d.slots);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) g0(i, j) = xs.middleRows(5 * i, 5).cwiseProduct(xs.middleRows(5 * j, 5)).sum();
        CHECK(oracle::off_diagonal(g) <= 1e-8 * (1 + oracle::frob(g0)));
        auto [values, vectors] = oracle::jacobi_eig(g0);
        for (int k = 0; k < 4; ++k) CHECK(std::abs(d.spectrum(k) - values(k)) <= 1e-9 * (1 + oracle::frob(g0)));
    }
}

TEST_CASE("ABD pads unequal groups") {
    std::mt19937_64 rng(3);
    auto ds = oracle::random_dataset(7, 30, rng);
    IndexGroups g{{{0, 1, 2}, {3, 4}, {5, 6}}};
    auto d = fit_abd(ds, g);
    CHECK(d.block_size == 3);
    CHECK(d.output_dim() == 9);
    Matrix w = d.dense_transform();
    // padding columns do not exist in input space, so W W^T need not be I, but
    // the mixing itself is orthogonal
    CHECK(oracle::frob(d.block_mix * d.block_mix.transpose() - Matrix::Identity(3, 3)) <= 1e-10);
    DecomposeOptions opt;
    opt.pad_abd = false;
    CHECK_THROWS_AS(fit_abd(ds, g, opt), ValidationError);
}

TEST_CASE("compose counts subspaces") {
    std::mt19937_64 rng(8);
    CHECK(compose({make_rd(5, 2, 2, 0)}).h() == 2);
    CHECK_THROWS_AS(compose({}), ConfigError);
    CHECK_THROWS_AS(compose({make_rd(5, 1, 2, 0), make_rd(6, 1, 2, 0)}), DataError);

    auto covtype_like = oracle::random_dataset(54, 120, rng);
    std::vector<PlanEntry> plan{{Method::RD, 4, 40}, {Method::PCA, 4, 40}, {Method::DCA, 4, 40},
                                {Method::BCD, 4, 27}, {Method::ABD, 4, 27}};
    auto d = fit_plan(covtype_like, plan, 3);
    CHECK(d.h() == 20);
    auto views = d.apply(covtype_like);
    CHECK(views.size() == 20);
    for (const auto& v : views) CHECK(v.cols() == 120);
}

TEST_CASE("RCV1-sized plan of RD and ABD") {
    std::mt19937_64 rng(12);
    const std::size_t m = 47236;
    std::uniform_int_distribution<std::uint32_t> idx(0, m - 1);
    std::normal_distribution<double> g;
    std::vector<SparseVector> cols(40);
    for (auto& c : cols) {
        std::set<std::uint32_t> at;
        while (at.size() < 60) at.insert(idx(rng));
        for (auto i : at) c.push_back({i, g(rng)});
    }
    auto ds = Dataset::from_columns(m, cols, alternating(40));
    auto d = fit_plan(ds, {{Method::RD, 4, 23618}, {Method::ABD, 4, 23618}}, 1);
    CHECK(d.h() == 8);
    auto views = d.apply(ds);
    REQUIRE(views.size() == 8);
    for (int i = 0; i < 4; ++i) CHECK(views[static_cast<std::size_t>(i)].rows() == 23618);
    // ABD preserves total energy of the selected coordinates
    double before = 0, after = 0;
    for (const auto& c : cols)
        for (const auto& f : c) before += f.value * f.value;
    for (int i = 4; i < 8; ++i) after += views[static_cast<std::size_t>(i)].squaredNorm();
    CHECK(after == doctest::Approx(before).epsilon(1e-10));
}

TEST_CASE("apply selects groups in order") {
    SubspaceDecomposition rd;
    rd.method = Method::RD;
    rd.input_dim = 2;
    rd.groups = IndexGroups{{{0}, {1}}};
    auto ds = oracle::from_dense(Matrix{{5}, {7}}, {1});
    auto views = compose({rd}).apply(ds);
    REQUIRE(views.size() == 2);
    CHECK(to_dense(views[0])(0, 0) == 5);
    CHECK(to_dense(views[1])(0, 0) == 7);
    CHECK_THROWS_AS(compose({rd}).apply(oracle::from_dense(Matrix{{1}, {2}, {3}}, {1})), DataError);
}

TEST_CASE("apply equals the stacked dense transform") {
    std::mt19937_64 rng(61);
    auto ds = oracle::random_dataset(12, 30, rng, 0.7);
    std::vector<PlanEntry> plan{{Method::RD, 2, 5}, {Method::PCA, 2, 4}, {Method::DCA, 1, 6},
                                {Method::BCD, 3, 4}, {Method::ABD, 3, 4}};
    auto d = fit_plan(ds, plan, 9);
    auto views = d.apply(ds);
    Matrix x = oracle::dense(ds);
    std::size_t v = 0;
    for (const auto& part : d.parts()) {
        Matrix xt = oracle::matmul(part.dense_transform(), x);
        for (const auto& grp : part.groups.groups) {
            Matrix expect(static_cast<Eigen::Index>(grp.size()), x.cols());
            for (std::size_t r = 0; r < grp.size(); ++r) expect.row(static_cast<Eigen::Index>(r)) = xt.row(grp[r]);
            Matrix got = to_dense(views[v++]);
            CHECK(oracle::frob(got - expect) <= 1e-12 * (1 + oracle::frob(expect)));
        }
    }
    CHECK(v == d.h());
}

TEST_CASE("apply is linear") {
    std::mt19937_64 rng(71);
    auto fit_on = oracle::random_dataset(10, 40, rng);
    auto d = fit_plan(fit_on, {{Method::RD, 2, 5}, {Method::PCA, 2, 5}, {Method::BCD, 2, 5}, {Method::ABD, 2, 5}}, 2);
    Matrix x1 = oracle::dense(oracle::random_dataset(10, 15, rng));
    Matrix x2 = oracle::dense(oracle::random_dataset(10, 15, rng));
    const double a = 1.75, b = -0.4;
    auto y = alternating(15);
    auto v1 = d.apply(oracle::from_dense(x1, y));
    auto v2 = d.apply(oracle::from_dense(x2, y));
    auto vc = d.apply(oracle::from_dense(a * x1 + b * x2, y));
    for (std::size_t i = 0; i < vc.size(); ++i) {
        Matrix expect = a * to_dense(v1[i]) + b * to_dense(v2[i]);
        CHECK(oracle::frob(to_dense(vc[i]) - expect) <= 1e-12 * (1 + oracle::frob(expect)));
    }
}

TEST_CASE("decomposition round-trips bit-exactly") {
    std::mt19937_64 rng(81);
    auto ds = oracle::random_dataset(9, 50, rng);
    auto d = fit_plan(ds, {{Method::RD, 2, 4}, {Method::PCA, 2, 3}, {Method::DCA, 1, 4}, {Method::BCD, 3, 3},
                           {Method::ABD, 2, 4}},
                      5);
    Json j = d.to_json();
    auto back = CompositeDecomposition::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.h() == d.h());
    auto a = d.apply(ds), b = back.apply(ds);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_dense(a[i]) == to_dense(b[i]));
    j["version"] = 999;
    CHECK_THROWS_AS(CompositeDecomposition::from_json(j), DataError);
}

TEST_CASE("fitting is deterministic and thread independent") {
    std::mt19937_64 rng(91);
    auto ds = oracle::random_dataset(14, 60, rng);
    std::vector<PlanEntry> plan{{Method::RD, 3, 6}, {Method::PCA, 2, 5}, {Method::DCA, 2, 5},
                                {Method::BCD, 2, 7}, {Method::ABD, 2, 7}};
    auto a = fit_plan(ds, plan, 77, {}, 1);
    auto b = fit_plan(ds, plan, 77, {}, 4);
    CHECK(a.to_json() == b.to_json());
    auto c = fit_plan(ds, plan, 78, {}, 1);
    CHECK(c.to_json() != a.to_json());
}
