#include "fsdc/classify.hpp"

#include "fsdc/error.hpp"
#include "fsdc/parallel.hpp"
#include "fsdc/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fsdc {

namespace {

constexpr Eigen::Index kBlock = 1024;

Vector label_vector(std::span<const int> y) {
    Vector v(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) v(static_cast<Eigen::Index>(i)) = y[i];
    return v;
}

void check_training_args(Eigen::Index n, std::size_t n_labels, double lambda) {
    if (n < 1) throw ValidationError("training set is empty");
    if (static_cast<std::size_t>(n) != n_labels)
        throw DimensionError("label count " + std::to_string(n_labels) + " does not match instance count " +
                             std::to_string(n));
    if (!(lambda > 0) || !std::isfinite(lambda)) throw ConfigError("regularisation lambda must be positive");
}

// Ridge solution from the centred normal equations.
LinearModel solve_centred(Matrix gram, const Vector& rhs, const Vector& xbar, double ybar, double lambda) {
    gram.diagonal().array() += lambda;
    LinearModel m;
    m.weights = solve_spd(SymMatrix(gram), rhs);
    m.bias = ybar - m.weights.dot(xbar);
    m.lambda = lambda;
    return m;
}

LinearModel train_linear_cg(const SubspaceMatrix& x, const Vector& y, double lambda, const Vector& xbar,
                            double ybar, const LinearOptions& opt) {
    const double n = static_cast<double>(x.cols());
    auto apply = [&](const Vector& v) -> Vector {
        Vector t = x.transpose() * v;
        Vector out = x * t;
        out -= (n * xbar.dot(v)) * xbar;
        out += lambda * v;
        return out;
    };
    Vector rhs = x * y - (n * ybar) * xbar;
    Vector diag = x.cwiseAbs2() * Vector::Ones(x.cols());
    diag -= n * xbar.cwiseAbs2();
    diag.array() += lambda;

    Vector w = Vector::Zero(x.rows());
    Vector r = rhs;
    Vector z = r.cwiseQuotient(diag);
    Vector p = z;
    double rz = r.dot(z);
    const double target = opt.cg_tolerance * std::max(rhs.norm(), 1e-300);
    std::size_t it = 0;
    for (; it < opt.cg_max_iterations && r.norm() > target; ++it) {
        Vector ap = apply(p);
        double alpha = rz / p.dot(ap);
        w += alpha * p;
        r -= alpha * ap;
        z = r.cwiseQuotient(diag);
        double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    if (r.norm() > 1e-6 * std::max(rhs.norm(), 1e-300))
        throw NumericError("conjugate gradient did not converge in " + std::to_string(it) +
                           " iterations; increase lambda");
    return LinearModel{w, ybar - w.dot(xbar), lambda};
}

// Multi-indices of one degree in graded-lex-descending order.
void expand_degree(const Matrix& pw, Eigen::Index coord, int remaining, double value, double*& out) {
    const Eigen::Index m = pw.rows();
    if (coord == m - 1) {
        *out++ = value * pw(coord, remaining);
        return;
    }
    for (int a = remaining; a >= 0; --a) expand_degree(pw, coord + 1, remaining - a, value * pw(coord, a), out);
}

}  // namespace

LinearModel train_linear(const SubspaceMatrix& x, std::span<const int> y, double lambda, const LinearOptions& opt) {
    check_training_args(x.cols(), y.size(), lambda);
    for (Eigen::Index k = 0; k < x.outerSize(); ++k)
        for (SubspaceMatrix::InnerIterator it(x, k); it; ++it)
            if (!std::isfinite(it.value())) throw DataError("non-finite feature value in training data");
    const Vector yv = label_vector(y);
    const double n = static_cast<double>(x.cols());
    const Vector xbar = (x * Vector::Ones(x.cols())) / n;
    const double ybar = yv.mean();
    const Eigen::Index d = x.rows();

    if (static_cast<std::size_t>(d) > opt.dense_limit) return train_linear_cg(x, yv, lambda, xbar, ybar, opt);

    const double density = static_cast<double>(x.nonZeros()) / std::max(1.0, static_cast<double>(d) * n);
    Matrix gram = Matrix::Zero(d, d);
    Vector rhs = Vector::Zero(d);
    if (density > 0.25) {
        for (Eigen::Index b = 0; b < x.cols(); b += kBlock) {
            const Eigen::Index len = std::min(kBlock, x.cols() - b);
            Matrix c = Matrix(x.middleCols(b, len));
            c.colwise() -= xbar;
            gram.selfadjointView<Eigen::Upper>().rankUpdate(c);
            rhs += c * (yv.segment(b, len).array() - ybar).matrix();
        }
        gram = SymMatrix(gram).dense();
    } else {
        gram = Matrix(x * x.transpose()) - n * xbar * xbar.transpose();
        rhs = x * yv - (n * ybar) * xbar;
    }
    return solve_centred(std::move(gram), rhs, xbar, ybar, lambda);
}

LinearModel train_linear(const Matrix& x, std::span<const int> y, double lambda, const LinearOptions&) {
    check_training_args(x.cols(), y.size(), lambda);
    if (!x.allFinite()) throw DataError("non-finite feature value in training data");
    const Vector yv = label_vector(y);
    const Vector xbar = x.rowwise().mean();
    const double ybar = yv.mean();
    Matrix c = x.colwise() - xbar;
    Matrix gram = Matrix::Zero(x.rows(), x.rows());
    gram.selfadjointView<Eigen::Upper>().rankUpdate(c);
    Vector rhs = c * (yv.array() - ybar).matrix();
    return solve_centred(SymMatrix(gram).dense(), rhs, xbar, ybar, lambda);
}

Vector predict_linear(const LinearModel& model, const SubspaceMatrix& x) {
    if (x.rows() != model.weights.size())
        throw DimensionError("linear model expects " + std::to_string(model.weights.size()) + " features, got " +
                             std::to_string(x.rows()));
    Vector s = x.transpose() * model.weights;
    s.array() += model.bias;
    return s;
}

Vector predict_linear(const LinearModel& model, const Matrix& x) {
    if (x.rows() != model.weights.size())
        throw DimensionError("linear model expects " + std::to_string(model.weights.size()) + " features, got " +
                             std::to_string(x.rows()));
    Vector s = x.transpose() * model.weights;
    s.array() += model.bias;
    return s;
}

std::size_t trbf_dim(std::size_t m, int p) {
    if (p < 0) throw ConfigError("TRBF order must be non-negative");
    // C(m+p, p) built up as a running product of exact binomials.
    unsigned __int128 c = 1;
    for (int k = 1; k <= p; ++k) {
        c = c * (m + static_cast<std::size_t>(k)) / static_cast<unsigned>(k);
        if (c > static_cast<unsigned __int128>(SIZE_MAX / 2)) throw NumericError("TRBF intrinsic dimension overflows");
    }
    return static_cast<std::size_t>(c);
}

void trbf_expand_into(const Eigen::Ref<const Vector>& x, double sigma, int p, Eigen::Ref<Vector> out) {
    if (!(sigma > 0)) throw ConfigError("TRBF sigma must be positive");
    if (p < 1) throw ConfigError("TRBF order must be at least 1");
    if (!x.allFinite()) throw DataError("non-finite TRBF input");
    const Eigen::Index m = x.size();
    if (static_cast<std::size_t>(out.size()) != trbf_dim(static_cast<std::size_t>(m), p))
        throw DimensionError("TRBF output buffer has the wrong length");
    const double scale = std::exp(-x.squaredNorm() / (2 * sigma * sigma));
    double* cursor = out.data();
    *cursor++ = scale;
    if (m > 0) {
        // pw(k, a) = (x_k / sigma)^a / sqrt(a!)
        Matrix pw(m, p + 1);
        for (Eigen::Index k = 0; k < m; ++k) {
            const double u = x(k) / sigma;
            pw(k, 0) = 1.0;
            for (int a = 1; a <= p; ++a) pw(k, a) = pw(k, a - 1) * u / std::sqrt(static_cast<double>(a));
        }
        for (int deg = 1; deg <= p; ++deg) expand_degree(pw, 0, deg, scale, cursor);
    }
}

Vector trbf_expand(const Eigen::Ref<const Vector>& x, double sigma, int p) {
    Vector out(static_cast<Eigen::Index>(trbf_dim(static_cast<std::size_t>(x.size()), std::max(p, 0))));
    trbf_expand_into(x, sigma, p, out);
    return out;
}

double trbf_kernel(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double sigma, int p) {
    const double s2 = sigma * sigma;
    const double t = x.dot(y) / s2;
    double term = 1, sum = 1;
    for (int k = 1; k <= p; ++k) {
        term *= t / k;
        sum += term;
    }
    return std::exp(-(x.squaredNorm() + y.squaredNorm()) / (2 * s2)) * sum;
}

TrbfModel train_trbf_krr(const Matrix& x, std::span<const int> y, double sigma, int p, double lambda,
                         const TrbfOptions& opt) {
    check_training_args(x.cols(), y.size(), lambda);
    if (!(sigma > 0)) throw ConfigError("TRBF sigma must be positive");
    if (p < 1) throw ConfigError("TRBF order must be at least 1");
    const std::size_t j = trbf_dim(static_cast<std::size_t>(x.rows()), p);
    if (j > opt.max_intrinsic_dim)
        throw ConfigError("TRBF intrinsic dimension J=" + std::to_string(j) + " exceeds max_intrinsic_dim=" +
                          std::to_string(opt.max_intrinsic_dim) + "; use a smaller order or fewer fused inputs");
    const auto jj = static_cast<Eigen::Index>(j);
    const Vector yv = label_vector(y);

    // Fixed instance blocks, partial sums added in block order: identical
    // results for any thread count.
    const Eigen::Index n_blocks = (x.cols() + kBlock - 1) / kBlock;
    const std::size_t wave = std::max(1u, opt.threads);
    Matrix gram = Matrix::Zero(jj, jj);
    Vector rhs = Vector::Zero(jj);
    for (Eigen::Index w0 = 0; w0 < n_blocks; w0 += static_cast<Eigen::Index>(wave)) {
        const auto count = static_cast<std::size_t>(std::min<Eigen::Index>(static_cast<Eigen::Index>(wave), n_blocks - w0));
        std::vector<Matrix> part_gram(count);
        std::vector<Vector> part_rhs(count);
        parallel_for(count, opt.threads, [&](std::size_t i) {
            const Eigen::Index b = (w0 + static_cast<Eigen::Index>(i)) * kBlock;
            const Eigen::Index len = std::min(kBlock, x.cols() - b);
            Matrix z(jj, len);
            for (Eigen::Index c = 0; c < len; ++c) trbf_expand_into(x.col(b + c), sigma, p, z.col(c));
            part_gram[i] = Matrix::Zero(jj, jj);
            part_gram[i].selfadjointView<Eigen::Upper>().rankUpdate(z);
            part_rhs[i] = z * yv.segment(b, len);
        });
        for (std::size_t i = 0; i < count; ++i) {
            gram += part_gram[i];
            rhs += part_rhs[i];
        }
    }
    gram.diagonal().array() += lambda;
    TrbfModel m;
    m.sigma = sigma;
    m.order = p;
    m.input_dim = static_cast<std::size_t>(x.rows());
    m.lambda = lambda;
    m.weights = solve_spd(SymMatrix(gram), rhs);
    return m;
}

Vector predict_trbf(const TrbfModel& model, const Matrix& x, unsigned threads) {
    if (static_cast<std::size_t>(x.rows()) != model.input_dim)
        throw DimensionError("TRBF model expects " + std::to_string(model.input_dim) + " inputs, got " +
                             std::to_string(x.rows()));
    Vector s(x.cols());
    const Eigen::Index n_blocks = (x.cols() + kBlock - 1) / kBlock;
    parallel_for(static_cast<std::size_t>(n_blocks), threads, [&](std::size_t blk) {
        const Eigen::Index b = static_cast<Eigen::Index>(blk) * kBlock;
        const Eigen::Index len = std::min(kBlock, x.cols() - b);
        Vector phi(model.weights.size());
        for (Eigen::Index c = 0; c < len; ++c) {
            trbf_expand_into(x.col(b + c), model.sigma, model.order, phi);
            s(b + c) = model.weights.dot(phi);
        }
    });
    return s;
}

double median_pairwise_distance(const Matrix& x, std::uint64_t seed, std::size_t max_sample) {
    const auto n = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> pick;
    if (n <= max_sample) {
        pick.resize(n);
        std::iota(pick.begin(), pick.end(), std::size_t{0});
    } else {
        Rng rng(seed);
        auto perm = seeded_permutation(n, rng);
        pick.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(max_sample));
        std::sort(pick.begin(), pick.end());
    }
    std::vector<double> d;
    for (std::size_t a = 0; a < pick.size(); ++a)
        for (std::size_t b = a + 1; b < pick.size(); ++b)
            d.push_back((x.col(static_cast<Eigen::Index>(pick[a])) - x.col(static_cast<Eigen::Index>(pick[b]))).norm());
    if (d.empty()) return 1.0;
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
    return med > 0 ? med : 1.0;
}

namespace {

double resolve_lambda(const LearnerSpec& spec, Eigen::Index n) {
    return spec.lambda > 0 ? spec.lambda : 1e-3 * static_cast<double>(n);
}

}  // namespace

Model train_model(const LearnerSpec& spec, const SubspaceMatrix& x, std::span<const int> y, std::uint64_t seed,
                  const TrbfOptions& trbf) {
    if (spec.type == LearnerType::linear) return train_linear(x, y, resolve_lambda(spec, x.cols()));
    return train_model(spec, Matrix(x), y, seed, trbf);
}

Model train_model(const LearnerSpec& spec, const Matrix& x, std::span<const int> y, std::uint64_t seed,
                  const TrbfOptions& trbf) {
    const double lambda = resolve_lambda(spec, x.cols());
    if (spec.type == LearnerType::linear) return train_linear(x, y, lambda);
    const double sigma = spec.sigma > 0 ? spec.sigma : median_pairwise_distance(x, seed);
    return train_trbf_krr(x, y, sigma, spec.order, lambda, trbf);
}

Vector predict_model(const Model& model, const SubspaceMatrix& x) {
    if (auto* lin = std::get_if<LinearModel>(&model)) return predict_linear(*lin, x);
    return predict_trbf(std::get<TrbfModel>(model), Matrix(x));
}

Vector predict_model(const Model& model, const Matrix& x, unsigned threads) {
    if (auto* lin = std::get_if<LinearModel>(&model)) return predict_linear(*lin, x);
    return predict_trbf(std::get<TrbfModel>(model), x, threads);
}

std::size_t model_input_dim(const Model& model) {
    if (auto* lin = std::get_if<LinearModel>(&model)) return static_cast<std::size_t>(lin->weights.size());
    return std::get<TrbfModel>(model).input_dim;
}

Json model_to_json(const Model& model) {
    if (auto* lin = std::get_if<LinearModel>(&model))
        return Json{{"type", "linear"},
                    {"weights", vector_to_json(lin->weights)},
                    {"bias", hex_double(lin->bias)},
                    {"lambda", hex_double(lin->lambda)}};
    const auto& t = std::get<TrbfModel>(model);
    return Json{{"type", "trbf"},
                {"sigma", hex_double(t.sigma)},
                {"order", t.order},
                {"input_dim", t.input_dim},
                {"weights", vector_to_json(t.weights)},
                {"lambda", hex_double(t.lambda)}};
}

Model model_from_json(const Json& j) {
    const auto type = require(j, "type").get<std::string>();
    if (type == "linear")
        return LinearModel{vector_from_json(require(j, "weights")),
                           parse_hex_double(require(j, "bias").get<std::string>()),
                           parse_hex_double(require(j, "lambda").get<std::string>())};
    if (type == "trbf") {
        TrbfModel t;
        t.sigma = parse_hex_double(require(j, "sigma").get<std::string>());
        t.order = require(j, "order").get<int>();
        t.input_dim = require(j, "input_dim").get<std::size_t>();
        t.weights = vector_from_json(require(j, "weights"));
        t.lambda = parse_hex_double(require(j, "lambda").get<std::string>());
        if (static_cast<std::size_t>(t.weights.size()) != trbf_dim(t.input_dim, t.order))
            throw DataError("TRBF weight count does not match C(m+p, p)");
        return t;
    }
    throw DataError("unknown model type '" + type + "'");
}

}  // namespace fsdc
