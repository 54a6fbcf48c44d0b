#pragma once

#include "fsdc/decompose.hpp"
#include "fsdc/numerics.hpp"
#include "fsdc/serialize.hpp"

#include <cstdint>
#include <span>
#include <variant>

namespace fsdc {

// Ridge least-squares classifier: minimises
//   sum_n (w^T x_n + b - y_n)^2 + lambda ||w||^2
// with the bias unregularised.
struct LinearModel {
    Vector weights;
    double bias = 0;
    double lambda = 0;
};

struct LinearOptions {
    // Up to this dimension the centred normal equations are formed densely and
    // solved by Cholesky; above it preconditioned CG runs matrix-free on the
    // sparse data.
    std::size_t dense_limit = 2048;
    double cg_tolerance = 1e-11;
    std::size_t cg_max_iterations = 10000;
};

LinearModel train_linear(const SubspaceMatrix& x, std::span<const int> y, double lambda,
                         const LinearOptions& opt = {});
LinearModel train_linear(const Matrix& x, std::span<const int> y, double lambda, const LinearOptions& opt = {});
Vector predict_linear(const LinearModel& model, const SubspaceMatrix& x);
Vector predict_linear(const LinearModel& model, const Matrix& x);

// Kernel ridge regression with the order-p truncated RBF kernel, trained in
// its finite intrinsic space of dimension J = C(m+p, p).
struct TrbfModel {
    double sigma = 1;
    int order = 1;
    std::size_t input_dim = 0;
    Vector weights;  // length J
    double lambda = 0;
};

// C(m+p, p); throws NumericError on overflow.
std::size_t trbf_dim(std::size_t m, int p);

// Intrinsic-space image of x: for every multi-index a with |a| <= p (graded,
// then lexicographically descending in a),
//   exp(-|x|^2 / 2 sigma^2) * prod_k (x_k / sigma)^a_k / sqrt(prod_k a_k!)
// so that phi(x).phi(y) = exp(-(|x|^2+|y|^2)/2 sigma^2) sum_{k<=p} (x.y/sigma^2)^k / k!.
Vector trbf_expand(const Eigen::Ref<const Vector>& x, double sigma, int p);
void trbf_expand_into(const Eigen::Ref<const Vector>& x, double sigma, int p, Eigen::Ref<Vector> out);

// The truncated kernel itself, evaluated directly.
double trbf_kernel(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double sigma, int p);

struct TrbfOptions {
    std::size_t max_intrinsic_dim = 20000;
    unsigned threads = 1;
};

TrbfModel train_trbf_krr(const Matrix& x, std::span<const int> y, double sigma, int p, double lambda,
                         const TrbfOptions& opt = {});
Vector predict_trbf(const TrbfModel& model, const Matrix& x, unsigned threads = 1);

// Median pairwise Euclidean distance over a seeded subsample of up to 256
// columns; 1 when that median is 0.
double median_pairwise_distance(const Matrix& x, std::uint64_t seed, std::size_t max_sample = 256);

enum class LearnerType { linear, trbf };

// Non-positive lambda / sigma select the data-scaled defaults:
// lambda = 1e-3 * N, sigma = median pairwise distance.
struct LearnerSpec {
    LearnerType type = LearnerType::linear;
    double lambda = 0;
    double sigma = 0;
    int order = 2;
};

using Model = std::variant<LinearModel, TrbfModel>;

Model train_model(const LearnerSpec& spec, const SubspaceMatrix& x, std::span<const int> y, std::uint64_t seed,
                  const TrbfOptions& trbf = {});
Model train_model(const LearnerSpec& spec, const Matrix& x, std::span<const int> y, std::uint64_t seed,
                  const TrbfOptions& trbf = {});
Vector predict_model(const Model& model, const SubspaceMatrix& x);
Vector predict_model(const Model& model, const Matrix& x, unsigned threads = 1);
std::size_t model_input_dim(const Model& model);

Json model_to_json(const Model& model);
Model model_from_json(const Json& j);

}  // namespace fsdc
