#pragma once

#include <Eigen/Dense>

namespace fsdc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense symmetric matrix. Built from the upper triangle of the input so that
// entries (i,j) and (j,i) are bit-identical.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& a);

    static SymMatrix identity(Eigen::Index n) { return SymMatrix(Matrix::Identity(n, n)); }

    Eigen::Index order() const noexcept { return a_.rows(); }
    const Matrix& dense() const noexcept { return a_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }

private:
    Matrix a_;
};

// Eigenpairs sorted by descending value; column k of `vectors` pairs with
// values[k]. Each vector has its largest-magnitude entry positive (lowest
// index wins ties).
struct EigResult {
    Vector values;
    Matrix vectors;
};

EigResult sym_eig(const SymMatrix& a);

// Solves S v = lambda B v for symmetric S and SPD B via Cholesky reduction.
// Vectors are B-orthonormal. Throws NumericError when B is not positive
// definite; callers should raise their ridge.
EigResult gen_sym_eig(const SymMatrix& s, const SymMatrix& b);

// X with A X = rhs for SPD A. Throws NumericError on Cholesky failure.
Matrix solve_spd(const SymMatrix& a, const Matrix& rhs);

// Flip each column so its largest-magnitude entry is positive.
void canonicalize_signs(Matrix& vectors);

}  // namespace fsdc
