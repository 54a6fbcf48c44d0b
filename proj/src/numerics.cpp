#include "fsdc/numerics.hpp"

#include "fsdc/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace fsdc {

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + " has non-finite entries");
}

// Eigen returns ascending order; reverse to descending and fix signs.
EigResult descending(const Vector& values, const Matrix& vectors) {
    const Eigen::Index n = values.size();
    EigResult r{Vector(n), Matrix(vectors.rows(), n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        r.values(k) = values(n - 1 - k);
        r.vectors.col(k) = vectors.col(n - 1 - k);
    }
    canonicalize_signs(r.vectors);
    return r;
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("symmetric matrix must be square");
    a_ = a.triangularView<Eigen::Upper>();
    a_.triangularView<Eigen::StrictlyLower>() = a_.transpose();
}

void canonicalize_signs(Matrix& vectors) {
    for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
        auto col = vectors.col(k);
        double best = 0.0;
        for (Eigen::Index i = 0; i < col.size(); ++i) best = std::max(best, std::abs(col(i)));
        // Entries within a few ulps of the maximum count as tied.
        const double cut = best * (1.0 - 1e-12);
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::abs(col(i)) >= cut) {
                if (col(i) < 0) col = -col;
                break;
            }
        }
    }
}

EigResult sym_eig(const SymMatrix& a) {
    if (a.order() < 1) throw DimensionError("sym_eig on empty matrix");
    require_finite(a.dense(), "sym_eig input");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.dense(), Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");
    return descending(es.eigenvalues(), es.eigenvectors());
}

EigResult gen_sym_eig(const SymMatrix& s, const SymMatrix& b) {
    if (s.order() != b.order()) throw DimensionError("gen_sym_eig: order mismatch");
    require_finite(s.dense(), "gen_sym_eig S");
    require_finite(b.dense(), "gen_sym_eig B");
    Eigen::LLT<Matrix> llt(b.dense());
    if (llt.info() != Eigen::Success)
        throw NumericError("gen_sym_eig: B is not positive definite; increase the ridge");
    const auto l = llt.matrixL();
    // C = L^-1 S L^-T
    Matrix tmp = l.solve(s.dense());
    Matrix c = l.solve(tmp.transpose());
    EigResult std_form = sym_eig(SymMatrix(c));
    // v = L^-T y keeps v_i^T B v_j = y_i^T y_j.
    Matrix v = llt.matrixU().solve(std_form.vectors);
    canonicalize_signs(v);
    return {std_form.values, v};
}

Matrix solve_spd(const SymMatrix& a, const Matrix& rhs) {
    if (rhs.rows() != a.order()) throw DimensionError("solve_spd: rhs rows do not match matrix order");
    require_finite(a.dense(), "solve_spd matrix");
    Eigen::LLT<Matrix> llt(a.dense());
    if (llt.info() != Eigen::Success) throw NumericError("solve_spd: matrix is not positive definite");
    Matrix x = llt.solve(rhs);
    // One step of iterative refinement pulls the residual to ~machine precision.
    Matrix r = rhs - a.dense() * x;
    x += llt.solve(r);
    return x;
}

}  // namespace fsdc
