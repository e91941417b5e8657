#ifndef BOOSTLORA_LINALG_HPP
#define BOOSTLORA_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>

#include "boostlora/errors.hpp"

namespace boostlora {

/// Row-major dense carrier for weights, deltas and activations.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Full SVD of a d x k matrix: u is d x p, v is k x p, sigma has length
/// p = min(d, k) and is sorted nonincreasing. u * sigma.asDiagonal() * v^T
/// reconstructs the input.
struct SvdFactors {
    Matrix u;
    Vector sigma;
    Matrix v;

    Index rank_window() const { return sigma.size(); }
};

/// Effective-rank diagnostics of a matrix spectrum.
struct RankMeasures {
    double participation_ratio = 0.0; ///< (sum sigma)^2 / sum sigma^2; 0 for the zero matrix
    Index eps_rank = 0;               ///< count of sigma_i > epsilon * sigma_1
    double epsilon = 0.01;
    double frobenius_norm = 0.0;
};

/// Frobenius norm, usable on any Eigen expression.
template <typename Derived>
double frobenius(const Eigen::MatrixBase<Derived>& m) {
    return m.norm();
}

/// Full SVD via one-sided Jacobi. Deterministic: fixed sweep order and a
/// fixed sign convention (largest-magnitude entry of each u column is
/// positive). Columns with zero singular value get a deterministic
/// orthonormal completion so u always has orthonormal columns.
///
/// Throws InvalidInputError on non-finite input and NumericalError if the
/// sweeps do not converge.
SvdFactors svd(const Matrix& w);

/// Columns [offset, offset + r) of the factors, preserving order.
/// Throws RangeError when the window exceeds the available p columns.
SvdFactors truncate(const SvdFactors& f, Index offset, Index r);

/// Participation ratio and epsilon-rank of m. epsilon must lie in (0, 1).
RankMeasures rank_measures(const Matrix& m, double epsilon = 0.01);

/// Same measures computed from an already available spectrum.
RankMeasures rank_measures_from_sigma(const Vector& sigma, double epsilon);

/// Count of singular values above tol * sigma_1 * max(rows, cols); the
/// machine-rank convention used to verify exact rank claims.
Index numerical_rank(const Matrix& m, double tol = 1e-12);

/// Largest singular value.
double spectral_norm(const Matrix& m);

} // namespace boostlora

#endif // BOOSTLORA_LINALG_HPP
