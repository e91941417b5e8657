#include "boostlora/linalg.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace boostlora {

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kOrthTol = 1e-15;

// Deterministically extend the nonzero left singular vectors to a full
// orthonormal set: walk the standard basis, Gram-Schmidt against what is
// already fixed, keep the first candidate with a usable residual.
void complete_basis(Matrix& u, Index first_zero_col) {
    const Index m = u.rows();
    const Index p = u.cols();
    Index next = first_zero_col;
    for (Index q = 0; q < m && next < p; ++q) {
        Vector cand = Vector::Zero(m);
        cand(q) = 1.0;
        for (Index j = 0; j < next; ++j) {
            cand -= u.col(j).dot(cand) * u.col(j);
        }
        const double nrm = cand.norm();
        if (nrm > 0.5) {
            u.col(next) = cand / nrm;
            ++next;
        }
    }
}

// One-sided Jacobi on a tall matrix (rows >= cols). Orthogonalizes the
// columns of a; v accumulates the applied rotations.
void jacobi_sweeps(Matrix& a, Matrix& v, Index rows, Index cols) {
    v = Matrix::Identity(cols, cols);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (Index i = 0; i + 1 < cols; ++i) {
            for (Index j = i + 1; j < cols; ++j) {
                const double alpha = a.col(i).squaredNorm();
                const double beta = a.col(j).squaredNorm();
                const double gamma = a.col(i).dot(a.col(j));
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                if (std::abs(gamma) <= kOrthTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (Index k = 0; k < rows; ++k) {
                    const double ai = a(k, i);
                    const double aj = a(k, j);
                    a(k, i) = c * ai - s * aj;
                    a(k, j) = s * ai + c * aj;
                }
                for (Index k = 0; k < cols; ++k) {
                    const double vi = v(k, i);
                    const double vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
            }
        }
        if (!rotated) {
            return;
        }
    }
    throw NumericalError("svd: one-sided Jacobi did not converge for a " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
}

SvdFactors svd_tall(const Matrix& w) {
    const Index m = w.rows();
    const Index n = w.cols();
    Matrix a = w;
    Matrix v;
    jacobi_sweeps(a, v, m, n);

    Vector sigma(n);
    for (Index j = 0; j < n; ++j) {
        sigma(j) = a.col(j).norm();
    }

    // Sort nonincreasing, ties kept in original column order.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return sigma(x) > sigma(y); });

    SvdFactors f;
    f.u = Matrix(m, n);
    f.v = Matrix(n, n);
    f.sigma = Vector(n);
    for (Index j = 0; j < n; ++j) {
        f.sigma(j) = sigma(order[static_cast<std::size_t>(j)]);
        f.u.col(j) = a.col(order[static_cast<std::size_t>(j)]);
        f.v.col(j) = v.col(order[static_cast<std::size_t>(j)]);
    }

    const double sigma_max = f.sigma.size() > 0 ? f.sigma(0) : 0.0;
    const double zero_tol =
        sigma_max * static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon();
    Index nonzero = 0;
    while (nonzero < n && f.sigma(nonzero) > zero_tol) {
        f.u.col(nonzero) /= f.sigma(nonzero);
        ++nonzero;
    }
    if (nonzero < n) {
        complete_basis(f.u, nonzero);
    }
    return f;
}

void apply_sign_convention(SvdFactors& f) {
    for (Index j = 0; j < f.u.cols(); ++j) {
        Index arg = 0;
        double best = 0.0;
        for (Index i = 0; i < f.u.rows(); ++i) {
            const double mag = std::abs(f.u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (f.u(arg, j) < 0.0) {
            f.u.col(j) = -f.u.col(j);
            f.v.col(j) = -f.v.col(j);
        }
    }
}

} // namespace

SvdFactors svd(const Matrix& w) {
    if (w.rows() < 1 || w.cols() < 1) {
        throw InvalidInputError("svd: matrix must have at least one row and column");
    }
    if (!w.allFinite()) {
        throw InvalidInputError("svd: input contains non-finite entries");
    }
    SvdFactors f;
    if (w.rows() >= w.cols()) {
        f = svd_tall(w);
    } else {
        // W = (W^T)^T: factor the tall transpose and swap the roles of u and v.
        SvdFactors ft = svd_tall(w.transpose());
        f.u = ft.v;
        f.sigma = ft.sigma;
        f.v = ft.u;
    }
    apply_sign_convention(f);
    return f;
}

SvdFactors truncate(const SvdFactors& f, Index offset, Index r) {
    const Index p = f.sigma.size();
    if (offset < 0 || r < 0 || offset + r > p) {
        throw RangeError("truncate: window (offset=" + std::to_string(offset) +
                         ", r=" + std::to_string(r) + ") out of range for p=" + std::to_string(p));
    }
    SvdFactors out;
    out.u = f.u.middleCols(offset, r);
    out.sigma = f.sigma.segment(offset, r);
    out.v = f.v.middleCols(offset, r);
    return out;
}

RankMeasures rank_measures_from_sigma(const Vector& sigma, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw RangeError("rank_measures: epsilon must lie in (0,1), got " + std::to_string(epsilon));
    }
    RankMeasures out;
    out.epsilon = epsilon;
    const double sum = sigma.sum();
    const double sum_sq = sigma.squaredNorm();
    out.frobenius_norm = std::sqrt(sum_sq);
    if (sum_sq == 0.0) {
        return out; // zero matrix: ratio 0, eps_rank 0
    }
    out.participation_ratio = sum * sum / sum_sq;
    const double threshold = epsilon * sigma(0);
    out.eps_rank = (sigma.array() > threshold).count();
    return out;
}

RankMeasures rank_measures(const Matrix& m, double epsilon) {
    if (!m.allFinite()) {
        throw InvalidInputError("rank_measures: input contains non-finite entries");
    }
    RankMeasures out = rank_measures_from_sigma(svd(m).sigma, epsilon);
    out.frobenius_norm = m.norm();
    return out;
}

Index numerical_rank(const Matrix& m, double tol) {
    if (!(tol > 0.0)) {
        throw RangeError("numerical_rank: tol must be positive");
    }
    const Vector sigma = svd(m).sigma;
    if (sigma.size() == 0 || sigma(0) == 0.0) {
        return 0;
    }
    const double threshold = tol * sigma(0) * static_cast<double>(std::max(m.rows(), m.cols()));
    return (sigma.array() > threshold).count();
}

double spectral_norm(const Matrix& m) {
    const Vector sigma = svd(m).sigma;
    return sigma.size() > 0 ? sigma(0) : 0.0;
}

} // namespace boostlora
