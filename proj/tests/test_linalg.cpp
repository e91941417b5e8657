#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>

#include "boostlora/linalg.hpp"
#include "test_util.hpp"

using namespace boostlora;
using testutil::random_matrix;

namespace {

void check_orthonormal_columns(const Matrix& m, double tol) {
    const Matrix gram = m.transpose() * m;
    const Matrix eye = Matrix::Identity(m.cols(), m.cols());
    CHECK((gram - eye).cwiseAbs().maxCoeff() < tol);
}

} // namespace

TEST_CASE("svd of identity has unit spectrum") {
    const Matrix eye = Matrix::Identity(3, 3);
    const SvdFactors f = svd(eye);
    REQUIRE(f.sigma.size() == 3);
    for (Index i = 0; i < 3; ++i) {
        CHECK(f.sigma(i) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("svd of diag(3,0) is rank one") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 3.0;
    const SvdFactors f = svd(m);
    CHECK(f.sigma(0) == doctest::Approx(3.0));
    CHECK(f.sigma(1) == doctest::Approx(0.0));
    check_orthonormal_columns(f.u, 1e-12);
    check_orthonormal_columns(f.v, 1e-12);
    const Matrix rank1 = f.sigma(0) * f.u.col(0) * f.v.col(0).transpose();
    CHECK((rank1 - m).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("svd reconstructs a seeded 8x5 matrix elementwise") {
    const Matrix w = random_matrix(8, 5, 42);
    const SvdFactors f = svd(w);
    const Matrix recon = f.u * f.sigma.asDiagonal() * f.v.transpose();
    CHECK((recon - w).cwiseAbs().maxCoeff() < 1e-10);
    check_orthonormal_columns(f.u, 1e-8);
    check_orthonormal_columns(f.v, 1e-8);
}

TEST_CASE("svd handles wide matrices and zero matrices") {
    const Matrix w = random_matrix(4, 9, 7);
    const SvdFactors f = svd(w);
    REQUIRE(f.sigma.size() == 4);
    CHECK((f.u * f.sigma.asDiagonal() * f.v.transpose() - w).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix z = Matrix::Zero(3, 4);
    const SvdFactors fz = svd(z);
    CHECK(fz.sigma.maxCoeff() == 0.0);
    check_orthonormal_columns(fz.u, 1e-12);
}

TEST_CASE("svd spectrum agrees with Eigen's JacobiSVD") {
    // Independent route: Eigen's two-sided Jacobi as the spectrum oracle.
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const Index rows = 3 + static_cast<Index>(seed % 7);
        const Index cols = 2 + static_cast<Index>((seed * 13) % 8);
        const Matrix w = random_matrix(rows, cols, seed);
        const SvdFactors f = svd(w);
        Eigen::JacobiSVD<Eigen::MatrixXd> ref(w);
        const Vector expected = ref.singularValues();
        REQUIRE(f.sigma.size() == expected.size());
        for (Index i = 0; i < expected.size(); ++i) {
            CHECK(f.sigma(i) == doctest::Approx(expected(i)).epsilon(1e-10));
        }
    }
}

TEST_CASE("svd is deterministic to the bit") {
    const Matrix w = random_matrix(9, 6, 11);
    const SvdFactors a = svd(w);
    const SvdFactors b = svd(w);
    CHECK(testutil::bit_identical(a.u, b.u));
    CHECK(testutil::bit_identical(a.v, b.v));
    for (Index i = 0; i < a.sigma.size(); ++i) {
        CHECK(a.sigma(i) == b.sigma(i));
    }
}

TEST_CASE("svd sign convention pins the largest-magnitude u entry positive") {
    const Matrix w = random_matrix(6, 6, 99);
    const SvdFactors f = svd(w);
    for (Index j = 0; j < f.u.cols(); ++j) {
        Index arg;
        f.u.col(j).cwiseAbs().maxCoeff(&arg);
        CHECK(f.u(arg, j) > 0.0);
    }
}

TEST_CASE("svd rejects non-finite input") {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svd(w), InvalidInputError);
}

TEST_CASE("truncate windows the factors") {
    const Matrix w = random_matrix(8, 8, 5);
    const SvdFactors f = svd(w);

    SUBCASE("top window") {
        const SvdFactors t = truncate(f, 0, 2);
        CHECK(t.sigma.size() == 2);
        CHECK(t.sigma(0) == f.sigma(0));
        CHECK(t.u.col(1) == f.u.col(1));
    }
    SUBCASE("rotate window for round 3 at r=2 covers columns 5-6 (1-indexed)") {
        const SvdFactors t = truncate(f, 4, 2);
        CHECK(t.sigma(0) == f.sigma(4));
        CHECK(t.sigma(1) == f.sigma(5));
        CHECK(t.u.col(0) == f.u.col(4));
    }
    SUBCASE("full window is the identity operation") {
        const SvdFactors t = truncate(f, 0, f.sigma.size());
        CHECK(testutil::bit_identical(t.u, f.u));
        CHECK(testutil::bit_identical(t.v, f.v));
    }
    SUBCASE("out-of-range window names the offsets") {
        CHECK_THROWS_WITH_AS(truncate(f, 7, 2),
                             "truncate: window (offset=7, r=2) out of range for p=8", RangeError);
    }
}

TEST_CASE("Eckart-Young: truncation error equals the tail spectrum") {
    const Matrix w = random_matrix(10, 7, 123);
    const SvdFactors f = svd(w);
    for (Index r = 1; r < 7; ++r) {
        const SvdFactors t = truncate(f, 0, r);
        const Matrix approx = t.u * t.sigma.asDiagonal() * t.v.transpose();
        const double err = (w - approx).norm();
        const double tail = std::sqrt(f.sigma.tail(f.sigma.size() - r).squaredNorm());
        CHECK(err == doctest::Approx(tail).epsilon(1e-8));
    }
}

TEST_CASE("disjoint truncate windows have orthogonal column spaces") {
    const Matrix w = random_matrix(12, 12, 77);
    const SvdFactors f = svd(w);
    const SvdFactors a = truncate(f, 0, 3);
    const SvdFactors b = truncate(f, 3, 4);
    const SvdFactors c = truncate(f, 7, 5);
    CHECK((a.u.transpose() * b.u).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.u.transpose() * c.u).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((b.u.transpose() * c.u).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("participation ratio hits its one and min(d,k) extremes") {
    Matrix rank1 = Matrix::Zero(3, 3);
    rank1(0, 0) = 5.0;
    CHECK(rank_measures(rank1, 0.01).participation_ratio == doctest::Approx(1.0));

    const Matrix eye = Matrix::Identity(3, 3);
    CHECK(rank_measures(eye, 0.01).participation_ratio == doctest::Approx(3.0));
}

TEST_CASE("eps rank counts singular values above the relative threshold") {
    Matrix m = Matrix::Zero(3, 3);
    m(0, 0) = 10.0;
    m(1, 1) = 0.5;
    m(2, 2) = 0.05;
    const RankMeasures rm = rank_measures(m, 0.01); // threshold 0.1
    CHECK(rm.eps_rank == 2);
    CHECK(rm.frobenius_norm == doctest::Approx(m.norm()));
}

TEST_CASE("rank measures of the zero matrix are zero") {
    const RankMeasures rm = rank_measures(Matrix::Zero(4, 2), 0.01);
    CHECK(rm.participation_ratio == 0.0);
    CHECK(rm.eps_rank == 0);
    CHECK(rm.frobenius_norm == 0.0);
}

TEST_CASE("rank measures are scale invariant") {
    const Matrix m = random_matrix(6, 4, 31);
    const RankMeasures base = rank_measures(m, 0.01);
    for (double c : {0.001, 0.5, 3.0, 1e6}) {
        const RankMeasures scaled = rank_measures(Matrix(c * m), 0.01);
        CHECK(scaled.participation_ratio == doctest::Approx(base.participation_ratio).epsilon(1e-10));
        CHECK(scaled.eps_rank == base.eps_rank);
    }
}

TEST_CASE("rank_measures rejects epsilon outside (0,1)") {
    const Matrix m = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(rank_measures(m, 0.0), RangeError);
    CHECK_THROWS_AS(rank_measures(m, 1.0), RangeError);
}

TEST_CASE("numerical rank on constructed cases") {
    CHECK(numerical_rank(Matrix::Zero(5, 5)) == 0);

    const Vector a = testutil::random_vector(6, 1);
    const Vector b = testutil::random_vector(4, 2);
    const Matrix outer = a * b.transpose();
    CHECK(numerical_rank(outer) == 1);
}

TEST_CASE("ranks add across orthogonal-column deltas") {
    // Four rank-2 deltas drawn from disjoint windows of one spectrum.
    const Matrix w = random_matrix(16, 16, 2024);
    const SvdFactors f = svd(w);
    Matrix sum = Matrix::Zero(16, 16);
    for (Index t = 0; t < 4; ++t) {
        const SvdFactors win = truncate(f, 2 * t, 2);
        const Matrix r = random_matrix(2, 2, 100 + static_cast<std::uint64_t>(t));
        sum += win.u * win.sigma.asDiagonal() * r * win.v.transpose();
    }
    CHECK(numerical_rank(sum) == 8);
}

TEST_CASE("frobenius norm basics") {
    CHECK(frobenius(Matrix::Zero(3, 3)) == 0.0);
    CHECK(frobenius(Matrix::Identity(4, 4)) == doctest::Approx(2.0));
    Matrix m(1, 2);
    m << 3.0, 4.0;
    CHECK(frobenius(m) == doctest::Approx(5.0));
    // expression-friendly: no materialization needed
    CHECK(frobenius(m * 2.0) == doctest::Approx(10.0));
}

TEST_CASE("spectral norm is the top singular value") {
    const Matrix w = random_matrix(5, 3, 8);
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(w);
    CHECK(spectral_norm(w) == doctest::Approx(ref.singularValues()(0)).epsilon(1e-10));
}
