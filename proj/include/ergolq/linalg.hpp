#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "ergolq/errors.hpp"

// Dense symmetric-matrix utilities shared by the solvers: Loewner-order
// comparison, SPD solves with N = I + sum_i (D^i)' P D^i, the vectorized
// second-moment (generalized Lyapunov) solve, and the mean-square
// stability spectral test for M -> H M + M H' + sum_i K^i M (K^i)'.

namespace ergolq {

inline constexpr double kSymTol = 1e-12;
inline constexpr int kMaxSpectralOrder = 16; // n^2 <= 256 for the dense operator

inline double asymmetry(const Eigen::MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

inline void require_square(const Eigen::MatrixXd& m, const std::string& name) {
    if (m.rows() != m.cols()) {
        throw StructuralError(name + " is not square: " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
    }
}

inline void require_symmetric(const Eigen::MatrixXd& m, const std::string& name,
                              double tol = kSymTol) {
    require_square(m, name);
    const double a = m.size() == 0 ? 0.0 : asymmetry(m);
    if (!(a <= tol)) {
        throw StructuralError(name + " is not symmetric: max |m_ij - m_ji| = " +
                              std::to_string(a));
    }
}

// Smallest eigenvalue of a symmetric matrix (input symmetrized first).
inline double min_eigenvalue(const Eigen::MatrixXd& m) {
    require_square(m, "matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(m),
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// P1 <= P2 in the Loewner order, up to an absolute eigenvalue slack:
// true iff min eig(P2 - P1) >= -tol.
inline bool loewner_leq(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2, double tol) {
    if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) {
        throw StructuralError("loewner_leq: order mismatch " + std::to_string(p1.rows()) +
                              " vs " + std::to_string(p2.rows()));
    }
    return min_eigenvalue(p2 - p1) >= -tol;
}

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& n) {
    require_symmetric(n, "N", 1e-9);
    const double lo = min_eigenvalue(n);
    if (lo < 0.5) {
        throw SolverError("spd_solve: N min eigenvalue " + std::to_string(lo) +
                          " < 0.5 (corrupted Riccati state: P lost positive "
                          "semidefiniteness upstream)");
    }
    return Eigen::LLT<Eigen::MatrixXd>(symmetrized(n));
}

} // namespace detail

// Solve N w = v for N = I + PSD term. One refinement pass keeps the
// residual below 1e-10 * |v|.
inline Eigen::VectorXd spd_solve(const Eigen::MatrixXd& n, const Eigen::VectorXd& v) {
    if (n.rows() != v.size()) {
        throw StructuralError("spd_solve: size mismatch");
    }
    auto llt = detail::checked_llt(n);
    Eigen::VectorXd w = llt.solve(v);
    w += llt.solve(v - n * w);
    const double res = (n * w - v).norm();
    if (!(res <= 1e-10 * v.norm() + 1e-300)) {
        throw SolverError("spd_solve: residual " + std::to_string(res) + " exceeds bound");
    }
    return w;
}

// Matrix right-hand-side overload: returns N^{-1} R.
inline Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& n, const Eigen::MatrixXd& rhs) {
    if (n.rows() != rhs.rows()) {
        throw StructuralError("spd_solve: size mismatch");
    }
    auto llt = detail::checked_llt(n);
    Eigen::MatrixXd w = llt.solve(rhs);
    w += llt.solve(rhs - n * w);
    return w;
}

namespace detail {

// Dense n^2 x n^2 representation of M -> H M + M H' + sum_i K^i M (K^i)'
// in the column-stacking convention: vec(HM) = (I (x) H) vec M,
// vec(M H') = (H (x) I) vec M, vec(K M K') = (K (x) K) vec M.
inline Eigen::MatrixXd meansquare_operator(const Eigen::MatrixXd& h,
                                           const std::vector<Eigen::MatrixXd>& ks) {
    require_square(h, "H");
    const Eigen::Index n = h.rows();
    if (n > kMaxSpectralOrder) {
        throw StructuralError("mean-square operator: order " + std::to_string(n) +
                              " exceeds cap " + std::to_string(kMaxSpectralOrder));
    }
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd op = Eigen::kroneckerProduct(id, h).eval() +
                         Eigen::kroneckerProduct(h, id).eval();
    for (const auto& k : ks) {
        if (k.rows() != n || k.cols() != n) {
            throw StructuralError("mean-square operator: K order mismatch");
        }
        op += Eigen::kroneckerProduct(k, k).eval();
    }
    return op;
}

} // namespace detail

// Spectral abscissa (max real part of the spectrum) of the second-moment
// operator; a negative value certifies mean-square exponential stability
// with at least that decay rate.
inline double meansquare_abscissa(const Eigen::MatrixXd& h,
                                  const std::vector<Eigen::MatrixXd>& ks) {
    const Eigen::MatrixXd op = detail::meansquare_operator(h, ks);
    Eigen::EigenSolver<Eigen::MatrixXd> es(op, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

// Solve H M + M H' + sum_i K^i M (K^i)' + RHS = 0 through the vectorized
// n^2-dimensional linear system. Requires the operator to be invertible,
// i.e. the closed loop to be mean-square stable.
inline Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& h,
                                      const std::vector<Eigen::MatrixXd>& ks,
                                      const Eigen::MatrixXd& rhs) {
    require_symmetric(rhs, "RHS", 1e-9);
    if (rhs.rows() != h.rows()) {
        throw StructuralError("lyapunov_solve: RHS order mismatch");
    }
    const Eigen::Index n = h.rows();
    const Eigen::MatrixXd op = detail::meansquare_operator(h, ks);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(op);
    if (!lu.isInvertible()) {
        throw StabilityError("lyapunov_solve: singular second-moment operator "
                             "(not mean-square stable)");
    }
    Eigen::VectorXd b = -Eigen::Map<const Eigen::VectorXd>(rhs.data(), n * n);
    Eigen::VectorXd x = lu.solve(b);
    Eigen::MatrixXd m = symmetrized(Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n));
    Eigen::MatrixXd residual = h * m + m * h.transpose() + rhs;
    for (const auto& k : ks) residual += k * m * k.transpose();
    if (!(residual.norm() <= 1e-9 * (rhs.norm() + 1.0))) {
        throw StabilityError("lyapunov_solve: residual " + std::to_string(residual.norm()) +
                             " too large (not mean-square stable)");
    }
    return m;
}

} // namespace ergolq
