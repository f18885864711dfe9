#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/errors.hpp"
#include "ergolq/model.hpp"

// Uniform grid over the factor state space plus the discretized factor
// generator L = (1/2) sigma^2 d_yy + kappa (level - y) d_y with the
// linear-extrapolation boundary condition d_yy = 0 at both edges. The
// implicit-explicit steppers of the Riccati and costate marches share
// this discretization.

namespace ergolq {

inline constexpr int kDefaultGridNodes = 129;
inline constexpr double kDefaultGridSds = 6.0;

struct FactorGrid {
    double y_lo = 0.0;
    double y_hi = 0.0;
    int m = 0;

    double h() const { return (y_hi - y_lo) / (m - 1); }
    double node(int i) const { return y_lo + h() * i; }

    void check() const {
        if (m < 9) throw ParameterError("FactorGrid: m must be >= 9, got " + std::to_string(m));
        if (!(y_lo < y_hi)) throw ParameterError("FactorGrid: y_lo must be < y_hi");
    }
};

// Default span: factor mean +- 6 stationary standard deviations.
inline FactorGrid default_factor_grid(const FactorDynamics& fd, int m = kDefaultGridNodes,
                                      double n_sd = kDefaultGridSds) {
    const auto [mean, var] = factor_stationary_law(fd);
    const double sd = std::sqrt(var);
    FactorGrid g{mean - n_sd * sd, mean + n_sd * sd, m};
    g.check();
    return g;
}

// Per-node scalar fields; matrix- and vector-valued fields are stored as
// one Eigen object per node.
using MatField = std::vector<Eigen::MatrixXd>;
using VecField = std::vector<Eigen::VectorXd>;

// First derivative in y: central differences inside, one-sided at the
// edges (the one-sided stencil equals the central one under the ghost
// convention p_{-1} = 2 p_0 - p_1 implied by d_yy = 0).
template <class Field>
Field central_diff(const Field& p, double h) {
    const int m = static_cast<int>(p.size());
    Field out(m);
    out[0] = (p[1] - p[0]) / h;
    out[m - 1] = (p[m - 1] - p[m - 2]) / h;
    for (int i = 1; i + 1 < m; ++i) out[i] = (p[i + 1] - p[i - 1]) / (2.0 * h);
    return out;
}

template <class Field>
Field second_diff(const Field& p, double h) {
    const int m = static_cast<int>(p.size());
    Field out(m);
    out[0] = 0.0 * p[0];
    out[m - 1] = 0.0 * p[m - 1];
    for (int i = 1; i + 1 < m; ++i) out[i] = (p[i + 1] - 2.0 * p[i] + p[i - 1]) / (h * h);
    return out;
}

// Tridiagonal representation of the factor generator on the grid.
class OuGenerator {
public:
    OuGenerator(const FactorGrid& grid, const FactorDynamics& fd) : m_(grid.m) {
        grid.check();
        const double h = grid.h();
        const double diff = 0.5 * fd.sigma * fd.sigma / (h * h);
        lower_.assign(m_, 0.0);
        diag_.assign(m_, 0.0);
        upper_.assign(m_, 0.0);
        for (int i = 1; i + 1 < m_; ++i) {
            const double adv = fd.kappa * (fd.level - grid.node(i)) / (2.0 * h);
            lower_[i] = diff - adv;
            diag_[i] = -2.0 * diff;
            upper_[i] = diff + adv;
        }
        // d_yy = 0 at the edges leaves pure one-sided advection rows.
        const double a0 = fd.kappa * (fd.level - grid.node(0)) / h;
        diag_[0] = -a0;
        upper_[0] = a0;
        const double am = fd.kappa * (fd.level - grid.node(m_ - 1)) / h;
        lower_[m_ - 1] = -am;
        diag_[m_ - 1] = am;
    }

    int size() const { return m_; }

    // out_i = (L v)_i for one scalar channel over the nodes.
    void apply(const std::vector<double>& v, std::vector<double>& out) const {
        out.resize(m_);
        out[0] = diag_[0] * v[0] + upper_[0] * v[1];
        for (int i = 1; i + 1 < m_; ++i) {
            out[i] = lower_[i] * v[i - 1] + diag_[i] * v[i] + upper_[i] * v[i + 1];
        }
        out[m_ - 1] = lower_[m_ - 1] * v[m_ - 2] + diag_[m_ - 1] * v[m_ - 1];
    }

    const std::vector<double>& lower() const { return lower_; }
    const std::vector<double>& diag() const { return diag_; }
    const std::vector<double>& upper() const { return upper_; }

private:
    int m_;
    std::vector<double> lower_, diag_, upper_;
};

// Thomas factorization of (I - dt L); solves one scalar channel per call.
class ImexSolver {
public:
    ImexSolver(const OuGenerator& gen, double dt) : m_(gen.size()) {
        lower_.resize(m_);
        cprime_.resize(m_);
        dinv_.resize(m_);
        std::vector<double> diag(m_), upper(m_);
        for (int i = 0; i < m_; ++i) {
            lower_[i] = -dt * gen.lower()[i];
            diag[i] = 1.0 - dt * gen.diag()[i];
            upper[i] = -dt * gen.upper()[i];
        }
        double den = diag[0];
        dinv_[0] = 1.0 / den;
        cprime_[0] = upper[0] * dinv_[0];
        for (int i = 1; i < m_; ++i) {
            den = diag[i] - lower_[i] * cprime_[i - 1];
            if (den == 0.0) throw SolverError("ImexSolver: singular tridiagonal system");
            dinv_[i] = 1.0 / den;
            cprime_[i] = upper[i] * dinv_[i];
        }
    }

    // In place: rhs := (I - dt L)^{-1} rhs.
    void solve(std::vector<double>& rhs) const {
        rhs[0] *= dinv_[0];
        for (int i = 1; i < m_; ++i) {
            rhs[i] = (rhs[i] - lower_[i] * rhs[i - 1]) * dinv_[i];
        }
        for (int i = m_ - 2; i >= 0; --i) {
            rhs[i] -= cprime_[i] * rhs[i + 1];
        }
    }

private:
    int m_;
    std::vector<double> lower_, cprime_, dinv_;
};

// Expectation of a grid function against the factor's stationary Gaussian
// density, truncated to the grid span and renormalized; trapezoid rule.
inline double stationary_expectation(const FactorGrid& grid, const FactorDynamics& fd,
                                     const std::vector<double>& values) {
    if (static_cast<int>(values.size()) != grid.m) {
        throw StructuralError("stationary_expectation: value count != grid nodes");
    }
    const auto [mean, var] = factor_stationary_law(fd);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < grid.m; ++i) {
        const double y = grid.node(i);
        const double w = (i == 0 || i == grid.m - 1) ? 0.5 : 1.0;
        const double dens = std::exp(-0.5 * (y - mean) * (y - mean) / var);
        num += w * dens * values[i];
        den += w * dens;
    }
    return num / den;
}

} // namespace ergolq
