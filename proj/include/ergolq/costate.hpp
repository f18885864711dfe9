#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/errors.hpp"
#include "ergolq/grid.hpp"
#include "ergolq/linalg.hpp"
#include "ergolq/model.hpp"
#include "ergolq/riccati.hpp"

// Stationary dual (costate) pair (r, g) for the affine part of the value
// function. Constant case: H' r + P f = 0 solved directly. Field case:
// stationary point of
//   (1/2) sigma^2 rho'' + kappa (level - y) rho' + H(y)' rho + p(y) f(y)
//     + sum_i (K^i(y))' g^i(y) = 0,   g^{drive} = sigma rho',
// reached by the same implicit-explicit march as the Riccati field solver.
// A spectral shift (used by the discounted problem, where the shifted dual
// satisfies (H' - alpha I) r + P f = 0) threads through both paths.

namespace ergolq {

inline constexpr double kMaxDualHorizon = 4096.0;

struct CostateSolution {
    Rep rep = Rep::kConstant;
    VecField r; // one entry (constant) or one per grid node
    std::optional<FactorGrid> grid;
    std::optional<FactorDynamics> factor;

    int nodes() const { return static_cast<int>(r.size()); }

    // Martingale-density component at the driving index, sigma * dr/dy.
    VecField g_drive() const {
        if (rep == Rep::kConstant) return VecField{Eigen::VectorXd::Zero(r[0].size())};
        VecField g = central_diff(r, grid->h());
        for (auto& v : g) v *= factor->sigma;
        return g;
    }
};

namespace detail {

inline double spectral_abscissa(const Eigen::MatrixXd& m) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

// Shared solver: shift = 0 gives the plain stationary dual, shift = alpha
// the discounted (rescaled) one.
inline CostateSolution stationary_dual_solve(const ProblemSpec& spec,
                                             const RiccatiSolution& sol, const GainSet& gs,
                                             double shift, double tol, double dt) {
    if (!(tol > 0.0) || !(dt > 0.0)) {
        throw ParameterError("stationary_dual_solve: tol and dt must be > 0");
    }
    CostateSolution cs;
    cs.rep = sol.rep;
    cs.grid = sol.grid;
    cs.factor = sol.factor;

    if (sol.rep == Rep::kConstant) {
        const auto snap = eval_coefficients(spec.model, 0.0);
        const Eigen::MatrixXd mat =
            gs.H[0].transpose() - shift * Eigen::MatrixXd::Identity(spec.dims.n, spec.dims.n);
        if (spectral_abscissa(mat) >= 0.0) {
            throw StabilityError("stationary costate: closed loop not stable "
                                 "(H' spectral abscissa >= shift)");
        }
        cs.r.push_back(Eigen::FullPivLU<Eigen::MatrixXd>(mat).solve(
            Eigen::VectorXd(-sol.P[0] * snap.f)));
        return cs;
    }

    const FactorGrid& grid = *sol.grid;
    const FactorDynamics& fd = *sol.factor;
    const int m = grid.m;
    const int drive = fd.drive_index - 1;
    const double h = grid.h();

    std::vector<Eigen::VectorXd> pf(m);  // P(y) f(y) source per node
    for (int i = 0; i < m; ++i) {
        const auto snap = eval_coefficients(spec.model, grid.node(i));
        pf[i] = sol.P[i] * snap.f;
    }

    OuGenerator gen(grid, fd);
    ImexSolver imex(gen, dt);
    VecField rho(m, Eigen::VectorXd::Zero(spec.dims.n));
    std::vector<double> channel(m);
    double tau = 0.0;
    while (tau < kMaxDualHorizon) {
        const VecField drho = central_diff(rho, h);
        VecField rhs(m);
        for (int i = 0; i < m; ++i) {
            Eigen::VectorXd drift = gs.H[i].transpose() * rho[i] - shift * rho[i] + pf[i];
            drift += gs.K[i][drive].transpose() * (fd.sigma * drho[i]);
            rhs[i] = rho[i] + dt * drift;
        }
        double change = 0.0;
        for (Eigen::Index c = 0; c < spec.dims.n; ++c) {
            for (int i = 0; i < m; ++i) channel[i] = rhs[i](c);
            imex.solve(channel);
            for (int i = 0; i < m; ++i) {
                change = std::max(change, std::abs(channel[i] - rho[i](c)));
                rho[i](c) = channel[i];
            }
        }
        tau += dt;
        if (change / dt < tol) {
            cs.r = std::move(rho);
            return cs;
        }
    }
    throw SolverError("stationary costate: field march did not converge within horizon " +
                      std::to_string(kMaxDualHorizon));
}

} // namespace detail

// tol is a rate tolerance: the march stops once the sup-node change per
// unit time drops below it, which bounds the stationary residual directly.
inline CostateSolution solve_stationary_costate(const ProblemSpec& spec,
                                                const RiccatiSolution& sol, const GainSet& gs,
                                                double tol = 1e-8, double dt = 1e-3) {
    return detail::stationary_dual_solve(spec, sol, gs, 0.0, tol, dt);
}

// Stationarity residual of the dual field (max over interior nodes);
// constant case: |H' r + P f|.
inline double costate_residual(const ProblemSpec& spec, const RiccatiSolution& sol,
                               const GainSet& gs, const CostateSolution& cs,
                               double shift = 0.0) {
    if (cs.rep == Rep::kConstant) {
        const auto snap = eval_coefficients(spec.model, 0.0);
        return (gs.H[0].transpose() * cs.r[0] - shift * cs.r[0] + sol.P[0] * snap.f).norm();
    }
    const FactorGrid& grid = *cs.grid;
    const FactorDynamics& fd = *cs.factor;
    const double h = grid.h();
    const int drive = fd.drive_index - 1;
    const VecField dr = central_diff(cs.r, h);
    const VecField d2r = second_diff(cs.r, h);
    double worst = 0.0;
    for (int i = 1; i + 1 < grid.m; ++i) {
        const double y = grid.node(i);
        const auto snap = eval_coefficients(spec.model, y);
        Eigen::VectorXd res = 0.5 * fd.sigma * fd.sigma * d2r[i] +
                              fd.kappa * (fd.level - y) * dr[i] +
                              gs.H[i].transpose() * cs.r[i] - shift * cs.r[i] +
                              sol.P[i] * snap.f;
        res += gs.K[i][drive].transpose() * (fd.sigma * dr[i]);
        worst = std::max(worst, res.norm());
    }
    return worst;
}

// Affine component of the optimal control,
//   u_aff = -N^{-1} (B' r + sum_i (D^i)' g^i)   per node.
inline VecField affine_term(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const GainSet& gs, const CostateSolution& cs) {
    (void)sol;
    const int m = cs.nodes();
    if (gs.nodes() != m) throw StructuralError("affine_term: gain/costate node mismatch");
    const VecField g = cs.g_drive();
    const int drive = cs.factor ? cs.factor->drive_index - 1 : 0;
    VecField out(m);
    for (int v = 0; v < m; ++v) {
        const double y = cs.rep == Rep::kField ? cs.grid->node(v) : 0.0;
        const auto snap = eval_coefficients(spec.model, y);
        Eigen::VectorXd vvec = snap.B.transpose() * cs.r[v];
        for (int i = 0; i < spec.dims.d; ++i) {
            if (cs.rep == Rep::kField && i == drive) {
                vvec += snap.D[i].transpose() * g[v];
            }
        }
        out[v] = -spd_solve(gs.N[v], vvec);
    }
    return out;
}

// Sanity band from the stable resolvent: max-node |r| against
// 10 * |P| * |f| / |decay rate|. Diagnostic, not enforced by the solver.
inline bool costate_within_band(const ProblemSpec& spec, const RiccatiSolution& sol,
                                const GainSet& gs, const CostateSolution& cs,
                                double* band_out = nullptr) {
    double p_norm = 0.0, f_norm = 0.0, r_norm = 0.0;
    for (int v = 0; v < cs.nodes(); ++v) {
        const double y = cs.rep == Rep::kField ? cs.grid->node(v) : 0.0;
        const auto snap = eval_coefficients(spec.model, y);
        p_norm = std::max(p_norm, sol.P[v].norm());
        f_norm = std::max(f_norm, snap.f.norm());
        r_norm = std::max(r_norm, cs.r[v].norm());
    }
    double rate = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < gs.nodes(); ++v) {
        rate = std::max(rate, detail::spectral_abscissa(gs.H[v]));
    }
    if (!(rate < 0.0)) return false;
    const double band = 10.0 * p_norm * f_norm / std::abs(rate);
    if (band_out) *band_out = band;
    return r_norm <= band;
}

} // namespace ergolq
