#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/closedloop.hpp"
#include "ergolq/costate.hpp"
#include "ergolq/errors.hpp"
#include "ergolq/grid.hpp"
#include "ergolq/model.hpp"
#include "ergolq/riccati.hpp"
#include "ergolq/simulate.hpp"

// Discounted problem and the vanishing-discount limit. Discounting at
// rate 2 alpha is absorbed into the drift shift A -> A - alpha I; the
// optimal discounted cost then has the closed form
//   J*_alpha(x) = <P^a x, x> + 2 <r~^a, x>
//                 + (1 / 2 alpha) (2 E<r~^a, f> - E<(N^a)^{-1* v~, v~>)
// with r~^a the stationary shifted costate and v~ = B' r~ + sum (D^i)' g~.
// 2 alpha J*_alpha converges, independently of x, to the stationary
// optimal cost
//   J_stat = 2 E<r, f> - E<N^{-1} v, v>.

namespace ergolq {

struct SolverOptions {
    double riccati_tol = 1e-9;
    double costate_tol = 1e-9;
    double dt = 1e-3;
    std::optional<FactorGrid> grid;
};

// Drift shift A -> A - alpha I; in the factor family the shift lands on
// the base of each diagonal A entry.
inline ProblemSpec discounted_spec(const ProblemSpec& spec, double alpha) {
    if (alpha < 0.0) throw ParameterError("discounted_spec: alpha must be >= 0");
    ProblemSpec out = spec;
    if (auto* cc = std::get_if<ConstantCoeffs>(&out.model)) {
        cc->A -= alpha * Eigen::MatrixXd::Identity(spec.dims.n, spec.dims.n);
    } else {
        auto& fc = std::get<FactorCoeffs>(out.model);
        for (int i = 0; i < spec.dims.n; ++i) fc.A.at(i, i).base -= alpha;
    }
    return out;
}

namespace detail {

// 2 <r, f> - <N^{-1} v, v> with v = B' r + sum_i (D^i)' g^i, per node.
inline std::vector<double> cost_density(const ProblemSpec& spec, const RiccatiSolution& sol,
                                        const CostateSolution& cs) {
    const int m = cs.nodes();
    const VecField g = cs.g_drive();
    const int drive = cs.factor ? cs.factor->drive_index - 1 : 0;
    std::vector<double> out(m);
    for (int v = 0; v < m; ++v) {
        const double y = cs.rep == Rep::kField ? cs.grid->node(v) : 0.0;
        const auto snap = eval_coefficients(spec.model, y);
        const Eigen::Index k = snap.B.cols();
        Eigen::MatrixXd nmat = Eigen::MatrixXd::Identity(k, k);
        for (int i = 0; i < spec.dims.d; ++i) {
            nmat += snap.D[i].transpose() * sol.P[v] * snap.D[i];
        }
        Eigen::VectorXd vvec = snap.B.transpose() * cs.r[v];
        for (int i = 0; i < spec.dims.d; ++i) {
            if (cs.rep == Rep::kField && i == drive) {
                vvec += snap.D[i].transpose() * g[v];
            }
        }
        out[v] = 2.0 * cs.r[v].dot(snap.f) - vvec.dot(spd_solve(nmat, vvec));
    }
    return out;
}

} // namespace detail

// Stationary optimal cost from the solved pair; field case averages the
// node values against the factor's stationary law.
inline double stationary_cost_formula(const ProblemSpec& spec, const RiccatiSolution& sol,
                                      const CostateSolution& cs) {
    const std::vector<double> density = detail::cost_density(spec, sol, cs);
    if (cs.rep == Rep::kConstant) return density[0];
    return stationary_expectation(*cs.grid, *cs.factor, density);
}

// Everything the discounted problem produces for one alpha.
struct DiscountedSolution {
    double alpha = 0.0;
    ProblemSpec spec_alpha;
    RiccatiSolution riccati;  // P^a
    GainSet gains;            // Lambda^a, H^a, K^a, N^a
    CostateSolution r_tilde;  // stationary shifted costate
    VecField u_aff;           // -(N^a)^{-1} (B' r~ + sum (D^i)' g~)

    FeedbackLaw law() const {
        FeedbackLaw l;
        l.rep = riccati.rep;
        l.grid = riccati.grid;
        l.gains = gains;
        l.u_aff = u_aff;
        return l;
    }
};

inline DiscountedSolution solve_discounted(const ProblemSpec& spec, double alpha,
                                           const SolverOptions& opt = {}) {
    if (!(alpha > 0.0)) throw ParameterError("solve_discounted: alpha must be > 0");
    DiscountedSolution ds;
    ds.alpha = alpha;
    ds.spec_alpha = discounted_spec(spec, alpha);
    ds.riccati = minimal_stationary(ds.spec_alpha, opt.grid, opt.riccati_tol, opt.dt);
    ds.gains = gains(ds.spec_alpha, ds.riccati);
    ds.r_tilde = detail::stationary_dual_solve(ds.spec_alpha, ds.riccati, ds.gains,
                                               /*shift=*/alpha, opt.costate_tol, opt.dt);
    ds.u_aff = affine_term(ds.spec_alpha, ds.riccati, ds.gains, ds.r_tilde);
    return ds;
}

// Optimal discounted cost J*_alpha(x) in closed form.
inline double discounted_value(const DiscountedSolution& ds, const Eigen::VectorXd& x) {
    const auto& cs = ds.r_tilde;
    const std::vector<double> density =
        detail::cost_density(ds.spec_alpha, ds.riccati, cs);
    const int m = cs.nodes();
    std::vector<double> head(m);
    for (int v = 0; v < m; ++v) {
        head[v] = x.dot(ds.riccati.P[v] * x) + 2.0 * cs.r[v].dot(x);
    }
    if (cs.rep == Rep::kConstant) {
        return head[0] + density[0] / (2.0 * ds.alpha);
    }
    return stationary_expectation(*cs.grid, *cs.factor, head) +
           stationary_expectation(*cs.grid, *cs.factor, density) / (2.0 * ds.alpha);
}

inline double discounted_value(const ProblemSpec& spec, double alpha, const Eigen::VectorXd& x,
                               const SolverOptions& opt = {}) {
    return discounted_value(solve_discounted(spec, alpha, opt), x);
}

enum class SweepMode { kFormula, kMonteCarlo };

struct SweepRow {
    double alpha = 0.0;
    std::string x_label;
    double two_alpha_J = 0.0;
    double std_err = 0.0; // 0 for the formula route
};

struct SweepReport {
    std::vector<SweepRow> rows; // alpha descending
    double extrapolated_limit = std::numeric_limits<double>::quiet_NaN();
    double stationary_cost = 0.0;
    double max_x_spread = 0.0;
    double fit_residual = std::numeric_limits<double>::quiet_NaN();
    bool extrapolated = false;
};

// Vanishing-discount table: 2 alpha J*_alpha per (alpha, x), affine
// least-squares extrapolation in alpha over the three smallest alphas,
// and the stationary cost it should land on.
inline SweepReport vanishing_discount_sweep(const ProblemSpec& spec,
                                            const std::vector<Eigen::VectorXd>& x_list,
                                            std::vector<double> alphas, SweepMode mode,
                                            const SolverOptions& opt = {},
                                            const SimConfig& sim = {}) {
    if (x_list.empty()) throw ParameterError("sweep: x_list must be non-empty");
    if (alphas.empty()) throw ParameterError("sweep: alpha list must be non-empty");
    for (double a : alphas) {
        if (!(a > 0.0)) throw ParameterError("sweep: alphas must be positive");
    }
    std::sort(alphas.begin(), alphas.end(), std::greater<>());

    SweepReport report;
    for (double alpha : alphas) {
        const DiscountedSolution ds = solve_discounted(spec, alpha, opt);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t xi = 0; xi < x_list.size(); ++xi) {
            SweepRow row;
            row.alpha = alpha;
            row.x_label = "x" + std::to_string(xi);
            if (mode == SweepMode::kFormula) {
                row.two_alpha_J = 2.0 * alpha * discounted_value(ds, x_list[xi]);
            } else {
                const auto est =
                    discounted_cost_mc(spec, ds.law().control(), x_list[xi], alpha, sim);
                row.two_alpha_J = 2.0 * alpha * est.mean;
                row.std_err = 2.0 * alpha * est.std_err;
            }
            lo = std::min(lo, row.two_alpha_J);
            hi = std::max(hi, row.two_alpha_J);
            report.rows.push_back(std::move(row));
        }
        report.max_x_spread = std::max(report.max_x_spread, hi - lo);
    }

    {
        const RiccatiSolution sol = minimal_stationary(spec, opt.grid, opt.riccati_tol, opt.dt);
        const GainSet gs = gains(spec, sol);
        const CostateSolution cs =
            solve_stationary_costate(spec, sol, gs, opt.costate_tol, opt.dt);
        report.stationary_cost = stationary_cost_formula(spec, sol, cs);
    }

    // Affine fit over the rows at the three smallest alphas.
    if (alphas.size() >= 3) {
        const double cutoff = alphas[alphas.size() - 3];
        double sa = 0.0, sy = 0.0, saa = 0.0, say = 0.0;
        int count = 0;
        for (const auto& row : report.rows) {
            if (row.alpha > cutoff + 1e-15) continue;
            sa += row.alpha;
            sy += row.two_alpha_J;
            saa += row.alpha * row.alpha;
            say += row.alpha * row.two_alpha_J;
            ++count;
        }
        const double det = count * saa - sa * sa;
        if (std::abs(det) > 1e-30) {
            const double slope = (count * say - sa * sy) / det;
            const double intercept = (sy - slope * sa) / count;
            report.extrapolated_limit = intercept;
            report.extrapolated = true;
            double ss = 0.0;
            for (const auto& row : report.rows) {
                if (row.alpha > cutoff + 1e-15) continue;
                const double e = row.two_alpha_J - intercept - slope * row.alpha;
                ss += e * e;
            }
            report.fit_residual = std::sqrt(ss / count);
        }
    }
    return report;
}

struct GapResult {
    double gap_direct = 0.0;
    double gap_identity = 0.0;
};

// Completion-of-squares check for an alternative stabilizing law
// u = Lambda' x + c'. Both routes measure the same excess cost:
//   direct     J(alt) - optimal cost,
//   identity   E |N^{1/2} (u_alt - Lambda X - u_aff)|^2
// under the alternative law's stationary moments.
inline GapResult optimality_gap(const ProblemSpec& spec, const FeedbackLaw& law_opt,
                                const Eigen::MatrixXd& alt_lambda,
                                const Eigen::VectorXd& alt_c, double optimal_cost) {
    if (!spec.is_constant() || law_opt.rep != Rep::kConstant) {
        throw StructuralError("optimality_gap: constant-coefficient case only");
    }
    const auto mom = detail::constant_loop_moments(spec, alt_lambda, alt_c);
    const double j_alt = detail::stationary_cost_from_moments(spec, alt_lambda, alt_c, mom);

    GapResult gap;
    gap.gap_direct = j_alt - optimal_cost;

    const Eigen::MatrixXd dl = alt_lambda - law_opt.gains.Lambda[0];
    const Eigen::VectorXd dc = alt_c - law_opt.u_aff[0];
    const Eigen::MatrixXd& nmat = law_opt.gains.N[0];
    gap.gap_identity = (dl.transpose() * nmat * dl * mom.m2).trace() +
                       2.0 * dc.dot(nmat * dl * mom.m) + dc.dot(nmat * dc);
    return gap;
}

} // namespace ergolq
