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

// Stationary Riccati solver. The quadratic kernel P solves, in the
// constant-coefficient case, the algebraic equation G(P, 0) = 0 with
//
//   G = A'P + PA + S + sum_i [(C^i)'P C^i + (C^i)'Q^i + Q^i C^i]
//       - U N^{-1} U',   U = PB + sum_i ((C^i)'P D^i + Q^i D^i),
//       N = I + sum_i (D^i)'P D^i,
//
// and in the factor-driven case the stationary equation
//   (1/2) sigma^2 p'' + kappa (level - y) p' + G(p, q) = 0,
//   q^{drive} = sigma p'.
// Both are obtained as the long-horizon limit of the backward march
// dP/dtau = G with zero terminal data, doubling the horizon and
// certifying Loewner monotonicity of the family along the way.

namespace ergolq {

inline constexpr double kPsdFloor = 1e-9;
inline constexpr double kPsdClip = 1e-12;
inline constexpr double kMaxRiccatiHorizon = 1024.0; // 2^10
inline constexpr double kMaxSolverStep = 1e-2;

enum class Rep { kConstant, kField };

struct RiccatiSolution {
    Rep rep = Rep::kConstant;
    MatField P; // one entry (constant) or one per grid node
    std::optional<FactorGrid> grid;
    std::optional<FactorDynamics> factor;

    int nodes() const { return static_cast<int>(P.size()); }

    // Martingale-density component at the driving index, sigma * dP/dy.
    MatField q_drive() const {
        if (rep == Rep::kConstant) {
            return MatField{Eigen::MatrixXd::Zero(P[0].rows(), P[0].cols())};
        }
        MatField q = central_diff(P, grid->h());
        for (auto& m : q) m *= factor->sigma;
        return q;
    }
};

struct GainSet {
    Rep rep = Rep::kConstant;
    std::optional<FactorGrid> grid;
    MatField Lambda; // k x n per node
    MatField H;      // n x n per node
    std::vector<MatField> K; // K[node][i], n x n
    MatField N;      // k x k per node

    int nodes() const { return static_cast<int>(Lambda.size()); }
};

// Drift of -dP in the backward Riccati equation; symmetric by construction,
// symmetrized against roundoff. Throws PsdLossError when the control-weight
// N = I + sum (D^i)'P D^i dips below its unit floor.
inline Eigen::MatrixXd generator_G(const CoefficientSnapshot& snap, const Eigen::MatrixXd& p,
                                   const std::vector<Eigen::MatrixXd>& q) {
    const Eigen::Index k = snap.B.cols();
    const std::size_t d = snap.C.size();
    if (q.size() != d) throw StructuralError("generator_G: Q list size != d");

    if (!p.allFinite()) {
        throw StabilityError("generator_G: Riccati iterate diverged "
                             "(finite cost condition violated)");
    }
    Eigen::MatrixXd g = snap.A.transpose() * p + p * snap.A + snap.S;
    Eigen::MatrixXd u = p * snap.B; // n x k
    Eigen::MatrixXd nmat = Eigen::MatrixXd::Identity(k, k);
    for (std::size_t i = 0; i < d; ++i) {
        const Eigen::MatrixXd& c = snap.C[i];
        const Eigen::MatrixXd& dd = snap.D[i];
        g += c.transpose() * p * c + c.transpose() * q[i] + q[i] * c;
        u += c.transpose() * p * dd + q[i] * dd;
        nmat += dd.transpose() * p * dd;
    }
    const double n_floor = min_eigenvalue(nmat);
    if (n_floor < 1.0 - kPsdFloor) {
        throw PsdLossError("PSD loss: N min eigenvalue " + std::to_string(n_floor) +
                           " below unit floor");
    }
    g -= u * spd_solve(nmat, Eigen::MatrixXd(u.transpose()));
    return symmetrized(g);
}

namespace detail {

inline std::vector<Eigen::MatrixXd> zero_q(int d, Eigen::Index n) {
    return std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(d),
                                        Eigen::MatrixXd::Zero(n, n));
}

// Backward march in time-to-go tau, from a given terminal value. Constant
// case: classical RK4 on dP/dtau = G(P, 0) with per-step symmetrization and
// eigenvalue clipping. Field case: method of lines, factor generator
// implicit (tridiagonal solve per matrix entry), G explicit.
class RiccatiMarcher {
public:
    RiccatiMarcher(const ProblemSpec& spec, const std::optional<FactorGrid>& grid,
                   MatField terminal, double dt)
        : spec_(spec), dt_(dt), p_(std::move(terminal)) {
        if (!(dt > 0.0) || dt > kMaxSolverStep) {
            throw ParameterError("Riccati march: dt must lie in (0, " +
                                 std::to_string(kMaxSolverStep) + "], got " +
                                 std::to_string(dt));
        }
        if (spec.is_constant()) {
            snaps_.push_back(eval_coefficients(spec.model, 0.0));
            if (p_.size() != 1) throw StructuralError("constant terminal must have one node");
        } else {
            grid_ = grid ? *grid : default_factor_grid(*spec.factor());
            grid_->check();
            fd_ = *spec.factor();
            if (static_cast<int>(p_.size()) != grid_->m) {
                throw StructuralError("field terminal node count != grid nodes");
            }
            snaps_.reserve(grid_->m);
            for (int i = 0; i < grid_->m; ++i) {
                snaps_.push_back(eval_coefficients(spec.model, grid_->node(i)));
            }
            gen_.emplace(*grid_, fd_);
            imex_.emplace(*gen_, dt_);
        }
        for (auto& m : p_) m = symmetrized(m);
    }

    double tau() const { return tau_; }
    const MatField& value() const { return p_; }
    const std::optional<FactorGrid>& grid() const { return grid_; }
    const FactorDynamics& factor() const { return fd_; }

    void advance_by(double delta) {
        const long long full = static_cast<long long>(std::floor(delta / dt_ + 1e-9));
        for (long long s = 0; s < full; ++s) step(dt_, /*main_solver=*/true);
        const double rem = delta - static_cast<double>(full) * dt_;
        if (rem > 1e-12) step(rem, /*main_solver=*/false);
    }

private:
    void step(double dt, bool main_solver) {
        try {
            if (spec_.is_constant()) {
                step_constant(dt);
            } else {
                step_field(dt, main_solver);
            }
        } catch (const PsdLossError& e) {
            throw PsdLossError(std::string(e.what()) + " at time-to-go tau=" +
                               std::to_string(tau_));
        }
        tau_ += dt;
        for (const auto& m : p_) {
            if (!(m.norm() < 1e12)) {
                throw StabilityError(
                    "Riccati march: iterate norm exceeded 1e12 at time-to-go tau=" +
                    std::to_string(tau_) +
                    " (not stabilizable: finite cost condition violated)");
            }
        }
    }

    void step_constant(double dt) {
        const auto& snap = snaps_[0];
        const auto q0 = zero_q(spec_.dims.d, spec_.dims.n);
        const Eigen::MatrixXd& p = p_[0];
        const Eigen::MatrixXd k1 = generator_G(snap, p, q0);
        const Eigen::MatrixXd k2 = generator_G(snap, p + 0.5 * dt * k1, q0);
        const Eigen::MatrixXd k3 = generator_G(snap, p + 0.5 * dt * k2, q0);
        const Eigen::MatrixXd k4 = generator_G(snap, p + dt * k3, q0);
        Eigen::MatrixXd next = symmetrized(p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(next);
        const double lo = es.eigenvalues().minCoeff();
        if (lo < -kPsdFloor) {
            throw PsdLossError("PSD loss: P min eigenvalue " + std::to_string(lo));
        }
        if (lo < 0.0 && lo >= -kPsdClip) {
            Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
            next = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
            next = symmetrized(next);
        }
        p_[0] = next;
    }

    void step_field(double dt, bool main_solver) {
        const int m = grid_->m;
        const Eigen::Index n = spec_.dims.n;
        const double h = grid_->h();
        const int drive = fd_.drive_index - 1;

        const MatField dp = central_diff(p_, h);
        MatField rhs(m);
        std::vector<Eigen::MatrixXd> q = zero_q(spec_.dims.d, n);
        for (int i = 0; i < m; ++i) {
            q[drive] = fd_.sigma * symmetrized(dp[i]);
            rhs[i] = p_[i] + dt * generator_G(snaps_[i], p_[i], q);
        }

        const ImexSolver* solver = &*imex_;
        std::optional<ImexSolver> partial;
        if (!main_solver) {
            partial.emplace(*gen_, dt);
            solver = &*partial;
        }
        std::vector<double> channel(m);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c <= r; ++c) {
                for (int i = 0; i < m; ++i) channel[i] = 0.5 * (rhs[i](r, c) + rhs[i](c, r));
                solver->solve(channel);
                for (int i = 0; i < m; ++i) {
                    p_[i](r, c) = channel[i];
                    p_[i](c, r) = channel[i];
                }
            }
        }
    }

    const ProblemSpec& spec_;
    double dt_;
    double tau_ = 0.0;
    MatField p_;
    std::optional<FactorGrid> grid_;
    FactorDynamics fd_;
    std::vector<CoefficientSnapshot> snaps_;
    std::optional<OuGenerator> gen_;
    std::optional<ImexSolver> imex_;
};

inline MatField zero_terminal(const ProblemSpec& spec, const std::optional<FactorGrid>& grid) {
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(spec.dims.n, spec.dims.n);
    if (spec.is_constant()) return MatField{z};
    const FactorGrid g = grid ? *grid : default_factor_grid(*spec.factor());
    return MatField(static_cast<std::size_t>(g.m), z);
}

inline RiccatiSolution wrap_solution(const ProblemSpec& spec,
                                     const std::optional<FactorGrid>& grid, MatField p) {
    RiccatiSolution sol;
    sol.P = std::move(p);
    if (spec.is_constant()) {
        sol.rep = Rep::kConstant;
    } else {
        sol.rep = Rep::kField;
        sol.grid = grid ? *grid : default_factor_grid(*spec.factor());
        sol.factor = *spec.factor();
    }
    return sol;
}

inline double max_node_norm_diff(const MatField& a, const MatField& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i] - b[i]).norm());
    return worst;
}

} // namespace detail

// Value at time 0 of the finite-horizon backward equation with terminal
// data P_T. Retries twice with halved steps if positive semidefiniteness
// is lost mid-march.
inline RiccatiSolution solve_finite_horizon(const ProblemSpec& spec,
                                            const std::optional<FactorGrid>& grid, double T,
                                            const MatField& terminal, double dt) {
    if (T < 0.0) throw ParameterError("solve_finite_horizon: T must be >= 0");
    for (const auto& m : terminal) {
        require_symmetric(m, "P_T", 1e-9);
        if (min_eigenvalue(m) < -kPsdFloor) {
            throw ParameterError("solve_finite_horizon: terminal value not PSD");
        }
    }
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        const double dt_a = dt / static_cast<double>(1 << attempt);
        try {
            detail::RiccatiMarcher marcher(spec, grid, terminal, dt_a);
            marcher.advance_by(T);
            return detail::wrap_solution(spec, grid, marcher.value());
        } catch (const PsdLossError& e) {
            last_error = e.what();
        }
    }
    throw PsdLossError(last_error + " (after two step-halving retries)");
}

struct HorizonDiagnostics {
    std::vector<double> horizons;       // 4, 8, ... as visited
    std::vector<double> gaps;           // sup-node Frobenius gap per doubling
    std::vector<double> min_increment_eig; // worst eigenvalue of P_next - P_prev
};

// Minimal stationary solution by horizon doubling with zero terminal data.
// The finite-horizon family must be Loewner-nondecreasing (slack 10*dt);
// a violation is a solver-integrity failure, and hitting the horizon cap
// without convergence means the finite cost condition fails.
inline RiccatiSolution minimal_stationary(const ProblemSpec& spec,
                                          const std::optional<FactorGrid>& grid, double tol,
                                          double dt, HorizonDiagnostics* diag = nullptr) {
    require_valid(spec);
    if (!(tol > 0.0)) throw ParameterError("minimal_stationary: tol must be > 0");
    const MatField terminal = detail::zero_terminal(spec, grid);

    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        const double dt_a = dt / static_cast<double>(1 << attempt);
        if (diag) *diag = HorizonDiagnostics{};
        try {
            detail::RiccatiMarcher marcher(spec, grid, terminal, dt_a);
            marcher.advance_by(4.0);
            MatField prev = marcher.value();
            double horizon = 4.0;
            while (horizon < kMaxRiccatiHorizon) {
                marcher.advance_by(horizon); // to 2 * horizon
                horizon *= 2.0;
                const MatField& curr = marcher.value();

                double worst_eig = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < curr.size(); ++i) {
                    worst_eig = std::min(worst_eig, min_eigenvalue(curr[i] - prev[i]));
                }
                const double slack = 10.0 * dt_a;
                if (worst_eig < -slack) {
                    throw SolverError(
                        "minimal_stationary: horizon family not Loewner-nondecreasing at "
                        "horizon " + std::to_string(horizon) + " (min increment eigenvalue " +
                        std::to_string(worst_eig) + " < -" + std::to_string(slack) +
                        "): solver integrity violated");
                }
                const double gap = detail::max_node_norm_diff(curr, prev);
                if (diag) {
                    diag->horizons.push_back(horizon);
                    diag->gaps.push_back(gap);
                    diag->min_increment_eig.push_back(worst_eig);
                }
                if (gap < tol) {
                    return detail::wrap_solution(spec, grid, curr);
                }
                prev = curr;
            }
            throw StabilityError(
                "minimal_stationary: not stabilizable (finite cost condition violated); "
                "horizon cap " + std::to_string(kMaxRiccatiHorizon) +
                " reached without convergence");
        } catch (const PsdLossError& e) {
            last_error = e.what();
        }
    }
    throw PsdLossError(last_error + " (after two step-halving retries)");
}

// Stationarity certificate: Frobenius norm of the generator applied to the
// solution (max over interior nodes in the field case).
inline double residual_norm(const ProblemSpec& spec, const RiccatiSolution& sol) {
    if (sol.rep == Rep::kConstant) {
        const auto snap = eval_coefficients(spec.model, 0.0);
        return generator_G(snap, sol.P[0], detail::zero_q(spec.dims.d, spec.dims.n)).norm();
    }
    const FactorGrid& g = *sol.grid;
    const FactorDynamics& fd = *sol.factor;
    const double h = g.h();
    const int drive = fd.drive_index - 1;
    const MatField dp = central_diff(sol.P, h);
    const MatField d2p = second_diff(sol.P, h);
    double worst = 0.0;
    std::vector<Eigen::MatrixXd> q = detail::zero_q(spec.dims.d, spec.dims.n);
    for (int i = 1; i + 1 < g.m; ++i) {
        const double y = g.node(i);
        q[drive] = fd.sigma * symmetrized(dp[i]);
        const Eigen::MatrixXd res = 0.5 * fd.sigma * fd.sigma * d2p[i] +
                                    fd.kappa * (fd.level - y) * dp[i] +
                                    generator_G(eval_coefficients(spec.model, y), sol.P[i], q);
        worst = std::max(worst, res.norm());
    }
    return worst;
}

// Feedback gain and closed-loop coefficients per node:
//   Lambda = -N^{-1} U',  H = A + B Lambda,  K^i = C^i + D^i Lambda.
inline GainSet gains(const ProblemSpec& spec, const RiccatiSolution& sol) {
    GainSet gs;
    gs.rep = sol.rep;
    gs.grid = sol.grid;
    const int m = sol.nodes();
    gs.Lambda.resize(m);
    gs.H.resize(m);
    gs.K.resize(m);
    gs.N.resize(m);
    const MatField q_drive = sol.q_drive();
    const int drive = sol.factor ? sol.factor->drive_index - 1 : 0;
    for (int v = 0; v < m; ++v) {
        const double y = sol.rep == Rep::kField ? sol.grid->node(v) : 0.0;
        const auto snap = eval_coefficients(spec.model, y);
        const Eigen::Index k = snap.B.cols();
        const Eigen::MatrixXd& p = sol.P[v];

        Eigen::MatrixXd u = p * snap.B;
        Eigen::MatrixXd nmat = Eigen::MatrixXd::Identity(k, k);
        for (int i = 0; i < spec.dims.d; ++i) {
            const Eigen::MatrixXd qi = (sol.rep == Rep::kField && i == drive)
                                           ? q_drive[v]
                                           : Eigen::MatrixXd::Zero(p.rows(), p.cols());
            u += snap.C[i].transpose() * p * snap.D[i] + qi * snap.D[i];
            nmat += snap.D[i].transpose() * p * snap.D[i];
        }
        gs.N[v] = symmetrized(nmat);
        gs.Lambda[v] = -spd_solve(gs.N[v], Eigen::MatrixXd(u.transpose()));
        gs.H[v] = snap.A + snap.B * gs.Lambda[v];
        gs.K[v].resize(spec.dims.d);
        for (int i = 0; i < spec.dims.d; ++i) {
            gs.K[v][i] = snap.C[i] + snap.D[i] * gs.Lambda[v];
        }
    }
    return gs;
}

// Mean-square decay certificate for the constant case; the field case has
// no finite spectral representation here and defers to the Datko fit.
inline double stability_certificate(const ProblemSpec& spec, const GainSet& gs) {
    (void)spec;
    if (gs.rep == Rep::kField) return std::numeric_limits<double>::quiet_NaN();
    return meansquare_abscissa(gs.H[0], gs.K[0]);
}

} // namespace ergolq
