#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/costate.hpp"
#include "ergolq/errors.hpp"
#include "ergolq/linalg.hpp"
#include "ergolq/model.hpp"
#include "ergolq/riccati.hpp"
#include "ergolq/simulate.hpp"

// Optimal feedback synthesis and the stationary closed loop: the control
// rule u(y, x) = Lambda(y) x + u_aff(y), exact stationary moments in the
// constant case, the shift-back burn-in construction of the stationary
// state, Datko-type decay fits, and a moment-based stationarity check.

namespace ergolq {

struct FeedbackLaw {
    Rep rep = Rep::kConstant;
    std::optional<FactorGrid> grid;
    GainSet gains;
    VecField u_aff;

    // Linear interpolation on the grid, clamped at the edges.
    Eigen::MatrixXd lambda_at(double y) const { return interp(gains.Lambda, y); }
    Eigen::VectorXd u_aff_at(double y) const {
        if (rep == Rep::kConstant) return u_aff[0];
        const auto [i, w] = bracket(y);
        return (1.0 - w) * u_aff[i] + w * u_aff[i + 1];
    }

    ControlFn control() const {
        auto self = std::make_shared<const FeedbackLaw>(*this);
        return [self](double, const Eigen::VectorXd& x, double y, Eigen::VectorXd& u) {
            if (self->rep == Rep::kConstant) {
                u.noalias() = self->gains.Lambda[0] * x;
                u += self->u_aff[0];
                return;
            }
            const auto [i, w] = self->bracket(y);
            u.noalias() = (1.0 - w) * (self->gains.Lambda[i] * x);
            u.noalias() += w * (self->gains.Lambda[i + 1] * x);
            u += (1.0 - w) * self->u_aff[i] + w * self->u_aff[i + 1];
        };
    }

    // Same gains, affine part forced to zero (homogeneous loop).
    FeedbackLaw homogeneous() const {
        FeedbackLaw law = *this;
        for (auto& v : law.u_aff) v.setZero();
        return law;
    }

    std::pair<int, double> bracket(double y) const {
        const FactorGrid& g = *grid;
        const double s = (y - g.y_lo) / g.h();
        int i = static_cast<int>(std::floor(s));
        i = std::max(0, std::min(g.m - 2, i));
        const double w = std::max(0.0, std::min(1.0, s - i));
        return {i, w};
    }

private:
    Eigen::MatrixXd interp(const MatField& f, double y) const {
        if (rep == Rep::kConstant) return f[0];
        const auto [i, w] = bracket(y);
        return (1.0 - w) * f[i] + w * f[i + 1];
    }
};

inline FeedbackLaw synthesize_feedback(const ProblemSpec& spec, const RiccatiSolution& sol,
                                       const CostateSolution& cs) {
    FeedbackLaw law;
    law.rep = sol.rep;
    law.grid = sol.grid;
    law.gains = gains(spec, sol);
    law.u_aff = affine_term(spec, sol, law.gains, cs);
    return law;
}

namespace detail {

// Stationary first and second moments of the closed loop under an
// arbitrary constant law u = Lambda x + c:
//   H m + phi = 0,  phi = B c + f,
//   H M2 + M2 H' + sum K^i M2 (K^i)' + phi m' + m phi'
//     + sum (K^i m psi_i' + psi_i m' (K^i)' + psi_i psi_i') = 0,
//   psi_i = D^i c.
struct ConstantLoopMoments {
    Eigen::VectorXd m;
    Eigen::MatrixXd m2;
    Eigen::MatrixXd h;
    std::vector<Eigen::MatrixXd> ks;
};

inline ConstantLoopMoments constant_loop_moments(const ProblemSpec& spec,
                                                 const Eigen::MatrixXd& lambda,
                                                 const Eigen::VectorXd& c) {
    if (!spec.is_constant()) {
        throw StructuralError("constant loop moments require constant coefficients");
    }
    const auto snap = eval_coefficients(spec.model, 0.0);
    ConstantLoopMoments out;
    out.h = snap.A + snap.B * lambda;
    out.ks.reserve(snap.C.size());
    for (std::size_t i = 0; i < snap.C.size(); ++i) {
        out.ks.push_back(snap.C[i] + snap.D[i] * lambda);
    }
    if (meansquare_abscissa(out.h, out.ks) >= 0.0) {
        throw StabilityError("closed loop not mean-square stable under this law");
    }
    const Eigen::VectorXd phi = snap.B * c + snap.f;
    out.m = Eigen::FullPivLU<Eigen::MatrixXd>(out.h).solve(Eigen::VectorXd(-phi));

    Eigen::MatrixXd rhs = phi * out.m.transpose() + out.m * phi.transpose();
    for (std::size_t i = 0; i < snap.C.size(); ++i) {
        const Eigen::VectorXd psi = snap.D[i] * c;
        rhs += out.ks[i] * out.m * psi.transpose() + psi * out.m.transpose() *
                                                          out.ks[i].transpose();
        rhs += psi * psi.transpose();
    }
    out.m2 = lyapunov_solve(out.h, out.ks, symmetrized(rhs));
    return out;
}

// E[<S X, X> + |Lambda X + c|^2] under the law's stationary moments.
inline double stationary_cost_from_moments(const ProblemSpec& spec,
                                           const Eigen::MatrixXd& lambda,
                                           const Eigen::VectorXd& c,
                                           const ConstantLoopMoments& mom) {
    const auto snap = eval_coefficients(spec.model, 0.0);
    double cost = (snap.S * mom.m2).trace();
    cost += (lambda.transpose() * lambda * mom.m2).trace();
    cost += 2.0 * c.dot(lambda * mom.m);
    cost += c.squaredNorm();
    return cost;
}

} // namespace detail

// Exact stationary mean and second moment of the synthesized closed loop
// (constant coefficients). Verifies M2 - m m' stays PSD up to 1e-9.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> stationary_moments_constant(
    const ProblemSpec& spec, const FeedbackLaw& law) {
    if (law.rep != Rep::kConstant) {
        throw StructuralError("stationary_moments_constant: constant case only");
    }
    const auto mom = detail::constant_loop_moments(spec, law.gains.Lambda[0], law.u_aff[0]);
    const double lo = min_eigenvalue(mom.m2 - mom.m * mom.m.transpose());
    if (lo < -1e-9) {
        throw SolverError("stationary moments: covariance M2 - m m' has eigenvalue " +
                          std::to_string(lo) + " < -1e-9");
    }
    return {mom.m, mom.m2};
}

struct BurnInResult {
    Eigen::MatrixXd samples;   // n_paths x n states at time 0
    Eigen::VectorXd y0;        // factor levels at time 0 (field case; else empty)
    double n_used = 0.0;       // final look-back length
    std::vector<double> gaps;  // coupled L2 gaps per doubling
};

namespace detail {

struct FinalStateObserver {
    Eigen::MatrixXd* xs;
    Eigen::VectorXd* ys;
    int final_step;
    void operator()(int path, int step, double, const Eigen::VectorXd& x,
                    const Eigen::VectorXd&, double y) {
        if (step != final_step) return;
        xs->row(path) = x.transpose();
        if (ys->size()) (*ys)(path) = y;
    }
};

} // namespace detail

// Stationary-state sampler: simulate the closed loop from state zero at
// time -N (the factor from its exact stationary law), doubling N with one
// shared noise realization per path until the coupled gap
// E|X^{(2N)}_0 - X^{(N)}_0|^2 falls below tol.
inline BurnInResult burn_in_init(const ProblemSpec& spec, const FeedbackLaw& law,
                                 const SimConfig& cfg, double tol, double n0 = 1.0) {
    require_valid(spec);
    cfg.check();
    if (cfg.n_paths < 100) {
        throw ParameterError("burn_in_init: need at least 100 paths, got " +
                             std::to_string(cfg.n_paths));
    }
    if (!(n0 > 0.0) || !(tol > 0.0)) {
        throw ParameterError("burn_in_init: N0 and tol must be > 0");
    }
    const bool field = !spec.is_constant();
    const ControlFn control = law.control();
    const PathInit init = [&] {
        PathInit i;
        i.x0 = Eigen::MatrixXd::Zero(1, spec.dims.n);
        return i;
    }();
    constexpr double kMaxLookBack = 4096.0;

    auto run = [&](double look_back) {
        std::pair<Eigen::MatrixXd, Eigen::VectorXd> out;
        out.first.setZero(cfg.n_paths, spec.dims.n);
        if (field) out.second.setZero(cfg.n_paths);
        const int n_steps = cfg.steps(look_back);
        detail::run_paths_chunked(spec, control, init, -static_cast<std::int64_t>(n_steps),
                                  n_steps, cfg.dt, cfg.base_seed, cfg.n_paths, cfg.threads,
                                  [&] {
                                      return detail::FinalStateObserver{&out.first,
                                                                        &out.second, n_steps};
                                  });
        return out;
    };

    BurnInResult result;
    double look_back = n0;
    auto prev = run(look_back);
    int nondecreasing = 0;
    while (true) {
        const double next_n = 2.0 * look_back;
        if (next_n > kMaxLookBack) {
            throw StabilityError("burn_in_init: no mean-square contraction observed "
                                 "(look-back cap reached)");
        }
        auto curr = run(next_n);
        const double gap = (curr.first - prev.first).rowwise().squaredNorm().mean();
        if (!result.gaps.empty() && gap >= result.gaps.back()) {
            if (++nondecreasing >= 3) {
                throw StabilityError("burn_in_init: no mean-square contraction observed "
                                     "(gap non-decreasing across three doublings)");
            }
        } else {
            nondecreasing = 0;
        }
        result.gaps.push_back(gap);
        if (gap < tol) {
            result.samples = std::move(curr.first);
            result.y0 = std::move(curr.second);
            result.n_used = next_n;
            return result;
        }
        prev = std::move(curr);
        look_back = next_n;
    }
}

struct DatkoFit {
    double rate = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    bool degenerate = false;
};

// Least-squares slope of log E|X_t|^2 for the homogeneous loop (forcing
// and affine control removed), over the window where the moment exceeds
// 1e-12. cfg.horizon sets the fitted span.
inline DatkoFit datko_fit(const ProblemSpec& spec, const GainSet& gs, const SimConfig& cfg,
                          const Eigen::VectorXd& x0) {
    require_valid(spec);
    cfg.check();
    const ProblemSpec spec0 = with_zero_forcing(spec);
    FeedbackLaw law;
    law.rep = gs.rep;
    law.grid = gs.grid;
    law.gains = gs;
    law.u_aff.assign(static_cast<std::size_t>(gs.nodes()),
                     Eigen::VectorXd::Zero(spec.dims.k));
    const ControlFn control = law.control();

    const int n_steps = cfg.steps(cfg.horizon);
    const int n_chunks = (cfg.n_paths + detail::kPathChunk - 1) / detail::kPathChunk;
    std::vector<std::vector<double>> chunk_sums(
        n_chunks, std::vector<double>(static_cast<std::size_t>(n_steps) + 1, 0.0));

    struct MomentObserver {
        std::vector<std::vector<double>>* sums;
        void operator()(int path, int step, double, const Eigen::VectorXd& x,
                        const Eigen::VectorXd&, double) {
            (*sums)[path / detail::kPathChunk][step] += x.squaredNorm();
        }
    };
    detail::run_paths_chunked(spec0, control, PathInit::broadcast(x0), 0, n_steps, cfg.dt,
                              cfg.base_seed, cfg.n_paths, cfg.threads,
                              [&] { return MomentObserver{&chunk_sums}; });

    std::vector<double> ts, logs;
    for (int s = 0; s <= n_steps; ++s) {
        double total = 0.0;
        for (int c = 0; c < n_chunks; ++c) total += chunk_sums[c][s];
        const double moment = total / cfg.n_paths;
        if (moment > 1e-12) {
            ts.push_back(s * cfg.dt);
            logs.push_back(std::log(moment));
        }
    }
    DatkoFit fit;
    if (ts.size() < 3) {
        fit.degenerate = true;
        return fit;
    }
    const auto sz = static_cast<double>(ts.size());
    double mt = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        mt += ts[i];
        ml += logs[i];
    }
    mt /= sz;
    ml /= sz;
    double stt = 0.0, stl = 0.0, sll = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        stt += (ts[i] - mt) * (ts[i] - mt);
        stl += (ts[i] - mt) * (logs[i] - ml);
        sll += (logs[i] - ml) * (logs[i] - ml);
    }
    fit.rate = stl / stt;
    fit.r_squared = sll > 0.0 ? (stl * stl) / (stt * sll) : 1.0;
    return fit;
}

struct StationarityRow {
    double base_t = 0.0;
    double lag = 0.0;
    std::string stat;
    double z = 0.0;
};

struct StationarityResult {
    double max_discrepancy = 0.0;
    std::vector<StationarityRow> rows;
};

// Moment time-invariance over a window continued from the burn-in samples:
// for each lag s, paired z-scores of first and second moments between
// times t and t+s (base times 0 and 1). The largest |z| is the
// discrepancy, a statistical surrogate for shift-stationarity.
inline StationarityResult stationarity_check(const ProblemSpec& spec, const FeedbackLaw& law,
                                             const BurnInResult& burn_in,
                                             const SimConfig& cfg,
                                             const std::vector<double>& lags) {
    require_valid(spec);
    cfg.check();
    if (lags.empty()) throw ParameterError("stationarity_check: need at least one lag");
    const double window = 2.0;
    const std::vector<double> base_times{0.0, 1.0};

    std::vector<int> snap_steps;
    auto add_time = [&](double t) {
        const int s = cfg.steps(t);
        if (std::abs(s * cfg.dt - t) > 1e-9) {
            throw ParameterError("stationarity_check: lag " + std::to_string(t) +
                                 " is not a multiple of dt");
        }
        if (t > window + 1e-12) {
            throw ParameterError("stationarity_check: base + lag exceeds the window");
        }
        snap_steps.push_back(s);
    };
    for (double b : base_times) add_time(b);
    for (double b : base_times)
        for (double s : lags) add_time(b + s);
    std::sort(snap_steps.begin(), snap_steps.end());
    snap_steps.erase(std::unique(snap_steps.begin(), snap_steps.end()), snap_steps.end());

    const int n = spec.dims.n;
    const int n_paths = static_cast<int>(burn_in.samples.rows());
    const int n_snaps = static_cast<int>(snap_steps.size());
    Eigen::MatrixXd snaps(n_paths, n_snaps * n);

    struct SnapshotObserver {
        const std::vector<int>* steps;
        Eigen::MatrixXd* out;
        int n;
        void operator()(int path, int step, double, const Eigen::VectorXd& x,
                        const Eigen::VectorXd&, double) {
            const auto it = std::lower_bound(steps->begin(), steps->end(), step);
            if (it == steps->end() || *it != step) return;
            const auto idx = static_cast<int>(it - steps->begin());
            out->block(path, idx * n, 1, n) = x.transpose();
        }
    };

    PathInit init;
    init.x0 = burn_in.samples;
    init.y0 = burn_in.y0;
    detail::run_paths_chunked(spec, law.control(), init, 0, cfg.steps(window), cfg.dt,
                              cfg.base_seed, n_paths, cfg.threads,
                              [&] { return SnapshotObserver{&snap_steps, &snaps, n}; });

    auto snap_index = [&](double t) {
        const int s = cfg.steps(t);
        return static_cast<int>(std::lower_bound(snap_steps.begin(), snap_steps.end(), s) -
                                snap_steps.begin());
    };
    auto paired_z = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const Eigen::VectorXd diff = b - a;
        const double mean = diff.mean();
        const double var = (diff.array() - mean).square().sum() / (n_paths - 1.0);
        const double se = std::sqrt(var / n_paths);
        // deterministic loops have zero spread; floor the scale so the
        // z-score degrades to ~0 instead of 0/0
        const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
        return std::abs(mean) / std::max(se, 1e-8 * (1.0 + scale));
    };

    StationarityResult result;
    for (double b : base_times) {
        for (double lag : lags) {
            const int ia = snap_index(b);
            const int ib = snap_index(b + lag);
            for (int i = 0; i < n; ++i) {
                const Eigen::VectorXd xa = snaps.col(ia * n + i);
                const Eigen::VectorXd xb = snaps.col(ib * n + i);
                result.rows.push_back(
                    {b, lag, "mean_x" + std::to_string(i + 1), paired_z(xa, xb)});
                for (int j = i; j < n; ++j) {
                    const Eigen::VectorXd pa =
                        snaps.col(ia * n + i).cwiseProduct(snaps.col(ia * n + j));
                    const Eigen::VectorXd pb =
                        snaps.col(ib * n + i).cwiseProduct(snaps.col(ib * n + j));
                    result.rows.push_back({b, lag,
                                           "second_x" + std::to_string(i + 1) + "x" +
                                               std::to_string(j + 1),
                                           paired_z(pa, pb)});
                }
            }
        }
    }
    for (const auto& row : result.rows) {
        result.max_discrepancy = std::max(result.max_discrepancy, row.z);
    }
    return result;
}

// Monte Carlo stationary cost over [0, cfg.horizon] from the burn-in
// samples under the law.
inline CostEstimate stationary_cost_mc(const ProblemSpec& spec, const FeedbackLaw& law,
                                       const BurnInResult& burn_in, const SimConfig& cfg) {
    PathInit init;
    init.x0 = burn_in.samples;
    init.y0 = burn_in.y0;
    SimConfig run_cfg = cfg;
    run_cfg.n_paths = static_cast<int>(burn_in.samples.rows());
    return cost_over_window(spec, law.control(), init, run_cfg);
}

} // namespace ergolq
