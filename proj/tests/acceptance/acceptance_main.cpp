// Acceptance suite: end-to-end checks of the solver chain against
// independent oracles (closed-form scalar benchmarks, moment equations,
// Monte Carlo, and extrapolation limits), each with a pinned tolerance
// and a runtime budget. One line per criterion; exit 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../helpers.hpp"

using namespace ergolq;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define EXPECT(cond, msg)                                        \
    do {                                                         \
        if (!(cond)) {                                           \
            std::ostringstream oss;                              \
            oss << msg;                                          \
            throw CriterionFailure(oss.str());                   \
        }                                                        \
    } while (0)

constexpr std::uint64_t kSeed = 20260809;
constexpr int kThreads = 2;

struct Solved {
    RiccatiSolution sol;
    GainSet gs;
    CostateSolution cs;
    FeedbackLaw law;
    double jbar = 0.0;
};

Solved solve_chain(const ProblemSpec& spec, double tol = 1e-9, double dt = 1e-3,
                   std::optional<FactorGrid> grid = std::nullopt) {
    Solved s;
    s.sol = minimal_stationary(spec, grid, tol, dt);
    s.gs = gains(spec, s.sol);
    s.cs = solve_stationary_costate(spec, s.sol, s.gs, tol, dt);
    s.law = synthesize_feedback(spec, s.sol, s.cs);
    s.jbar = stationary_cost_formula(spec, s.sol, s.cs);
    return s;
}

double moment_route_cost(const ProblemSpec& spec, const FeedbackLaw& law) {
    const auto mom =
        detail::constant_loop_moments(spec, law.gains.Lambda[0], law.u_aff[0]);
    return detail::stationary_cost_from_moments(spec, law.gains.Lambda[0], law.u_aff[0],
                                                mom);
}

std::string criterion_1(double) {
    const auto s = solve_chain(testing::sb1());
    const double p_err = std::abs(s.sol.P[0](0, 0) - (std::sqrt(2.0) - 1.0));
    const double r_err = std::abs(s.cs.r[0](0) - (2.0 - std::sqrt(2.0)) / 2.0);
    const double j_err = std::abs(s.jbar - 0.5);
    EXPECT(p_err <= 1e-6, "P error " << p_err << " > 1e-6");
    EXPECT(r_err <= 1e-8, "r error " << r_err << " > 1e-8");
    EXPECT(j_err <= 1e-8, "cost error " << j_err << " > 1e-8");
    std::ostringstream oss;
    oss << "P err " << p_err << ", r err " << r_err << ", cost err " << j_err;
    return oss.str();
}

std::string criterion_2(double) {
    std::ostringstream oss;
    int idx = 0;
    for (const auto& spec : {testing::sb1(), testing::sb2()}) {
        const auto s = solve_chain(spec);
        SimConfig cfg;
        cfg.dt = 1e-3;
        cfg.horizon = 1.0;
        cfg.n_paths = 10000;
        cfg.base_seed = kSeed;
        cfg.threads = kThreads;
        const auto burn = burn_in_init(spec, s.law, cfg, 1e-9, 1.0);
        const auto est = stationary_cost_mc(spec, s.law, burn, cfg);
        const double diff = std::abs(est.mean - s.jbar);
        const double bound = std::max(3.0 * est.std_err, 5.0 * cfg.dt);
        EXPECT(diff <= bound, "benchmark " << idx << ": |mc - formula| = " << diff
                                           << " > " << bound);
        oss << (idx ? "; SB2 " : "SB1 ") << "diff " << diff << " <= " << bound;
        ++idx;
    }
    return oss.str();
}

std::string criterion_3(double) {
    std::ostringstream oss;
    int idx = 0;
    for (const auto& spec : {testing::sb1(), testing::sb2()}) {
        const auto s = solve_chain(spec);
        const double via_moments = moment_route_cost(spec, s.law);
        const double diff = std::abs(via_moments - s.jbar);
        EXPECT(diff <= 1e-6, "benchmark " << idx << ": route difference " << diff);
        oss << (idx ? "; SB2 " : "SB1 ") << "route diff " << diff;
        ++idx;
    }
    return oss.str();
}

std::string criterion_4(double) {
    std::mt19937_64 rng(kSeed);
    const double dt = 2e-3;
    double worst_residual = 0.0;
    double worst_eig = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto spec = testing::random_stable_spec(rng);
        HorizonDiagnostics diag;
        const auto sol = minimal_stationary(spec, std::nullopt, 1e-9, dt, &diag);
        for (double eig : diag.min_increment_eig) {
            EXPECT(eig >= -10.0 * dt,
                   "trial " << trial << ": increment eigenvalue " << eig);
            worst_eig = std::min(worst_eig, eig);
        }
        const double res = residual_norm(spec, sol);
        EXPECT(res < 1e-6, "trial " << trial << ": residual " << res);
        worst_residual = std::max(worst_residual, res);
    }
    std::ostringstream oss;
    oss << "10 specs, worst residual " << worst_residual << ", worst increment eig "
        << worst_eig;
    return oss.str();
}

std::string criterion_5(double) {
    const auto s1 = solve_chain(testing::sb1());
    const auto gap0 = optimality_gap(testing::sb1(), s1.law, Eigen::MatrixXd::Zero(1, 1),
                                     Eigen::VectorXd::Zero(1), s1.jbar);
    EXPECT(std::abs(gap0.gap_direct - 0.5) <= 1e-6,
           "SB1 zero-control gap_direct " << gap0.gap_direct);
    EXPECT(std::abs(gap0.gap_identity - 0.5) <= 1e-6,
           "SB1 zero-control gap_identity " << gap0.gap_identity);

    std::mt19937_64 rng(kSeed + 1);
    std::uniform_real_distribution<double> ud(-0.4, 0.4);
    double worst_mismatch = 0.0;
    int done = 0;
    while (done < 20) {
        const auto spec = testing::random_stable_spec(rng, 3, 2, 2);
        const auto s = solve_chain(spec, 1e-10, 2e-3);
        Eigen::MatrixXd dl(spec.dims.k, spec.dims.n);
        for (int i = 0; i < dl.rows(); ++i)
            for (int j = 0; j < dl.cols(); ++j) dl(i, j) = ud(rng);
        const Eigen::MatrixXd alt = s.law.gains.Lambda[0] + dl;
        const auto snap = eval_coefficients(spec.model, 0.0);
        std::vector<Eigen::MatrixXd> ks;
        for (int i = 0; i < spec.dims.d; ++i) ks.push_back(snap.C[i] + snap.D[i] * alt);
        if (meansquare_abscissa(snap.A + snap.B * alt, ks) >= -0.05) continue;
        Eigen::VectorXd altc = s.law.u_aff[0];
        for (int i = 0; i < altc.size(); ++i) altc(i) += ud(rng);
        const auto gap = optimality_gap(spec, s.law, alt, altc, s.jbar);
        EXPECT(gap.gap_direct >= -1e-9, "trial " << done << ": negative gap "
                                                 << gap.gap_direct);
        const double mismatch = std::abs(gap.gap_direct - gap.gap_identity);
        EXPECT(mismatch <= 1e-6, "trial " << done << ": route mismatch " << mismatch);
        worst_mismatch = std::max(worst_mismatch, mismatch);
        ++done;
    }
    std::ostringstream oss;
    oss << "zero-control gaps " << gap0.gap_direct << " / " << gap0.gap_identity
        << "; 20 perturbations, worst route mismatch " << worst_mismatch;
    return oss.str();
}

std::string criterion_6(double) {
    const std::vector<double> alphas{0.2, 0.1, 0.05, 0.025};
    std::vector<Eigen::VectorXd> xs;
    for (double v : {0.0, 1.0, -2.0}) xs.push_back(Eigen::VectorXd::Constant(1, v));
    const auto report =
        vanishing_discount_sweep(testing::sb1(), xs, alphas, SweepMode::kFormula);

    // fitted linear-rate constant for |2 alpha J - 1/2| at x = 0
    double num = 0.0, den = 0.0;
    for (const auto& row : report.rows) {
        if (row.x_label != "x0") continue;
        num += row.alpha * std::abs(row.two_alpha_J - 0.5);
        den += row.alpha * row.alpha;
    }
    const double c_fit = num / den;
    EXPECT(c_fit <= 2.0, "rate constant " << c_fit << " unreasonably large");
    for (const auto& row : report.rows) {
        if (row.x_label != "x0") continue;
        EXPECT(std::abs(row.two_alpha_J - 0.5) <= 1.25 * c_fit * row.alpha,
               "alpha " << row.alpha << ": deviation exceeds fitted C*alpha");
    }
    EXPECT(report.extrapolated, "extrapolation skipped");
    const double limit_err = std::abs(report.extrapolated_limit - 0.5);
    EXPECT(limit_err <= 0.005, "extrapolated limit off by " << limit_err);

    // spread across x shrinks linearly
    double c_spread = 0.0;
    double prev_spread = std::numeric_limits<double>::infinity();
    for (double alpha : alphas) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& row : report.rows) {
            if (row.alpha == alpha) {
                lo = std::min(lo, row.two_alpha_J);
                hi = std::max(hi, row.two_alpha_J);
            }
        }
        EXPECT(hi - lo < prev_spread, "x-spread not shrinking at alpha " << alpha);
        prev_spread = hi - lo;
        c_spread = std::max(c_spread, (hi - lo) / alpha);
    }
    EXPECT(c_spread <= 4.0, "spread/alpha ratio " << c_spread);
    std::ostringstream oss;
    oss << "C " << c_fit << ", limit err " << limit_err << ", spread C' " << c_spread;
    return oss.str();
}

std::string criterion_7(double) {
    const auto s = solve_chain(testing::sb1());
    const std::vector<double> alphas{0.2, 0.1, 0.05, 0.025};
    double prev_p = std::numeric_limits<double>::infinity();
    double prev_r = std::numeric_limits<double>::infinity();
    double dp = 0.0, dr = 0.0;
    for (double alpha : alphas) {
        const auto ds = solve_discounted(testing::sb1(), alpha);
        dp = (ds.riccati.P[0] - s.sol.P[0]).norm();
        dr = (ds.r_tilde.r[0] - s.cs.r[0]).norm();
        EXPECT(dp < prev_p, "|P_a - P| not decreasing at alpha " << alpha);
        EXPECT(dr < prev_r, "|r_a - r| not decreasing at alpha " << alpha);
        prev_p = dp;
        prev_r = dr;
    }
    const double amin = alphas.back();
    EXPECT(dp <= 5.0 * amin, "|P_a - P| = " << dp << " > 5 alpha at alpha " << amin);
    EXPECT(dr <= 5.0 * amin, "|r_a - r| = " << dr << " > 5 alpha at alpha " << amin);
    std::ostringstream oss;
    oss << "at alpha 0.025: |P_a-P| " << dp << ", |r_a-r| " << dr;
    return oss.str();
}

std::string criterion_8(double) {
    const auto s1 = solve_chain(testing::sb1());
    SimConfig cfg1;
    cfg1.dt = 1e-3;
    cfg1.horizon = 2.0;
    cfg1.n_paths = 8;
    cfg1.base_seed = kSeed;
    const auto fit1 = datko_fit(testing::sb1(), s1.gs, cfg1, Eigen::VectorXd::Ones(1));
    const double target1 = -2.0 * std::sqrt(2.0);
    EXPECT(std::abs(fit1.rate - target1) <= 0.05 * std::abs(target1),
           "SB1 rate " << fit1.rate << " vs " << target1);
    EXPECT(fit1.r_squared >= 0.999, "SB1 R^2 " << fit1.r_squared);

    const auto s2 = solve_chain(testing::sb2());
    SimConfig cfg2;
    cfg2.dt = 1e-3;
    cfg2.horizon = 3.0;
    cfg2.n_paths = 10000;
    cfg2.base_seed = kSeed;
    cfg2.threads = kThreads;
    const auto fit2 = datko_fit(testing::sb2(), s2.gs, cfg2, Eigen::VectorXd::Ones(1));
    const double target2 = 2.0 * s2.gs.H[0](0, 0) +
                           s2.gs.K[0][0](0, 0) * s2.gs.K[0][0](0, 0);
    EXPECT(std::abs(fit2.rate - target2) <= 0.10 * std::abs(target2),
           "SB2 rate " << fit2.rate << " vs " << target2);
    std::ostringstream oss;
    oss << "SB1 rate " << fit1.rate << " (R^2 " << fit1.r_squared << "), SB2 rate "
        << fit2.rate << " vs " << target2;
    return oss.str();
}

std::string criterion_9(double) {
    const auto spec = testing::factor_scalar(0.25);
    const auto grid = default_factor_grid(*spec.factor(), 129);
    const auto s = solve_chain(spec, 1e-8, 1e-3, grid);
    const double res = residual_norm(spec, s.sol);
    EXPECT(res < 1e-6, "Riccati field residual " << res);

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.n_paths = 10000;
    cfg.base_seed = kSeed;
    cfg.threads = kThreads;
    const auto burn = burn_in_init(spec, s.law, cfg, 1e-8, 1.0);
    for (std::size_t i = 0; i + 1 < burn.gaps.size(); ++i) {
        EXPECT(burn.gaps[i + 1] <= 0.7 * burn.gaps[i],
               "burn-in gaps not geometric at doubling " << i);
    }
    const auto stat = stationarity_check(spec, s.law, burn, cfg, {0.25, 0.5, 1.0});
    EXPECT(stat.max_discrepancy <= 3.0, "stationarity |z| " << stat.max_discrepancy);
    const auto est = stationary_cost_mc(spec, s.law, burn, cfg);
    const double diff = std::abs(est.mean - s.jbar);
    const double bound = std::max(3.0 * est.std_err, 5.0 * cfg.dt);
    EXPECT(diff <= bound, "|mc - formula| = " << diff << " > " << bound);
    std::ostringstream oss;
    oss << "residual " << res << ", max |z| " << stat.max_discrepancy << ", cost diff "
        << diff << " <= " << bound;
    return oss.str();
}

std::string criterion_10(double) {
    std::ostringstream oss;
    // forcing removed: everything degenerates to zero
    {
        const auto s = solve_chain(with_zero_forcing(testing::sb1()));
        EXPECT(std::abs(s.cs.r[0](0)) <= 1e-12, "constant r nonzero: " << s.cs.r[0](0));
        EXPECT(std::abs(s.law.u_aff[0](0)) <= 1e-12, "constant u_aff nonzero");
        EXPECT(std::abs(s.jbar) <= 1e-12, "constant cost nonzero: " << s.jbar);
    }
    {
        const auto spec = with_zero_forcing(testing::factor_scalar(0.25));
        const auto grid = default_factor_grid(*spec.factor(), 65);
        const auto s = solve_chain(spec, 1e-9, 2e-3, grid);
        double worst = 0.0;
        for (const auto& r : s.cs.r) worst = std::max(worst, r.cwiseAbs().maxCoeff());
        EXPECT(worst <= 1e-12, "field r nonzero: " << worst);
        EXPECT(std::abs(s.jbar) <= 1e-12, "field cost nonzero: " << s.jbar);
    }
    oss << "f=0 exact";
    // scaling f by 3 scales r by 3 and the cost by 9
    {
        const auto base = solve_chain(testing::sb1(), 1e-11, 1e-3);
        auto scaled_spec = testing::sb1();
        std::get<ConstantCoeffs>(scaled_spec.model).f *= 3.0;
        const auto scaled = solve_chain(scaled_spec, 1e-11, 1e-3);
        const double r_rel =
            std::abs(scaled.cs.r[0](0) - 3.0 * base.cs.r[0](0)) /
            std::abs(3.0 * base.cs.r[0](0));
        const double j_rel = std::abs(scaled.jbar - 9.0 * base.jbar) /
                             std::abs(9.0 * base.jbar);
        EXPECT(r_rel <= 1e-8, "constant r scaling off by " << r_rel);
        EXPECT(j_rel <= 1e-8, "constant cost scaling off by " << j_rel);
        oss << "; constant scaling rel err r " << r_rel << ", J " << j_rel;
    }
    {
        const auto spec = testing::factor_scalar(0.25);
        const auto grid = default_factor_grid(*spec.factor(), 65);
        const auto sol = minimal_stationary(spec, grid, 1e-9, 2e-3);
        const auto gs = gains(spec, sol);
        const auto base_cs = solve_stationary_costate(spec, sol, gs, 1e-11, 2e-3);
        auto scaled_spec = spec;
        std::get<FactorCoeffs>(scaled_spec.model).f.at(0, 0).base *= 3.0;
        const auto scaled_cs =
            solve_stationary_costate(scaled_spec, sol, gs, 1e-11, 2e-3);
        const double base_j = stationary_cost_formula(spec, sol, base_cs);
        const double scaled_j = stationary_cost_formula(scaled_spec, sol, scaled_cs);
        double r_rel = 0.0;
        for (int i = 0; i < base_cs.nodes(); ++i) {
            r_rel = std::max(r_rel, std::abs(scaled_cs.r[i](0) - 3.0 * base_cs.r[i](0)) /
                                        std::abs(3.0 * base_cs.r[i](0)));
        }
        const double j_rel = std::abs(scaled_j - 9.0 * base_j) / std::abs(9.0 * base_j);
        EXPECT(r_rel <= 1e-8, "field r scaling off by " << r_rel);
        EXPECT(j_rel <= 1e-8, "field cost scaling off by " << j_rel);
        oss << "; field rel err r " << r_rel << ", J " << j_rel;
    }
    return oss.str();
}

struct Criterion {
    int number;
    const char* name;
    double budget_s;
    std::function<std::string(double)> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "scalar benchmark closed forms", 5.0, criterion_1},
        {2, "Monte Carlo cost identity", 60.0, criterion_2},
        {3, "moment-route cost oracle", 1.0, criterion_3},
        {4, "monotone horizon family", 0.0, criterion_4},
        {5, "completion-of-squares gap", 0.0, criterion_5},
        {6, "vanishing-discount limit", 30.0, criterion_6},
        {7, "discounted-to-stationary convergence", 0.0, criterion_7},
        {8, "Datko decay rates", 0.0, criterion_8},
        {9, "factor-driven smoke suite", 300.0, criterion_9},
        {10, "degenerate forcing cases", 0.0, criterion_10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = Clock::now();
        std::string detail;
        bool pass = true;
        try {
            detail = c.run(c.budget_s);
        } catch (const std::exception& e) {
            pass = false;
            detail = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(Clock::now() - start).count();
        if (pass && c.budget_s > 0.0 && elapsed > c.budget_s) {
            pass = false;
            detail += " [runtime " + std::to_string(elapsed) + "s over budget " +
                      std::to_string(c.budget_s) + "s]";
        }
        std::printf("[%s] %2d. %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", c.number,
                    c.name, detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
