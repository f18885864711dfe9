#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace ergolq;

namespace {

struct Synth {
    ProblemSpec spec;
    RiccatiSolution sol;
    GainSet gs;
    CostateSolution cs;
    FeedbackLaw law;
};

Synth synth(const ProblemSpec& spec, double tol = 1e-10, double dt = 1e-3) {
    Synth s{spec, {}, {}, {}, {}};
    s.sol = minimal_stationary(spec, std::nullopt, tol, dt);
    s.gs = gains(spec, s.sol);
    s.cs = solve_stationary_costate(spec, s.sol, s.gs, tol, dt);
    s.law = synthesize_feedback(spec, s.sol, s.cs);
    return s;
}

} // namespace

TEST_CASE("synthesized SB1 law") {
    const testing::Sb1Oracle o;
    const auto s = synth(testing::sb1());
    Eigen::VectorXd u(1), x(1);
    x << 0.5;
    s.law.control()(0.0, x, 0.0, u);
    REQUIRE(std::abs(u(0) - (-0.5)) < 1e-8); // -(sqrt2-1)/2 - (2-sqrt2)/2 = -1/2
    x << 1.0;
    s.law.control()(0.0, x, 0.0, u);
    REQUIRE(std::abs(u(0) - (o.lambda + o.u_aff)) < 1e-8);
}

TEST_CASE("zero solution synthesizes the zero law") {
    // Hand-built P = 0, r = 0 (legal only as a synthetic input).
    const auto spec = with_zero_forcing(testing::sb1());
    RiccatiSolution sol;
    sol.rep = Rep::kConstant;
    sol.P = {Eigen::MatrixXd::Zero(1, 1)};
    const auto gs = gains(spec, sol);
    CostateSolution cs;
    cs.rep = Rep::kConstant;
    cs.r = {Eigen::VectorXd::Zero(1)};
    const auto law = synthesize_feedback(spec, sol, cs);
    Eigen::VectorXd u(1), x(1);
    x << 3.0;
    law.control()(0.0, x, 0.0, u);
    REQUIRE(u(0) == 0.0);
}

TEST_CASE("feedback substitution reproduces closed-loop drift and diffusion") {
    for (const auto& spec : {testing::sb1(), testing::sb2()}) {
        const auto s = synth(spec);
        const auto snap = eval_coefficients(spec.model, 0.0);
        Eigen::VectorXd x(1);
        x << 0.73;
        Eigen::VectorXd u(1);
        s.law.control()(0.0, x, 0.0, u);
        const Eigen::VectorXd drift_direct = snap.A * x + snap.B * u + snap.f;
        const Eigen::VectorXd drift_closed =
            s.gs.H[0] * x + snap.B * s.law.u_aff[0] + snap.f;
        REQUIRE((drift_direct - drift_closed).norm() < 1e-12);
        const Eigen::VectorXd diff_direct = snap.C[0] * x + snap.D[0] * u;
        const Eigen::VectorXd diff_closed =
            s.gs.K[0][0] * x + snap.D[0] * s.law.u_aff[0];
        REQUIRE((diff_direct - diff_closed).norm() < 1e-12);
    }
}

TEST_CASE("stationary moments of SB1") {
    const auto s = synth(testing::sb1());
    const auto [m, m2] = stationary_moments_constant(s.spec, s.law);
    REQUIRE(std::abs(m(0) - 0.5) < 1e-9);
    REQUIRE(std::abs(m2(0, 0) - 0.25) < 1e-9);
}

TEST_CASE("stationary moments vanish without forcing") {
    const auto s = synth(with_zero_forcing(testing::sb1()));
    const auto [m, m2] = stationary_moments_constant(s.spec, s.law);
    REQUIRE(std::abs(m(0)) < 1e-12);
    REQUIRE(std::abs(m2(0, 0)) < 1e-12);
}

TEST_CASE("closed-loop drift vanishes at the stationary mean") {
    for (const auto& spec : {testing::sb1(), testing::sb2()}) {
        const auto s = synth(spec);
        const auto snap = eval_coefficients(spec.model, 0.0);
        const auto [m, m2] = stationary_moments_constant(s.spec, s.law);
        REQUIRE((s.gs.H[0] * m + snap.B * s.law.u_aff[0] + snap.f).norm() <= 1e-9);
    }
}

TEST_CASE("burn-in on the deterministic benchmark") {
    const auto s = synth(testing::sb1());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 128;
    cfg.base_seed = 555;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-10, 1.0);
    for (int p = 0; p < cfg.n_paths; ++p) {
        REQUIRE(std::abs(burn.samples(p, 0) - 0.5) < 1e-5);
    }
    for (std::size_t i = 0; i + 1 < burn.gaps.size(); ++i) {
        REQUIRE(burn.gaps[i + 1] < burn.gaps[i]);
    }
    REQUIRE(burn.gaps.back() < 1e-10);
}

TEST_CASE("homogeneous loop burns in to zero immediately") {
    const auto s = synth(with_zero_forcing(testing::sb1()));
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 128;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-10, 1.0);
    REQUIRE(burn.gaps.size() == 1);
    REQUIRE(burn.samples.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("burn-in is reproducible bit for bit") {
    const auto s = synth(testing::sb2());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 256;
    cfg.base_seed = 777;
    const auto a = burn_in_init(s.spec, s.law, cfg, 1e-8, 1.0);
    const auto b = burn_in_init(s.spec, s.law, cfg, 1e-8, 1.0);
    REQUIRE(a.n_used == b.n_used);
    REQUIRE((a.samples - b.samples).norm() == 0.0);
}

TEST_CASE("burn-in mean agrees with the moment oracle") {
    const auto s = synth(testing::sb2());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 4000;
    cfg.base_seed = 901;
    cfg.threads = 2;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-8, 1.0);
    const auto [m, m2] = stationary_moments_constant(s.spec, s.law);
    const double mean = burn.samples.col(0).mean();
    const double var =
        (burn.samples.col(0).array() - mean).square().sum() / (cfg.n_paths - 1.0);
    const double se = std::sqrt(var / cfg.n_paths);
    REQUIRE(std::abs(mean - m(0)) < 3.0 * se);
    const double second = burn.samples.col(0).array().square().mean();
    REQUIRE(std::abs(second - m2(0, 0)) < 5.0 * se * 2.0 * std::abs(mean) + 1e-3);
}

TEST_CASE("burn-in gaps decay consistently with the Datko rate") {
    const auto s = synth(testing::sb2());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 1000;
    cfg.base_seed = 424;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-9, 1.0);

    SimConfig dcfg = cfg;
    dcfg.horizon = 3.0;
    dcfg.n_paths = 2000;
    const auto fit = datko_fit(s.spec, s.gs, dcfg, Eigen::VectorXd::Ones(1));
    const double a = -fit.rate;
    REQUIRE(a > 0.0);
    // gap(2N)/gap(N) ~ e^{-a N} with N = N0 2^i, within a factor of 10
    double n = 1.0;
    for (std::size_t i = 0; i + 1 < burn.gaps.size(); ++i) {
        if (burn.gaps[i + 1] < 1e-12) break;
        const double ratio = burn.gaps[i + 1] / burn.gaps[i];
        REQUIRE(ratio <= 10.0 * std::exp(-a * n));
        n *= 2.0;
    }
}

TEST_CASE("datko fit on the deterministic loop") {
    const auto s = synth(testing::sb1());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 2.0;
    cfg.n_paths = 4;
    const auto fit = datko_fit(s.spec, s.gs, cfg, Eigen::VectorXd::Ones(1));
    REQUIRE_FALSE(fit.degenerate);
    REQUIRE(std::abs(fit.rate - (-2.0 * std::sqrt(2.0))) <
            0.05 * 2.0 * std::sqrt(2.0));
    REQUIRE(fit.r_squared >= 0.999);
}

TEST_CASE("datko fit from the origin is degenerate") {
    const auto s = synth(testing::sb1());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.n_paths = 4;
    const auto fit = datko_fit(s.spec, s.gs, cfg, Eigen::VectorXd::Zero(1));
    REQUIRE(fit.degenerate);
    REQUIRE(std::isnan(fit.rate));
}

TEST_CASE("stationarity check accepts the stationary start and flags a transient") {
    const auto s = synth(testing::sb2());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 4000;
    cfg.base_seed = 60613;
    cfg.threads = 2;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-8, 1.0);
    const std::vector<double> lags{0.25, 0.5, 1.0};
    const auto ok = stationarity_check(s.spec, s.law, burn, cfg, lags);
    INFO("max z = " << ok.max_discrepancy);
    REQUIRE(ok.max_discrepancy <= 3.0);

    // negative control: start far from the stationary mean
    const auto [m, m2] = stationary_moments_constant(s.spec, s.law);
    BurnInResult fake = burn;
    fake.samples.setConstant(10.0 * m(0));
    const auto bad = stationarity_check(s.spec, s.law, fake, cfg, lags);
    REQUIRE(bad.max_discrepancy > 3.0);
}

TEST_CASE("deterministic loop has zero discrepancy") {
    const auto s = synth(testing::sb1());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 200;
    const auto burn = burn_in_init(s.spec, s.law, cfg, 1e-10, 1.0);
    const auto res = stationarity_check(s.spec, s.law, burn, cfg, {0.25, 0.5});
    REQUIRE(res.max_discrepancy < 1e-2);
}
