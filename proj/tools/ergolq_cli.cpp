// Command-line front end for the stationary/ergodic linear-quadratic
// toolkit. Subcommands mirror the solver pipeline:
//
//   validate    standing-hypothesis checks on a problem spec
//   riccati     minimal stationary Riccati solution + certificates
//   costate     stationary dual pair and affine control term
//   stationary  burn-in sampler, moments, stationarity diagnostics
//   simulate    Monte Carlo cost estimators (stationary / discounted)
//   sweep       vanishing-discount table and extrapolation
//   gap         completion-of-squares optimality-gap identity
//   report      formula vs Monte Carlo vs moment-route cost comparison
//
// Every JSON artifact embeds the resolved configuration and a content
// hash of the input spec. Exit codes: 0 success, 1 validation or solver
// failure, 2 bad invocation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ergolq/ergolq.hpp"

namespace fs = std::filesystem;
using ergolq::json;

namespace {

struct Options {
    std::string spec_path;
    std::string out_dir = "ergolq_out";
    std::uint64_t seed = 12345;
    double dt = 1e-3;
    int paths = 10000;
    double tol = 1e-9;
    int threads = 1;
    std::string alphas = "0.2,0.1,0.05,0.025";
    std::string xs = "0";
    std::string lags = "0.25,0.5,1.0";
    std::string mode = "formula"; // sweep: formula|mc; simulate: stationary|discounted
    double alpha = 0.1;
    double horizon = 1.0;
    double n0 = 1.0;
    int grid_nodes = ergolq::kDefaultGridNodes;
    int perturbations = 20;
    bool dump_paths = false;
};

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        if (!tok.empty()) out.push_back(std::stod(tok));
        pos = next + 1;
    }
    if (out.empty()) throw ergolq::ParameterError("empty numeric list: '" + text + "'");
    return out;
}

// Semicolon-separated vectors with comma-separated components:
// "0;1;-2" (n=1) or "1,0;0,1" (n=2).
std::vector<Eigen::VectorXd> parse_x_list(const std::string& text, int n) {
    std::vector<Eigen::VectorXd> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t next = text.find(';', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        if (!tok.empty()) {
            const auto vals = parse_csv_doubles(tok);
            if (static_cast<int>(vals.size()) != n) {
                throw ergolq::ParameterError("x vector '" + tok + "' has " +
                                             std::to_string(vals.size()) +
                                             " components, expected " + std::to_string(n));
            }
            out.push_back(Eigen::Map<const Eigen::VectorXd>(vals.data(), n));
        }
        if (next == text.size()) break;
        pos = next + 1;
    }
    if (out.empty()) throw ergolq::ParameterError("empty x list");
    return out;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ergolq::StructuralError("cannot write " + path.string());
    out << text;
}

struct Workspace {
    Options opt;
    ergolq::ProblemSpec spec;
    std::string spec_hash;
    std::optional<ergolq::FactorGrid> grid;

    ergolq::SolverOptions solver() const {
        ergolq::SolverOptions s;
        s.riccati_tol = opt.tol;
        s.costate_tol = std::min(opt.tol, 1e-9);
        s.dt = std::min(opt.dt, ergolq::kMaxSolverStep);
        s.grid = grid;
        return s;
    }
    ergolq::SimConfig sim() const {
        ergolq::SimConfig cfg;
        cfg.dt = opt.dt;
        cfg.horizon = opt.horizon;
        cfg.n_paths = opt.paths;
        cfg.base_seed = opt.seed;
        cfg.threads = opt.threads;
        return cfg;
    }
    json config(const std::string& command) const {
        return json{{"command", command},
                    {"spec", opt.spec_path},
                    {"spec_hash", spec_hash},
                    {"out", opt.out_dir},
                    {"seed", opt.seed},
                    {"dt", opt.dt},
                    {"paths", opt.paths},
                    {"tol", opt.tol},
                    {"threads", opt.threads},
                    {"alphas", opt.alphas},
                    {"xs", opt.xs},
                    {"lags", opt.lags},
                    {"mode", opt.mode},
                    {"alpha", opt.alpha},
                    {"horizon", opt.horizon},
                    {"n0", opt.n0},
                    {"grid_nodes", opt.grid_nodes},
                    {"perturbations", opt.perturbations},
                    {"schema_version", 1}};
    }
    void emit(const std::string& command, const std::string& file, json body) const {
        body["config"] = config(command);
        body["spec_hash"] = spec_hash;
        write_text(fs::path(opt.out_dir) / file, body.dump(2) + "\n");
    }
};

Workspace open_workspace(const Options& opt) {
    Workspace ws;
    ws.opt = opt;
    ws.spec = ergolq::load_spec(opt.spec_path, &ws.spec_hash);
    if (ws.spec.factor()) {
        ws.grid = ergolq::default_factor_grid(*ws.spec.factor(), opt.grid_nodes);
    }
    return ws;
}

struct Solved {
    ergolq::RiccatiSolution sol;
    ergolq::GainSet gs;
    ergolq::CostateSolution cs;
    ergolq::FeedbackLaw law;
    double jbar = 0.0;
};

Solved solve_pipeline(const Workspace& ws) {
    const auto s = ws.solver();
    Solved out;
    out.sol = ergolq::minimal_stationary(ws.spec, s.grid, s.riccati_tol, s.dt);
    out.gs = ergolq::gains(ws.spec, out.sol);
    out.cs = ergolq::solve_stationary_costate(ws.spec, out.sol, out.gs, s.costate_tol, s.dt);
    out.law = ergolq::synthesize_feedback(ws.spec, out.sol, out.cs);
    out.jbar = ergolq::stationary_cost_formula(ws.spec, out.sol, out.cs);
    return out;
}

int run_validate(const Workspace& ws) {
    const auto report = ergolq::validate(ws.spec);
    json checks = json::array();
    for (const auto& c : report.checks) {
        std::printf("[%s] %s: %s\n", c.pass ? "pass" : "FAIL", c.name.c_str(),
                    c.witness.c_str());
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"witness", c.witness}});
    }
    ws.emit("validate", "validate.json", json{{"pass", report.pass}, {"checks", checks}});
    std::printf("%s\n", report.pass ? "spec valid" : "spec INVALID");
    return report.pass ? 0 : 1;
}

int run_riccati(const Workspace& ws) {
    ergolq::HorizonDiagnostics diag;
    const auto s = ws.solver();
    const auto sol =
        ergolq::minimal_stationary(ws.spec, s.grid, s.riccati_tol, s.dt, &diag);
    const double residual = ergolq::residual_norm(ws.spec, sol);
    const auto gs = ergolq::gains(ws.spec, sol);
    const double certificate = ergolq::stability_certificate(ws.spec, gs);

    json body = ergolq::to_json(sol);
    body["residual"] = residual;
    body["meansquare_abscissa"] = certificate;
    body["horizons"] = diag.horizons;
    body["horizon_gaps"] = diag.gaps;
    ws.emit("riccati", "riccati.json", std::move(body));

    if (sol.rep == ergolq::Rep::kConstant) {
        std::printf("P(0,0) = %s\n", fmt17(sol.P[0](0, 0)).c_str());
        std::printf("mean-square abscissa = %s\n", fmt17(certificate).c_str());
    }
    std::printf("generator residual = %s\n", fmt17(residual).c_str());
    return 0;
}

int run_costate(const Workspace& ws) {
    const auto solved = solve_pipeline(ws);
    const double residual =
        ergolq::costate_residual(ws.spec, solved.sol, solved.gs, solved.cs);
    json body = ergolq::to_json(solved.cs);
    body["dual_residual"] = residual;
    json aff = json::array();
    for (const auto& u : solved.law.u_aff) aff.push_back(ergolq::to_json(u));
    body["u_aff"] = std::move(aff);
    ws.emit("costate", "costate.json", std::move(body));
    if (solved.cs.rep == ergolq::Rep::kConstant) {
        std::printf("r(0) = %s\n", fmt17(solved.cs.r[0](0)).c_str());
    }
    std::printf("dual residual = %s\n", fmt17(residual).c_str());
    return 0;
}

int run_stationary(const Workspace& ws) {
    const auto solved = solve_pipeline(ws);
    const auto cfg = ws.sim();
    const auto burn = ergolq::burn_in_init(ws.spec, solved.law, cfg, ws.opt.tol, ws.opt.n0);
    const auto lag_list = parse_csv_doubles(ws.opt.lags);
    const auto stat = ergolq::stationarity_check(ws.spec, solved.law, burn, cfg, lag_list);

    json body{{"n_used", burn.n_used},
              {"gaps", burn.gaps},
              {"max_discrepancy", stat.max_discrepancy}};
    json rows = json::array();
    for (const auto& r : stat.rows) {
        rows.push_back({{"base_t", r.base_t}, {"lag", r.lag}, {"stat", r.stat}, {"z", r.z}});
    }
    body["stationarity"] = std::move(rows);
    if (ws.spec.is_constant()) {
        const auto [m, m2] = ergolq::stationary_moments_constant(ws.spec, solved.law);
        body["moment_mean"] = ergolq::to_json(m);
        body["moment_second"] = ergolq::to_json(m2);
    }

    std::string csv = "path_id";
    for (int i = 0; i < ws.spec.dims.n; ++i) csv += ",x_" + std::to_string(i + 1);
    if (!ws.spec.is_constant()) csv += ",y";
    csv += "\n";
    for (int p = 0; p < burn.samples.rows(); ++p) {
        csv += std::to_string(p);
        for (int i = 0; i < ws.spec.dims.n; ++i) csv += "," + fmt17(burn.samples(p, i));
        if (!ws.spec.is_constant()) csv += "," + fmt17(burn.y0(p));
        csv += "\n";
    }
    write_text(fs::path(ws.opt.out_dir) / "stationary_samples.csv", csv);
    ws.emit("stationary", "stationary.json", std::move(body));
    std::printf("burn-in look-back N = %s, final gap = %s\n", fmt17(burn.n_used).c_str(),
                fmt17(burn.gaps.back()).c_str());
    std::printf("stationarity max |z| = %s\n", fmt17(stat.max_discrepancy).c_str());
    return 0;
}

int run_simulate(const Workspace& ws) {
    const auto solved = solve_pipeline(ws);
    const auto cfg = ws.sim();
    json body;
    if (ws.opt.mode == "stationary") {
        const auto burn =
            ergolq::burn_in_init(ws.spec, solved.law, cfg, ws.opt.tol, ws.opt.n0);
        const auto est = ergolq::stationary_cost_mc(ws.spec, solved.law, burn, cfg);
        body = json{{"mode", "stationary"},
                    {"mean", est.mean},
                    {"std_err", est.std_err},
                    {"n_paths", est.n_paths},
                    {"dt", cfg.dt},
                    {"formula", solved.jbar},
                    {"abs_difference", std::abs(est.mean - solved.jbar)}};
        std::printf("stationary cost MC = %s +- %s, formula = %s\n",
                    fmt17(est.mean).c_str(), fmt17(est.std_err).c_str(),
                    fmt17(solved.jbar).c_str());
    } else if (ws.opt.mode == "discounted") {
        const auto ds = ergolq::solve_discounted(ws.spec, ws.opt.alpha, ws.solver());
        const auto xs = parse_x_list(ws.opt.xs, ws.spec.dims.n);
        const auto est = ergolq::discounted_cost_mc(ws.spec, ds.law().control(), xs[0],
                                                    ws.opt.alpha, cfg);
        const double formula = ergolq::discounted_value(ds, xs[0]);
        body = json{{"mode", "discounted"},
                    {"alpha", ws.opt.alpha},
                    {"mean", est.mean},
                    {"std_err", est.std_err},
                    {"n_paths", est.n_paths},
                    {"dt", cfg.dt},
                    {"t_trunc", est.t_trunc},
                    {"tail_budget", est.tail_budget},
                    {"formula", formula},
                    {"abs_difference", std::abs(est.mean - formula)}};
        std::printf("discounted cost MC = %s +- %s, formula = %s\n", fmt17(est.mean).c_str(),
                    fmt17(est.std_err).c_str(), fmt17(formula).c_str());
    } else {
        throw CLI::ValidationError("--mode must be stationary or discounted");
    }
    if (ws.opt.dump_paths) {
        ergolq::SimConfig dump_cfg = cfg;
        dump_cfg.n_paths = std::min(cfg.n_paths, 16);
        const auto bundle = ergolq::simulate_paths(
            ws.spec, solved.law.control(),
            ergolq::PathInit::broadcast(Eigen::VectorXd::Zero(ws.spec.dims.n)), dump_cfg);
        std::string csv = "path,t,y";
        for (int i = 0; i < ws.spec.dims.n; ++i) csv += ",x_" + std::to_string(i + 1);
        for (int i = 0; i < ws.spec.dims.k; ++i) csv += ",u_" + std::to_string(i + 1);
        csv += "\n";
        for (int p = 0; p < bundle.n_paths; ++p) {
            for (int r = 0; r < bundle.n_records; ++r) {
                csv += std::to_string(p) + "," + fmt17(bundle.t_of(r)) + "," +
                       fmt17(bundle.y(p, r));
                for (int i = 0; i < ws.spec.dims.n; ++i) csv += "," + fmt17(bundle.x(p, r)(i));
                for (int i = 0; i < ws.spec.dims.k; ++i) csv += "," + fmt17(bundle.u(p, r)(i));
                csv += "\n";
            }
        }
        write_text(fs::path(ws.opt.out_dir) / "paths.csv", csv);
    }
    ws.emit("simulate", "simulate.json", std::move(body));
    return 0;
}

int run_sweep(const Workspace& ws) {
    const auto alphas = parse_csv_doubles(ws.opt.alphas);
    const auto xs = parse_x_list(ws.opt.xs, ws.spec.dims.n);
    const auto mode = ws.opt.mode == "mc" ? ergolq::SweepMode::kMonteCarlo
                                          : ergolq::SweepMode::kFormula;
    const auto report =
        ergolq::vanishing_discount_sweep(ws.spec, xs, alphas, mode, ws.solver(), ws.sim());

    std::string csv = "alpha,x_label,two_alpha_j,std_err\n";
    for (const auto& row : report.rows) {
        csv += fmt17(row.alpha) + "," + row.x_label + "," + fmt17(row.two_alpha_J) + "," +
               fmt17(row.std_err) + "\n";
    }
    write_text(fs::path(ws.opt.out_dir) / "sweep.csv", csv);

    ws.emit("sweep", "sweep.json",
            json{{"extrapolated_limit", report.extrapolated_limit},
                 {"stationary_cost", report.stationary_cost},
                 {"max_x_spread", report.max_x_spread},
                 {"fit_residual", report.fit_residual},
                 {"extrapolated", report.extrapolated}});
    std::printf("extrapolated limit = %s, stationary cost = %s\n",
                fmt17(report.extrapolated_limit).c_str(),
                fmt17(report.stationary_cost).c_str());
    return 0;
}

int run_gap(const Workspace& ws) {
    if (!ws.spec.is_constant()) {
        throw ergolq::StructuralError("gap: constant-coefficient specs only");
    }
    const auto solved = solve_pipeline(ws);
    json rows = json::array();
    double worst = 0.0;
    auto push_row = [&](const std::string& label, const Eigen::MatrixXd& lam,
                        const Eigen::VectorXd& c) {
        const auto gap = ergolq::optimality_gap(ws.spec, solved.law, lam, c, solved.jbar);
        worst = std::max(worst, std::abs(gap.gap_direct - gap.gap_identity));
        rows.push_back({{"label", label},
                        {"gap_direct", gap.gap_direct},
                        {"gap_identity", gap.gap_identity}});
    };
    push_row("optimal", solved.law.gains.Lambda[0], solved.law.u_aff[0]);
    push_row("zero_control", Eigen::MatrixXd::Zero(ws.spec.dims.k, ws.spec.dims.n),
             Eigen::VectorXd::Zero(ws.spec.dims.k));

    const auto snap = ergolq::eval_coefficients(ws.spec.model, 0.0);
    std::mt19937_64 rng(ws.opt.seed);
    std::uniform_real_distribution<double> ud(-0.4, 0.4);
    int made = 0;
    while (made < ws.opt.perturbations) {
        Eigen::MatrixXd dl(ws.spec.dims.k, ws.spec.dims.n);
        for (int i = 0; i < dl.rows(); ++i)
            for (int j = 0; j < dl.cols(); ++j) dl(i, j) = ud(rng);
        const Eigen::MatrixXd alt = solved.law.gains.Lambda[0] + dl;
        std::vector<Eigen::MatrixXd> ks;
        for (int i = 0; i < ws.spec.dims.d; ++i) ks.push_back(snap.C[i] + snap.D[i] * alt);
        if (ergolq::meansquare_abscissa(snap.A + snap.B * alt, ks) >= -0.05) continue;
        Eigen::VectorXd altc = solved.law.u_aff[0];
        for (int i = 0; i < altc.size(); ++i) altc(i) += ud(rng);
        push_row("perturbation_" + std::to_string(made), alt, altc);
        ++made;
    }
    ws.emit("gap", "gap.json",
            json{{"rows", rows}, {"max_route_mismatch", worst}, {"optimal_cost", solved.jbar}});
    std::printf("max |gap_direct - gap_identity| = %s over %d laws\n", fmt17(worst).c_str(),
                static_cast<int>(rows.size()));
    return 0;
}

int run_report(const Workspace& ws) {
    const auto solved = solve_pipeline(ws);
    const auto cfg = ws.sim();
    const auto burn = ergolq::burn_in_init(ws.spec, solved.law, cfg, ws.opt.tol, ws.opt.n0);
    const auto mc = ergolq::stationary_cost_mc(ws.spec, solved.law, burn, cfg);

    json body{{"stationary_cost_formula", solved.jbar},
              {"stationary_cost_mc",
               {{"mean", mc.mean}, {"std_err", mc.std_err}, {"n_paths", mc.n_paths}}},
              {"riccati_residual", ergolq::residual_norm(ws.spec, solved.sol)},
              {"dual_residual",
               ergolq::costate_residual(ws.spec, solved.sol, solved.gs, solved.cs)}};
    body["mc_tolerance"] = std::max(3.0 * mc.std_err, 5.0 * cfg.dt);
    body["mc_within_tolerance"] =
        std::abs(mc.mean - solved.jbar) <= std::max(3.0 * mc.std_err, 5.0 * cfg.dt);
    if (ws.spec.is_constant()) {
        const double moment_route = ergolq::detail::stationary_cost_from_moments(
            ws.spec, solved.law.gains.Lambda[0], solved.law.u_aff[0],
            ergolq::detail::constant_loop_moments(ws.spec, solved.law.gains.Lambda[0],
                                                  solved.law.u_aff[0]));
        body["stationary_cost_moments"] = moment_route;
        body["moment_route_difference"] = std::abs(moment_route - solved.jbar);
    }
    ws.emit("report", "report.json", std::move(body));
    std::printf("formula = %s, mc = %s +- %s\n", fmt17(solved.jbar).c_str(),
                fmt17(mc.mean).c_str(), fmt17(mc.std_err).c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stationary and ergodic linear-quadratic control toolkit"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* cmd, bool needs_spec = true) {
        auto* spec_opt = cmd->add_option("--spec", opt.spec_path, "problem spec JSON");
        if (needs_spec) spec_opt->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--seed", opt.seed, "base RNG seed");
        cmd->add_option("--dt", opt.dt, "time step");
        cmd->add_option("--paths", opt.paths, "Monte Carlo path count");
        cmd->add_option("--tol", opt.tol, "solver / burn-in tolerance");
        cmd->add_option("--threads", opt.threads, "worker threads (results invariant)");
        cmd->add_option("--grid-nodes", opt.grid_nodes, "factor grid nodes");
        return cmd;
    };

    auto* validate_cmd = add_common(app.add_subcommand("validate", "check the spec"));
    auto* riccati_cmd = add_common(app.add_subcommand("riccati", "stationary Riccati solve"));
    auto* costate_cmd = add_common(app.add_subcommand("costate", "stationary dual solve"));
    auto* stationary_cmd =
        add_common(app.add_subcommand("stationary", "burn-in and stationarity"));
    stationary_cmd->add_option("--n0", opt.n0, "initial look-back");
    stationary_cmd->add_option("--lags", opt.lags, "stationarity lags (CSV)");
    auto* simulate_cmd = add_common(app.add_subcommand("simulate", "cost estimators"));
    simulate_cmd->add_option("--mode", opt.mode, "stationary | discounted");
    simulate_cmd->add_option("--alpha", opt.alpha, "discount rate");
    simulate_cmd->add_option("--xs", opt.xs, "initial state(s)");
    simulate_cmd->add_option("--horizon", opt.horizon, "cost window length");
    simulate_cmd->add_option("--n0", opt.n0, "initial look-back");
    simulate_cmd->add_flag("--dump-paths", opt.dump_paths, "write paths.csv");
    auto* sweep_cmd = add_common(app.add_subcommand("sweep", "vanishing-discount sweep"));
    sweep_cmd->add_option("--alphas", opt.alphas, "discount rates (CSV, descending)");
    sweep_cmd->add_option("--xs", opt.xs, "initial states ('0;1;-2')");
    sweep_cmd->add_option("--mode", opt.mode, "formula | mc");
    auto* gap_cmd = add_common(app.add_subcommand("gap", "optimality-gap identity"));
    gap_cmd->add_option("--perturbations", opt.perturbations, "random alternative laws");
    auto* report_cmd = add_common(app.add_subcommand("report", "cost route comparison"));
    report_cmd->add_option("--n0", opt.n0, "initial look-back");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const Workspace ws = open_workspace(opt);
        if (validate_cmd->parsed()) return run_validate(ws);
        ergolq::require_valid(ws.spec);
        if (riccati_cmd->parsed()) return run_riccati(ws);
        if (costate_cmd->parsed()) return run_costate(ws);
        if (stationary_cmd->parsed()) return run_stationary(ws);
        if (simulate_cmd->parsed()) return run_simulate(ws);
        if (sweep_cmd->parsed()) return run_sweep(ws);
        if (gap_cmd->parsed()) return run_gap(ws);
        if (report_cmd->parsed()) return run_report(ws);
        std::fprintf(stderr, "unknown subcommand\n");
        return 2;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "invocation error: %s\n", e.what());
        return 2;
    } catch (const ergolq::Error& e) {
        std::fprintf(stderr, "[error] %s\n", e.what());
        return 1;
    }
}
