#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/errors.hpp"
#include "ergolq/model.hpp"
#include "ergolq/rng.hpp"

// Forward Monte Carlo for the affine state equation under an arbitrary
// control rule. Explicit Euler for the state, exact Gaussian transition
// for the factor (sharing the Brownian increment of its drive component),
// per-path noise keyed on (seed, path, time slot), so a run is bit-for-bit
// reproducible for any thread count.

namespace ergolq {

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    int n_paths = 100;
    std::uint64_t base_seed = 12345;
    int threads = 1;

    void check() const {
        if (!(dt > 0.0)) throw ParameterError("SimConfig: dt must be > 0");
        if (horizon < 0.0) throw ParameterError("SimConfig: horizon must be >= 0");
        if (n_paths < 1) throw ParameterError("SimConfig: n_paths must be >= 1");
    }
    int steps(double span) const { return static_cast<int>(std::llround(span / dt)); }
};

struct CostEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    int n_paths = 0;
};

struct DiscountedCostEstimate : CostEstimate {
    double t_trunc = 0.0;     // truncation horizon actually integrated
    double tail_budget = 0.0; // bound on the discarded tail
};

// u(t, x, y) written into the last argument; y is the factor level
// (ignored for constant models).
using ControlFn =
    std::function<void(double t, const Eigen::VectorXd& x, double y, Eigen::VectorXd& u)>;

inline ControlFn zero_control(int k) {
    return [k](double, const Eigen::VectorXd&, double, Eigen::VectorXd& u) {
        u.setZero(k);
    };
}

// Initial data: one row broadcast to every path, or one row per path.
// Empty y0 means the factor starts from its exact stationary law, keyed
// on the starting slot.
struct PathInit {
    Eigen::MatrixXd x0; // 1 x n or n_paths x n
    Eigen::VectorXd y0; // empty or n_paths

    static PathInit broadcast(const Eigen::VectorXd& x) {
        PathInit init;
        init.x0 = x.transpose();
        return init;
    }
};

namespace detail {

inline constexpr int kPathChunk = 256;
inline constexpr std::uint32_t kFactorInitChannel = 0x7fffffffu;

// Per-chunk driver. The observer factory yields one observer per chunk
// (so observers may carry scratch); obs(path, k, t, x, u, y) fires at
// every step including k = 0 and k = n_steps.
template <class ObsFactory>
void run_paths_chunked(const ProblemSpec& spec, const ControlFn& control,
                       const PathInit& init, std::int64_t slot0, int n_steps, double dt,
                       std::uint64_t seed, int n_paths, int threads, ObsFactory&& factory) {
    const int n = spec.dims.n;
    const int k = spec.dims.k;
    const int d = spec.dims.d;
    const bool field = !spec.is_constant();
    if (init.x0.cols() != n || (init.x0.rows() != 1 && init.x0.rows() != n_paths)) {
        throw StructuralError("PathInit: x0 must be 1 x n or n_paths x n");
    }
    if (init.y0.size() != 0 && init.y0.size() != n_paths) {
        throw StructuralError("PathInit: y0 must be empty or one level per path");
    }

    FactorDynamics fd;
    double fac_mean = 0.0, fac_sd = 0.0, decay = 0.0, ou_scale = 0.0;
    if (field) {
        fd = *spec.factor();
        const auto [mu, var] = factor_stationary_law(fd);
        fac_mean = mu;
        fac_sd = std::sqrt(var);
        decay = std::exp(-fd.kappa * dt);
        ou_scale = fd.sigma * std::sqrt((1.0 - std::exp(-2.0 * fd.kappa * dt)) /
                                        (2.0 * fd.kappa));
    }
    const int drive = field ? fd.drive_index - 1 : -1;

    // Noise channels that actually feed the state; the drive channel is
    // always generated in the field case.
    std::vector<char> diffusive(d, 1);
    if (spec.is_constant()) {
        const auto& cc = std::get<ConstantCoeffs>(spec.model);
        for (int i = 0; i < d; ++i) {
            diffusive[i] = (cc.C[i].norm() > 0.0 || cc.D[i].norm() > 0.0) ? 1 : 0;
        }
    } else {
        const auto& fc = std::get<FactorCoeffs>(spec.model);
        for (int i = 0; i < d; ++i) {
            diffusive[i] = (!fc.C[i].all_zero() || !fc.D[i].all_zero()) ? 1 : 0;
        }
    }

    const double sqrt_dt = std::sqrt(dt);
    const int n_chunks = (n_paths + kPathChunk - 1) / kPathChunk;
    const int workers = std::max(1, std::min(threads, n_chunks));

    std::atomic<int> next_chunk{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&]() {
        try {
            CoefficientSnapshot snap;
            eval_coefficients_into(spec.model, fac_mean, snap);
            Eigen::VectorXd x(n), xn(n), u(k), drift(n), diff(n);
            auto obs = factory();
            for (;;) {
                const int chunk = next_chunk.fetch_add(1);
                if (chunk >= n_chunks) break;
                const int lo = chunk * kPathChunk;
                const int hi = std::min(n_paths, lo + kPathChunk);
                for (int path = lo; path < hi; ++path) {
                    x = init.x0.row(init.x0.rows() == 1 ? 0 : path).transpose();
                    double y = 0.0;
                    if (field) {
                        y = init.y0.size()
                                ? init.y0(path)
                                : fac_mean + fac_sd * keyed_normal(seed, path, slot0,
                                                                   kFactorInitChannel);
                    }
                    for (int step = 0;; ++step) {
                        const double t = static_cast<double>(slot0 + step) * dt;
                        control(t, x, y, u);
                        obs(path, step, t, x, u, y);
                        if (step == n_steps) break;

                        if (field) eval_coefficients_into(spec.model, y, snap);
                        drift.noalias() = snap.A * x;
                        drift.noalias() += snap.B * u;
                        drift += snap.f;
                        xn = x + dt * drift;
                        for (int i = 0; i < d; ++i) {
                            if (!diffusive[i] && i != drive) continue;
                            const double dw =
                                keyed_normal(seed, path, slot0 + step, i) * sqrt_dt;
                            if (diffusive[i]) {
                                diff.noalias() = snap.C[i] * x;
                                diff.noalias() += snap.D[i] * u;
                                xn += diff * dw;
                            }
                            if (i == drive) {
                                y = fd.level + (y - fd.level) * decay +
                                    ou_scale * (dw / sqrt_dt);
                            }
                        }
                        x = xn;
                        if (!x.allFinite()) {
                            throw SimulationError(
                                "explosion: non-finite state on path " + std::to_string(path) +
                                " at t=" + std::to_string(t + dt));
                        }
                    }
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

inline CostEstimate reduce_mean(const std::vector<double>& per_path) {
    CostEstimate est;
    est.n_paths = static_cast<int>(per_path.size());
    double sum = 0.0;
    for (double v : per_path) sum += v;
    est.mean = sum / est.n_paths;
    if (est.n_paths > 1) {
        double ss = 0.0;
        for (double v : per_path) ss += (v - est.mean) * (v - est.mean);
        est.std_err = std::sqrt(ss / (est.n_paths - 1.0) / est.n_paths);
    }
    return est;
}

// Per-chunk observer accumulating the trapezoid integral of
// w(t) * (<S x, x> + |u|^2) into a per-path slot.
struct CostIntegralObserver {
    const ProblemSpec* spec;
    double dt;
    int n_steps;
    double two_alpha; // discount rate; 0 for the undiscounted window
    std::vector<double>* out;
    CoefficientSnapshot snap;
    double acc = 0.0;

    void operator()(int path, int step, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u, double y) {
        if (step == 0) {
            acc = 0.0;
            if (spec->is_constant()) eval_coefficients_into(spec->model, 0.0, snap);
        }
        if (!spec->is_constant()) eval_coefficients_into(spec->model, y, snap);
        double integrand = x.dot(snap.S * x) + u.squaredNorm();
        if (two_alpha != 0.0) integrand *= std::exp(-two_alpha * t);
        const double w = (step == 0 || step == n_steps) ? 0.5 : 1.0;
        acc += w * integrand * dt;
        if (step == n_steps) (*out)[path] = acc;
    }
};

} // namespace detail

// Recorded trajectories (every record_stride-th step; stride must divide
// the step count). Column schema of each record: y, x_1..x_n, u_1..u_k.
struct PathBundle {
    int n_paths = 0;
    int n_records = 0;
    int n = 0, k = 0;
    double dt = 0.0;
    int stride = 1;
    std::int64_t slot0 = 0;
    std::vector<double> data; // path-major, then record, then column

    double t_of(int rec) const { return static_cast<double>(slot0 + rec * stride) * dt; }
    double y(int path, int rec) const { return data[offset(path, rec)]; }
    Eigen::Map<const Eigen::VectorXd> x(int path, int rec) const {
        return {data.data() + offset(path, rec) + 1, n};
    }
    Eigen::Map<const Eigen::VectorXd> u(int path, int rec) const {
        return {data.data() + offset(path, rec) + 1 + n, k};
    }
    std::size_t offset(int path, int rec) const {
        return (static_cast<std::size_t>(path) * n_records + rec) * (1 + n + k);
    }
};

inline PathBundle simulate_paths(const ProblemSpec& spec, const ControlFn& control,
                                 const PathInit& init, const SimConfig& cfg,
                                 int record_stride = 1, std::int64_t slot0 = 0) {
    require_valid(spec);
    cfg.check();
    const int n_steps = cfg.steps(cfg.horizon);
    if (record_stride < 1 || n_steps % record_stride != 0) {
        throw ParameterError("simulate_paths: record stride must divide the step count");
    }
    PathBundle bundle;
    bundle.n_paths = cfg.n_paths;
    bundle.n_records = n_steps / record_stride + 1;
    bundle.n = spec.dims.n;
    bundle.k = spec.dims.k;
    bundle.dt = cfg.dt;
    bundle.stride = record_stride;
    bundle.slot0 = slot0;
    bundle.data.assign(bundle.offset(cfg.n_paths, 0), 0.0);

    struct Recorder {
        PathBundle* b;
        int stride;
        void operator()(int path, int step, double, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u, double y) {
            if (step % stride != 0) return;
            double* row = b->data.data() + b->offset(path, step / stride);
            row[0] = y;
            for (int i = 0; i < b->n; ++i) row[1 + i] = x(i);
            for (int i = 0; i < b->k; ++i) row[1 + b->n + i] = u(i);
        }
    };
    detail::run_paths_chunked(spec, control, init, slot0, n_steps, cfg.dt, cfg.base_seed,
                              cfg.n_paths, cfg.threads,
                              [&] { return Recorder{&bundle, record_stride}; });
    return bundle;
}

// Mean and standard error of the trapezoid cost integral over
// [0, cfg.horizon] from the given initial data.
inline CostEstimate cost_over_window(const ProblemSpec& spec, const ControlFn& control,
                                     const PathInit& init, const SimConfig& cfg) {
    require_valid(spec);
    cfg.check();
    const int n_steps = cfg.steps(cfg.horizon);
    std::vector<double> per_path(cfg.n_paths, 0.0);
    detail::run_paths_chunked(spec, control, init, 0, n_steps, cfg.dt, cfg.base_seed,
                              cfg.n_paths, cfg.threads, [&] {
                                  return detail::CostIntegralObserver{
                                      .spec = &spec, .dt = cfg.dt, .n_steps = n_steps,
                                      .two_alpha = 0.0, .out = &per_path};
                              });
    return detail::reduce_mean(per_path);
}

// Discounted cost int_0^inf e^{-2 alpha s} (<S X, X> + |u|^2) ds, truncated
// at T = (1 / 2 alpha) ln(K / (eps 2 alpha)) where K bounds the running
// expected integrand (estimated by a pilot run, tail budget eps = 1e-4).
// A pilot integrand growing faster than e^{2 alpha s} fails admissibility.
inline DiscountedCostEstimate discounted_cost_mc(const ProblemSpec& spec,
                                                 const ControlFn& control,
                                                 const Eigen::VectorXd& x0, double alpha,
                                                 const SimConfig& cfg) {
    require_valid(spec);
    cfg.check();
    if (!(alpha > 0.0)) throw ParameterError("discounted_cost_mc: alpha must be > 0");
    constexpr double kTailBudget = 1e-4;
    const PathInit init = PathInit::broadcast(x0);

    // Pilot: undiscounted mean integrand over a modest horizon.
    const double t_pilot = std::min(std::max(1.0 / alpha, 2.0), 50.0);
    const int pilot_paths = std::min(64, cfg.n_paths);
    const int pilot_steps = cfg.steps(t_pilot);
    std::vector<double> mean_integrand(pilot_steps + 1, 0.0);
    {
        struct PilotObs {
            const ProblemSpec* spec;
            std::vector<double>* sums;
            std::mutex* mu;
            CoefficientSnapshot snap;
            std::vector<double> local;
            void operator()(int, int step, double, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u, double y) {
                if (local.empty()) local.assign(sums->size(), 0.0);
                eval_coefficients_into(spec->model, y, snap);
                local[step] += x.dot(snap.S * x) + u.squaredNorm();
                if (step + 1 == static_cast<int>(sums->size())) flush();
            }
            void flush() {
                std::lock_guard<std::mutex> lock(*mu);
                for (std::size_t i = 0; i < local.size(); ++i) (*sums)[i] += local[i];
                std::fill(local.begin(), local.end(), 0.0);
            }
        };
        std::mutex mu;
        // Single worker keeps the pilot (and hence the truncation horizon)
        // bit-identical for any --threads setting.
        detail::run_paths_chunked(spec, control, init, 0, pilot_steps, cfg.dt,
                                  cfg.base_seed, pilot_paths, /*threads=*/1, [&] {
                                      return PilotObs{
                                          .spec = &spec, .sums = &mean_integrand, .mu = &mu};
                                  });
        for (auto& v : mean_integrand) v /= pilot_paths;
    }

    double cap = 0.0;
    for (double v : mean_integrand) cap = std::max(cap, v);
    cap = std::max(2.0 * cap, 1e-12);

    // Admissibility: compare quarter-window averages of the integrand.
    {
        const int q = (pilot_steps + 1) / 4;
        if (q > 0) {
            double head = 0.0, tail = 0.0;
            for (int i = 0; i < q; ++i) head += mean_integrand[i];
            for (int i = pilot_steps + 1 - q; i <= pilot_steps; ++i) tail += mean_integrand[i];
            head /= q;
            tail /= q;
            if (head > 1e-12 && tail > head) {
                const double gap = 0.75 * t_pilot; // centers of the two quarters
                const double rate = std::log(tail / head) / gap;
                if (rate > 2.0 * alpha) {
                    throw AdmissibilityError(
                        "discounted_cost_mc: integrand grows at rate " +
                        std::to_string(rate) + " > 2 alpha = " + std::to_string(2.0 * alpha) +
                        "; control not admissible for this discount");
                }
            }
        }
    }

    double t_trunc = std::log(cap / (kTailBudget * 2.0 * alpha)) / (2.0 * alpha);
    t_trunc = std::min(std::max(t_trunc, cfg.dt), 1e4);
    const int n_steps = static_cast<int>(std::ceil(t_trunc / cfg.dt));
    t_trunc = n_steps * cfg.dt;

    std::vector<double> per_path(cfg.n_paths, 0.0);
    detail::run_paths_chunked(spec, control, init, 0, n_steps, cfg.dt, cfg.base_seed,
                              cfg.n_paths, cfg.threads, [&] {
                                  return detail::CostIntegralObserver{
                                      .spec = &spec, .dt = cfg.dt, .n_steps = n_steps,
                                      .two_alpha = 2.0 * alpha, .out = &per_path};
                              });
    DiscountedCostEstimate est;
    static_cast<CostEstimate&>(est) = detail::reduce_mean(per_path);
    est.t_trunc = t_trunc;
    est.tail_budget = cap * std::exp(-2.0 * alpha * t_trunc) / (2.0 * alpha);
    return est;
}

} // namespace ergolq
