#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ergolq/errors.hpp"
#include "ergolq/linalg.hpp"

// Problem data for the affine state equation
//   dX = (A X + B u + f) dt + sum_i (C^i X + D^i u) dW^i
// with running cost <S X, X> + |u|^2. Two coefficient families are
// supported: constant matrices, and matrices whose entries are bounded
// smooth functions of one stationary mean-reverting factor.

namespace ergolq {

struct Dims {
    int n = 0; // state dimension
    int k = 0; // control dimension
    int d = 0; // driving Brownian components
};

// Scalar coefficient entry base + amp * tanh(rate * (y - center)).
// |value| <= |base| + |amp| for all y, so uniform boundedness holds by
// construction.
struct BoundedEntry {
    double base = 0.0;
    double amp = 0.0;
    double rate = 1.0;
    double center = 0.0;

    double value(double y) const {
        if (amp == 0.0 || rate == 0.0) return base;
        return base + amp * std::tanh(rate * (y - center));
    }
    double band_lo() const { return base - std::abs(amp); }
    double band_hi() const { return base + std::abs(amp); }
    bool is_constant() const { return amp == 0.0 || rate == 0.0; }
};

// Mean-reverting driving factor dY = kappa (level - Y) dt + sigma dW^{drive}.
// drive_index is 1-based into the Brownian components.
struct FactorDynamics {
    double kappa = 1.0;
    double level = 0.0;
    double sigma = 1.0;
    int drive_index = 1;
};

// Exact stationary law of the factor: Gaussian(level, sigma^2 / (2 kappa)).
inline std::pair<double, double> factor_stationary_law(const FactorDynamics& fd) {
    if (!(fd.kappa > 0.0)) {
        throw ParameterError("factor_stationary_law: kappa must be > 0, got " +
                             std::to_string(fd.kappa));
    }
    if (!(fd.sigma > 0.0)) {
        throw ParameterError("factor_stationary_law: sigma must be > 0, got " +
                             std::to_string(fd.sigma));
    }
    return {fd.level, fd.sigma * fd.sigma / (2.0 * fd.kappa)};
}

// Matrix of bounded entries, evaluated pointwise in the factor level.
struct EntryMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<BoundedEntry> entries; // row-major

    static EntryMatrix constant(const Eigen::MatrixXd& m) {
        EntryMatrix em;
        em.rows = static_cast<int>(m.rows());
        em.cols = static_cast<int>(m.cols());
        em.entries.resize(static_cast<std::size_t>(em.rows) * em.cols);
        for (int i = 0; i < em.rows; ++i)
            for (int j = 0; j < em.cols; ++j) em.at(i, j).base = m(i, j);
        return em;
    }
    static EntryMatrix zero(int r, int c) {
        EntryMatrix em;
        em.rows = r;
        em.cols = c;
        em.entries.resize(static_cast<std::size_t>(r) * c);
        return em;
    }

    BoundedEntry& at(int i, int j) { return entries[static_cast<std::size_t>(i) * cols + j]; }
    const BoundedEntry& at(int i, int j) const {
        return entries[static_cast<std::size_t>(i) * cols + j];
    }

    Eigen::MatrixXd eval(double y) const {
        Eigen::MatrixXd m(rows, cols);
        eval_into(y, m);
        return m;
    }
    void eval_into(double y, Eigen::MatrixXd& m) const {
        m.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = at(i, j).value(y);
    }
    bool all_constant() const {
        for (const auto& e : entries)
            if (!e.is_constant()) return false;
        return true;
    }
    bool all_zero() const {
        for (const auto& e : entries)
            if (!(e.base == 0.0 && (e.amp == 0.0 || e.rate == 0.0))) return false;
        return true;
    }
};

struct ConstantCoeffs {
    Eigen::MatrixXd A; // n x n
    Eigen::MatrixXd B; // n x k
    std::vector<Eigen::MatrixXd> C; // d of n x n
    std::vector<Eigen::MatrixXd> D; // d of n x k
    Eigen::MatrixXd S; // n x n
    Eigen::VectorXd f; // n
};

struct FactorCoeffs {
    EntryMatrix A;
    EntryMatrix B;
    std::vector<EntryMatrix> C;
    std::vector<EntryMatrix> D;
    EntryMatrix S;
    EntryMatrix f; // n x 1
    FactorDynamics factor;
};

using CoefficientModel = std::variant<ConstantCoeffs, FactorCoeffs>;

struct ProblemSpec {
    Dims dims;
    CoefficientModel model;
    double beta = 0.0; // claimed lower bound on S

    bool is_constant() const { return std::holds_alternative<ConstantCoeffs>(model); }
    const FactorDynamics* factor() const {
        if (auto* fc = std::get_if<FactorCoeffs>(&model)) return &fc->factor;
        return nullptr;
    }
};

// Concrete coefficient matrices at one factor level.
struct CoefficientSnapshot {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    std::vector<Eigen::MatrixXd> C;
    std::vector<Eigen::MatrixXd> D;
    Eigen::MatrixXd S;
    Eigen::VectorXd f;
};

// In-place variant reuses the snapshot's storage; the hot path of the
// Monte Carlo stepper calls this once per step per path.
inline void eval_coefficients_into(const CoefficientModel& model, double y,
                                   CoefficientSnapshot& snap) {
    if (const auto* cc = std::get_if<ConstantCoeffs>(&model)) {
        snap.A = cc->A;
        snap.B = cc->B;
        snap.C = cc->C;
        snap.D = cc->D;
        snap.S = cc->S;
        snap.f = cc->f;
        return;
    }
    const auto& fc = std::get<FactorCoeffs>(model);
    fc.A.eval_into(y, snap.A);
    fc.B.eval_into(y, snap.B);
    snap.C.resize(fc.C.size());
    snap.D.resize(fc.D.size());
    for (std::size_t i = 0; i < fc.C.size(); ++i) fc.C[i].eval_into(y, snap.C[i]);
    for (std::size_t i = 0; i < fc.D.size(); ++i) fc.D[i].eval_into(y, snap.D[i]);
    fc.S.eval_into(y, snap.S);
    snap.f.resize(fc.f.rows);
    for (int i = 0; i < fc.f.rows; ++i) snap.f(i) = fc.f.at(i, 0).value(y);
}

inline CoefficientSnapshot eval_coefficients(const CoefficientModel& model, double y) {
    CoefficientSnapshot snap;
    eval_coefficients_into(model, y, snap);
    return snap;
}

struct ValidationCheck {
    std::string name;
    bool pass = false;
    std::string witness;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool pass = false;
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline void check_shape(const Eigen::MatrixXd& m, int r, int c, const std::string& name) {
    if (m.rows() != r || m.cols() != c) {
        throw StructuralError("dimension mismatch: " + name + " is " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
}

inline void check_shape(const EntryMatrix& m, int r, int c, const std::string& name) {
    if (m.rows != r || m.cols != c ||
        m.entries.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {
        throw StructuralError("dimension mismatch: " + name + " is " + std::to_string(m.rows) +
                              "x" + std::to_string(m.cols) + ", expected " + std::to_string(r) +
                              "x" + std::to_string(c));
    }
}

// Shape consistency with dims; throws naming the offending matrix.
inline void check_consistency(const ProblemSpec& spec) {
    const auto& [n, k, d] = spec.dims;
    if (n < 1 || k < 1 || d < 1) {
        throw StructuralError("dims must satisfy n,k,d >= 1, got n=" + std::to_string(n) +
                              " k=" + std::to_string(k) + " d=" + std::to_string(d));
    }
    if (const auto* cc = std::get_if<ConstantCoeffs>(&spec.model)) {
        check_shape(cc->A, n, n, "A");
        check_shape(cc->B, n, k, "B");
        if (static_cast<int>(cc->C.size()) != d) throw StructuralError("C list size != d");
        if (static_cast<int>(cc->D.size()) != d) throw StructuralError("D list size != d");
        for (int i = 0; i < d; ++i) {
            check_shape(cc->C[i], n, n, "C[" + std::to_string(i + 1) + "]");
            check_shape(cc->D[i], n, k, "D[" + std::to_string(i + 1) + "]");
        }
        check_shape(cc->S, n, n, "S");
        if (cc->f.size() != n) throw StructuralError("dimension mismatch: f has size " +
                                                     std::to_string(cc->f.size()) +
                                                     ", expected " + std::to_string(n));
    } else {
        const auto& fc = std::get<FactorCoeffs>(spec.model);
        check_shape(fc.A, n, n, "A");
        check_shape(fc.B, n, k, "B");
        if (static_cast<int>(fc.C.size()) != d) throw StructuralError("C list size != d");
        if (static_cast<int>(fc.D.size()) != d) throw StructuralError("D list size != d");
        for (int i = 0; i < d; ++i) {
            check_shape(fc.C[i], n, n, "C[" + std::to_string(i + 1) + "]");
            check_shape(fc.D[i], n, k, "D[" + std::to_string(i + 1) + "]");
        }
        check_shape(fc.S, n, n, "S");
        check_shape(fc.f, n, 1, "f");
    }
}

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

} // namespace detail

// Standing-hypothesis validation: S symmetry, S >= beta I (over 64 factor
// samples spanning +-6 stationary standard deviations in the factor-driven
// case), analytic entry boundedness, parameter sanity. Shape inconsistency
// throws a StructuralError naming the offending matrix.
inline ValidationReport validate(const ProblemSpec& spec) {
    detail::check_consistency(spec);

    ValidationReport report;
    auto add = [&](std::string name, bool pass, std::string witness) {
        report.checks.push_back({std::move(name), pass, std::move(witness)});
    };
    add("dimensional_consistency", true,
        "n=" + std::to_string(spec.dims.n) + " k=" + std::to_string(spec.dims.k) +
            " d=" + std::to_string(spec.dims.d));

    add("beta_positive", spec.beta > 0.0, "beta=" + detail::fmt_g(spec.beta));

    // Factor sample points for the S checks (single dummy point when constant).
    std::vector<double> samples{0.0};
    if (const auto* fc = std::get_if<FactorCoeffs>(&spec.model)) {
        const auto& fd = fc->factor;
        const bool params_ok = fd.kappa > 0.0 && fd.sigma > 0.0 && fd.drive_index >= 1 &&
                               fd.drive_index <= spec.dims.d;
        add("factor_parameters", params_ok,
            "kappa=" + detail::fmt_g(fd.kappa) + " sigma=" + detail::fmt_g(fd.sigma) +
                " drive_index=" + std::to_string(fd.drive_index));
        if (params_ok) {
            const auto [mean, var] = factor_stationary_law(fd);
            const double sd = std::sqrt(var);
            samples.clear();
            const int m = 64;
            for (int i = 0; i < m; ++i) {
                samples.push_back(mean - 6.0 * sd + 12.0 * sd * i / (m - 1));
            }
        }
    }

    // Entry boundedness: analytic bands are finite (and, for the factor
    // family, parameters themselves finite). Constant matrices: finiteness.
    {
        bool ok = true;
        double max_half_band = 0.0;
        if (const auto* cc = std::get_if<ConstantCoeffs>(&spec.model)) {
            ok = detail::all_finite(cc->A) && detail::all_finite(cc->B) &&
                 detail::all_finite(cc->S) && cc->f.allFinite();
            for (const auto& c : cc->C) ok = ok && detail::all_finite(c);
            for (const auto& d : cc->D) ok = ok && detail::all_finite(d);
        } else {
            const auto& fc = std::get<FactorCoeffs>(spec.model);
            auto scan = [&](const EntryMatrix& em) {
                for (const auto& e : em.entries) {
                    if (!std::isfinite(e.band_lo()) || !std::isfinite(e.band_hi()) ||
                        !std::isfinite(e.rate) || !std::isfinite(e.center)) {
                        ok = false;
                    }
                    max_half_band = std::max(max_half_band, std::abs(e.amp));
                }
            };
            scan(fc.A);
            scan(fc.B);
            for (const auto& c : fc.C) scan(c);
            for (const auto& d : fc.D) scan(d);
            scan(fc.S);
            scan(fc.f);
        }
        add("entry_boundedness", ok, "max half band=" + detail::fmt_g(max_half_band));
    }

    // S symmetry at every sample.
    {
        double worst = 0.0;
        for (double y : samples) {
            const Eigen::MatrixXd s = spec.is_constant()
                                          ? std::get<ConstantCoeffs>(spec.model).S
                                          : std::get<FactorCoeffs>(spec.model).S.eval(y);
            worst = std::max(worst, asymmetry(s));
        }
        add("S_symmetric", worst <= kSymTol, "max asymmetry=" + detail::fmt_g(worst));
    }

    // S >= beta I at every sample.
    {
        double worst = std::numeric_limits<double>::infinity();
        double worst_y = samples.front();
        for (double y : samples) {
            const Eigen::MatrixXd s = spec.is_constant()
                                          ? std::get<ConstantCoeffs>(spec.model).S
                                          : std::get<FactorCoeffs>(spec.model).S.eval(y);
            const double lo = min_eigenvalue(s);
            if (lo < worst) {
                worst = lo;
                worst_y = y;
            }
        }
        const bool ok = worst >= spec.beta - 1e-12;
        std::string witness = "min eigenvalue " + detail::fmt_g(worst);
        if (!spec.is_constant()) witness += " at y=" + detail::fmt_g(worst_y);
        witness += (ok ? " >= " : " < ") + detail::fmt_g(spec.beta);
        add("S_uniformly_definite", ok, witness);
    }

    report.pass = true;
    for (const auto& c : report.checks) report.pass = report.pass && c.pass;
    return report;
}

inline void require_valid(const ProblemSpec& spec) {
    const ValidationReport report = validate(spec);
    if (!report.pass) {
        for (const auto& c : report.checks) {
            if (!c.pass) {
                throw StructuralError("invalid problem spec: " + c.name + " failed (" +
                                      c.witness + ")");
            }
        }
    }
}

// Forcing removed; used for homogeneous-loop decay tests.
inline ProblemSpec with_zero_forcing(const ProblemSpec& spec) {
    ProblemSpec out = spec;
    if (auto* cc = std::get_if<ConstantCoeffs>(&out.model)) {
        cc->f.setZero();
    } else {
        auto& fc = std::get<FactorCoeffs>(out.model);
        fc.f = EntryMatrix::zero(fc.f.rows, fc.f.cols);
    }
    return out;
}

} // namespace ergolq
