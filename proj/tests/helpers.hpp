#pragma once

#include <cmath>
#include <random>

#include "ergolq/ergolq.hpp"

// Shared fixtures: the scalar benchmarks used throughout the suites and a
// seeded generator of stabilizable constant specs.
//
//   SB1: A=-1, B=1, C=0, D=0, S=1, f=1. Closed forms from P^2 + 2P - 1 = 0:
//        P = sqrt(2)-1, Lambda = -P, H = -sqrt(2), r = (2-sqrt(2))/2,
//        optimal cost 1/2.
//   SB2: SB1 with D=1. From 3P^2 + P - 1 = 0: P = (sqrt(13)-1)/6,
//        N = 1+P, Lambda = -P/(1+P), r = 1/3.

namespace testing {

using namespace ergolq;

inline ProblemSpec scalar_const(double a, double b, double c, double d, double s, double f,
                                double beta) {
    ProblemSpec spec;
    spec.dims = {1, 1, 1};
    spec.beta = beta;
    ConstantCoeffs cc;
    cc.A = Eigen::MatrixXd::Constant(1, 1, a);
    cc.B = Eigen::MatrixXd::Constant(1, 1, b);
    cc.C = {Eigen::MatrixXd::Constant(1, 1, c)};
    cc.D = {Eigen::MatrixXd::Constant(1, 1, d)};
    cc.S = Eigen::MatrixXd::Constant(1, 1, s);
    cc.f = Eigen::VectorXd::Constant(1, f);
    spec.model = std::move(cc);
    return spec;
}

inline ProblemSpec sb1() { return scalar_const(-1, 1, 0, 0, 1, 1, 1); }
inline ProblemSpec sb2() { return scalar_const(-1, 1, 0, 1, 1, 1, 1); }

struct Sb1Oracle {
    double p = std::sqrt(2.0) - 1.0;
    double lambda = -(std::sqrt(2.0) - 1.0);
    double h = -std::sqrt(2.0);
    double r = (2.0 - std::sqrt(2.0)) / 2.0;
    double u_aff = -(2.0 - std::sqrt(2.0)) / 2.0;
    double cost = 0.5;
    double m = 0.5;
    double m2 = 0.25;
};

struct Sb2Oracle {
    double p, n, lambda, h, k, r, u_aff, cost, ms_rate;
    Sb2Oracle() {
        p = (std::sqrt(13.0) - 1.0) / 6.0;
        n = 1.0 + p;
        lambda = -p / n;
        h = -1.0 + lambda;
        k = lambda;
        r = -p / h; // solves H r = -P f with f = 1
        u_aff = -r / n;
        cost = 2.0 * r - r * r / n;
        ms_rate = 2.0 * h + k * k;
    }
};

// Factor-driven scalar family: A entry base -1 with the given tanh
// amplitude, everything else as SB1, factor kappa=1, sigma=0.5.
inline ProblemSpec factor_scalar(double amp, double kappa = 1.0, double sigma = 0.5) {
    ProblemSpec spec;
    spec.dims = {1, 1, 1};
    spec.beta = 1.0;
    FactorCoeffs fc;
    fc.A = EntryMatrix::zero(1, 1);
    fc.A.at(0, 0) = {-1.0, amp, 1.0, 0.0};
    fc.B = EntryMatrix::constant(Eigen::MatrixXd::Constant(1, 1, 1.0));
    fc.C = {EntryMatrix::zero(1, 1)};
    fc.D = {EntryMatrix::zero(1, 1)};
    fc.S = EntryMatrix::constant(Eigen::MatrixXd::Constant(1, 1, 1.0));
    fc.f = EntryMatrix::constant(Eigen::MatrixXd::Constant(1, 1, 1.0));
    fc.factor = {kappa, 0.0, sigma, 1};
    spec.model = std::move(fc);
    return spec;
}

// Random stabilizable constant spec: strongly stable A plus small noise
// loadings, so the zero control already has finite cost.
inline ProblemSpec random_stable_spec(std::mt19937_64& rng, int max_n = 4, int max_k = 2,
                                      int max_d = 2) {
    std::uniform_int_distribution<int> nd(1, max_n), kd(1, max_k), dd(1, max_d);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    const int n = nd(rng), k = kd(rng), d = dd(rng);
    auto rand_mat = [&](int r, int c, double scale) {
        Eigen::MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = scale * ud(rng);
        return m;
    };
    ProblemSpec spec;
    spec.dims = {n, k, d};
    ConstantCoeffs cc;
    Eigen::MatrixXd a = rand_mat(n, n, 1.0);
    cc.A = a - (a.cwiseAbs().rowwise().sum().maxCoeff() + 0.5) *
                   Eigen::MatrixXd::Identity(n, n);
    cc.B = rand_mat(n, k, 1.0);
    for (int i = 0; i < d; ++i) {
        cc.C.push_back(rand_mat(n, n, 0.2));
        cc.D.push_back(rand_mat(n, k, 0.2));
    }
    Eigen::MatrixXd s = rand_mat(n, n, 1.0);
    spec.beta = 0.3;
    cc.S = 0.5 * (s * s.transpose()) + spec.beta * Eigen::MatrixXd::Identity(n, n);
    cc.f = rand_mat(n, 1, 1.0).col(0);
    spec.model = std::move(cc);
    return spec;
}

} // namespace testing
