/*
   Copyright 2026 The homogenize-lab authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "homlab/bump.hpp"
#include "homlab/macroscale.hpp"

using namespace homlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

/// Coefficient table with a prescribed effective covariance rate and no
/// reaction constants (for limit tests that need only the X dynamics).
HomogenizedCoefficients bare_hc(const MatrixXd& A, int num_terms = 0) {
    HomogenizedCoefficients hc;
    hc.dim = int(A.rows());
    hc.num_terms = num_terms;
    hc.A = A;
    hc.se_A = MatrixXd::Zero(hc.dim, hc.dim);
    hc.lambda = MatrixXd::Zero(hc.dim, num_terms);
    hc.theta_phi = MatrixXd::Zero(num_terms, num_terms);
    hc.mu = hc.theta_phi;
    hc.kappa_v = hc.lambda;
    hc.kappa0 = hc.theta_phi;
    hc.se_lambda = hc.lambda;
    hc.se_kappa_v = hc.kappa_v;
    hc.se_kappa0 = hc.kappa0;
    rebuild_square_root(hc);
    return hc;
}

LimitPath frozen_path(const VectorXd& x, double t, double T, int n) {
    LimitPath p;
    p.times.resize(size_t(n) + 1);
    p.dW = MatrixXd::Zero(x.size() + 1, n);
    p.X = MatrixXd::Zero(x.size(), n + 1);
    for (int i = 0; i <= n; ++i) {
        p.times[size_t(i)] = t + (T - t) * i / n;
        p.X.col(i) = x;
    }
    return p;
}
}  // namespace

TEST_CASE("effective paths have the prescribed endpoint covariance") {
    const HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2));
    Philox4x32 rng(71, 0);
    const VectorXd x = vec2(0.5, -0.5);
    const int n = 10000;
    MatrixXd sum = MatrixXd::Zero(2, 2), sumsq = MatrixXd::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        const LimitPath p = sample_effective_bm(hc, x, 0.0, 2.0, 8, rng);
        const VectorXd d = p.x_final() - x;
        const MatrixXd o = d * d.transpose();
        sum += o;
        sumsq += o.cwiseProduct(o);
    }
    const MatrixXd mean = sum / n;
    const MatrixXd se =
        ((sumsq / n - mean.cwiseProduct(mean)).cwiseMax(0.0) / n).cwiseSqrt();
    const MatrixXd exact = 2.0 * MatrixXd::Identity(2, 2);
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            REQUIRE(std::abs(mean(p, q) - exact(p, q)) <=
                    4.0 * std::max(se(p, q), 1e-14));
        }
    }
}

TEST_CASE("degenerate covariance directions stay frozen") {
    MatrixXd A = MatrixXd::Zero(2, 2);
    A(1, 1) = 2.0;
    const HomogenizedCoefficients hc = bare_hc(A);
    Philox4x32 rng(72, 0);
    const LimitPath p = sample_effective_bm(hc, vec2(0.3, 0.0), 0, 1, 64, rng);
    for (int i = 0; i <= 64; ++i) {
        REQUIRE(p.X(0, i) == 0.3);
    }
}

TEST_CASE("linear limit evaluates the terminal condition at the endpoint") {
    const auto constant = [](const VectorXd&) { return 4.5; };
    const LimitPath p = frozen_path(vec2(1, 2), 0, 1, 4);
    REQUIRE(solve_linear_limit(constant, p) == 4.5);

    const BumpFunction u0(vec2(1, 2), 1.0, 1.0);
    REQUIRE(solve_linear_limit([&](const VectorXd& x) { return u0(x); }, p) ==
            Catch::Approx(1.0));
}

TEST_CASE("integral equation reduces to the linear limit without a mean") {
    const LimitPath p = frozen_path(vec2(0.2, 0.0), 0, 1, 64);
    const auto u0 = [](const VectorXd& x) { return 2.0 + x[0]; };
    REQUIRE(solve_integral_equation(NonlinearitySpec(), p, u0) ==
            Catch::Approx(2.2));
    // Centered reactions have zero mean part: identical reduction.
    REQUIRE(solve_integral_equation(demo_zero(2), p, u0) == Catch::Approx(2.2));
}

TEST_CASE("constant mean shifts the linear limit exactly") {
    NonlinearitySpec spec(
        {{SmoothCoefficient::constant(0.8), ChaosFunctional::constant()}}, 2);
    Philox4x32 rng(73, 0);
    const HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2));
    const auto u0 = [](const VectorXd& x) { return std::cos(x[0]) + x[1]; };
    for (int i = 0; i < 20; ++i) {
        const LimitPath p =
            sample_effective_bm(hc, vec2(0, 0), 0.25, 1.75, 128, rng);
        const double direct = u0(p.x_final()) - 0.8 * 1.5;
        REQUIRE(solve_integral_equation(spec, p, u0) ==
                Catch::Approx(direct).margin(1e-10));
    }
}

TEST_CASE("integral equation matches a separable closed form backward") {
    // Mean part -sin(u): backward solution satisfies
    // tan(U(s)/2) = tan(u0/2) exp(T - s), so the value grows backward
    // in time. For small u0 this is u0 exp(T - t) to leading order.
    NonlinearitySpec spec(
        {{SmoothCoefficient::wave(1.0, VectorXd(), 1.0, M_PI / 2.0),
          ChaosFunctional::constant()}},
        2);
    REQUIRE(mean_f(spec, 0, vec2(0, 0), 0.3) ==
            Catch::Approx(-std::sin(0.3)));

    const LimitPath p = frozen_path(vec2(0, 0), 0, 1, 512);
    {
        const auto u0 = [](const VectorXd&) { return 1.0; };
        const double got = solve_integral_equation(spec, p, u0);
        const double exact = 2.0 * std::atan(std::tan(0.5) * std::exp(1.0));
        REQUIRE(got == Catch::Approx(exact).margin(1e-8));
    }
    {
        const auto u0 = [](const VectorXd&) { return 0.01; };
        const double got = solve_integral_equation(spec, p, u0);
        REQUIRE(got == Catch::Approx(0.01 * std::exp(1.0)).epsilon(2e-4));
    }
}

TEST_CASE("integral equation converges under path-grid halving") {
    NonlinearitySpec spec(
        {{SmoothCoefficient::wave(0.7, VectorXd(), 1.0),
          ChaosFunctional::constant()}},
        2);
    const HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2));
    Philox4x32 rng(74, 0);
    const auto u0 = [](const VectorXd& x) { return std::sin(x[0] + x[1]); };
    const LimitPath fine = sample_effective_bm(hc, vec2(0, 0), 0, 1, 1024, rng);
    const LimitPath coarse = coarsen_path(fine);
    const double uf = solve_integral_equation(spec, fine, u0);
    const double uc = solve_integral_equation(spec, coarse, u0);
    REQUIRE(std::abs(uf - uc) < 1e-4);
}

TEST_CASE("limit flow is the identity with zero coefficients") {
    const HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2));
    const LimitCoefficients lc(NonlinearitySpec(), hc);
    Philox4x32 rng(75, 0);
    const LimitPath p = sample_effective_bm(hc, vec2(0, 0), 0, 1, 256, rng);
    const std::vector<double> grid = {-1.0, 0.0, 1.0};
    const LimitFlowTable table = simulate_limit_flow(lc, grid, p, 32);
    for (const auto& row : table.values) {
        REQUIRE(row == grid);
    }
    for (const auto& row : table.xi) {
        for (double xi : row) {
            REQUIRE(xi == 1.0);
        }
    }
    const auto u0 = [](const VectorXd& x) { return 0.5 * x[0]; };
    REQUIRE(invert_limit_flow(table, u0, p) ==
            Catch::Approx(0.5 * p.x_final()[0]).margin(1e-12));
}

TEST_CASE("u-independent loadings translate all columns together") {
    // demo_zero's g is constant, so every column receives the same
    // increments and the derivative flow stays exactly one.
    HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2), 1);
    hc.kappa_v(1, 0) = 1.0;
    hc.kappa0(0, 0) = 1.2;
    const LimitCoefficients lc(demo_zero(2), hc);
    Philox4x32 rng(76, 0);
    const LimitPath p = sample_effective_bm(hc, vec2(0, 0), 0, 1, 128, rng);
    const std::vector<double> grid = {-0.7, 0.1, 0.9};
    const LimitFlowTable table = simulate_limit_flow(lc, grid, p, 16);
    const auto& last = table.values.back();
    REQUIRE(last[1] - grid[1] == Catch::Approx(last[0] - grid[0]));
    REQUIRE(last[2] - grid[2] == Catch::Approx(last[0] - grid[0]));
    for (double xi : table.xi.back()) {
        REQUIRE(xi == Catch::Approx(1.0));
    }
}

TEST_CASE("derivative flow tracks the column slopes") {
    // u-dependent loading via demo_zero_u; fine grid, small noise.
    HomogenizedCoefficients hc = bare_hc(0.25 * MatrixXd::Identity(2, 2), 1);
    hc.kappa_v(1, 0) = 0.3;
    hc.kappa0(0, 0) = 0.4;
    const LimitCoefficients lc(demo_zero_u(2), hc);
    Philox4x32 rng(77, 0);
    const LimitPath p = sample_effective_bm(hc, vec2(0, 0), 0, 1, 2048, rng);
    std::vector<double> grid;
    for (int i = 0; i <= 60; ++i) {
        grid.push_back(-1.5 + 3.0 * i / 60.0);
    }
    const LimitFlowTable table = simulate_limit_flow(lc, grid, p, 256);
    const auto& S = table.values.back();
    const auto& xi = table.xi.back();
    double worst = 0.0;
    for (size_t i = 1; i + 1 < grid.size(); ++i) {
        REQUIRE(S[i] > S[i - 1]);
        REQUIRE(xi[i] > 0.0);
        const double fd = (S[i + 1] - S[i - 1]) / (grid[i + 1] - grid[i - 1]);
        worst = std::max(worst, std::abs(xi[i] - fd) / fd);
    }
    REQUIRE(worst < 0.05);
}

TEST_CASE("Euler columns gain accuracy under step halving") {
    HomogenizedCoefficients hc = bare_hc(0.5 * MatrixXd::Identity(2, 2), 1);
    hc.kappa_v(1, 0) = 0.5;
    hc.kappa0(0, 0) = 0.8;
    const LimitCoefficients lc(demo_zero_u(2), hc);
    const std::vector<double> grid = {-1.0, -0.5, 0.0, 0.5, 1.0};
    double err_coarse = 0.0, err_mid = 0.0;
    for (int rep = 0; rep < 24; ++rep) {
        Philox4x32 rng(78, uint64_t(rep));
        const LimitPath fine =
            sample_effective_bm(hc, vec2(0, 0), 0, 1, 1024, rng);
        const LimitPath mid = coarsen_path(fine);
        const LimitPath coarse = coarsen_path(mid);
        const auto Sf = simulate_limit_flow(lc, grid, fine, 1024).values.back();
        const auto Sm = simulate_limit_flow(lc, grid, mid, 512).values.back();
        const auto Sc = simulate_limit_flow(lc, grid, coarse, 256).values.back();
        for (size_t i = 0; i < grid.size(); ++i) {
            err_coarse += (Sc[i] - Sf[i]) * (Sc[i] - Sf[i]);
            err_mid += (Sm[i] - Sf[i]) * (Sm[i] - Sf[i]);
        }
    }
    // Strong error must drop by at least sqrt(2) per halving (order
    // 1/2); on RMS over paths and grid points.
    REQUIRE(std::sqrt(err_coarse / err_mid) >= std::sqrt(2.0) * 0.85);
}

TEST_CASE("limit flow inversion round-trips on grid images") {
    HomogenizedCoefficients hc = bare_hc(MatrixXd::Identity(2, 2), 1);
    hc.kappa_v(1, 0) = 0.4;
    hc.kappa0(0, 0) = 0.6;
    const LimitCoefficients lc(demo_zero_u(2), hc);
    Philox4x32 rng(79, 0);
    const LimitPath p = sample_effective_bm(hc, vec2(0, 0), 0, 1, 512, rng);
    const std::vector<double> grid = {-2.0, -1.0, 0.0, 1.0, 2.0};
    const LimitFlowTable table = simulate_limit_flow(lc, grid, p, 64);
    for (size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(invert_flow(table.u_grid, table.final_values(),
                            table.final_values()[i]) ==
                Catch::Approx(grid[i]).margin(1e-9));
    }
}
