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

#include <Eigen/Dense>
#include <cmath>

#include "homlab/rng.hpp"
#include "homlab/spectral_field.hpp"

using namespace homlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

/// Entrywise sample mean and standard error of matrix-valued draws.
struct MatrixAccumulator {
    MatrixXd sum, sumsq;
    long n = 0;

    explicit MatrixAccumulator(int r, int c)
        : sum(MatrixXd::Zero(r, c)), sumsq(MatrixXd::Zero(r, c)) {}

    void add(const MatrixXd& x) {
        sum += x;
        sumsq += x.cwiseProduct(x);
        ++n;
    }

    MatrixXd mean() const { return sum / double(n); }

    MatrixXd se() const {
        const MatrixXd m = mean();
        return (((sumsq / double(n)) - m.cwiseProduct(m)).cwiseMax(0.0) /
                double(n))
            .cwiseSqrt();
    }

    void require_matches(const MatrixXd& exact, double n_se) {
        const MatrixXd m = mean();
        const MatrixXd s = se();
        for (long i = 0; i < m.rows(); ++i) {
            for (long j = 0; j < m.cols(); ++j) {
                const double tol = n_se * std::max(s(i, j), 1e-14);
                INFO("entry (" << i << "," << j << "): " << m(i, j) << " vs "
                               << exact(i, j) << " tol " << tol);
                REQUIRE(std::abs(m(i, j) - exact(i, j)) <= tol);
            }
        }
    }
};

}  // namespace

TEST_CASE("projector matches the closed form on axis vectors") {
    MatrixXd G = projector(vec2(1, 0));
    REQUIRE(G(0, 0) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(G(0, 1) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(G(1, 1) == Catch::Approx(1.0).margin(1e-15));

    G = projector(vec2(0, 2));
    REQUIRE(G(0, 0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(G(1, 1) == Catch::Approx(0.0).margin(1e-15));

    Philox4x32 rng(3, 0);
    for (int i = 0; i < 50; ++i) {
        const VectorXd k = vec2(rng.normal(), rng.normal());
        if (k.norm() < 1e-3) {
            continue;
        }
        const MatrixXd P = projector(k);
        REQUIRE((P * k).norm() < 1e-12);
        REQUIRE((P * P - P).norm() < 1e-12);
        REQUIRE((P - P.transpose()).norm() < 1e-14);
    }
    REQUIRE_THROWS_AS(projector(vec2(0, 0)), ValidationError);
}

TEST_CASE("measure construction enforces invariants") {
    REQUIRE_THROWS_AS(SpectralMeasure::shear(1.0, 1.0, 1.0, 1),
                      ValidationError);
    REQUIRE_THROWS_AS(
        SpectralMeasure(2, {SpectralMode{vec2(1, 0), 0.0, 1.0}}),
        ValidationError);
    REQUIRE_THROWS_AS(
        SpectralMeasure(2, {SpectralMode{vec2(1, 0), 1.0, -1.0}}),
        ValidationError);
    // k and -k are one mode.
    REQUIRE_THROWS_AS(
        SpectralMeasure(2, {SpectralMode{vec2(1, 0), 1.0, 1.0},
                            SpectralMode{vec2(-1, 0), 1.0, 1.0}}),
        ValidationError);

    const SpectralMeasure iso = SpectralMeasure::isotropic_shell(12, 2.0, 1.5, 0.8);
    REQUIRE(iso.num_modes() == 12);
    REQUIRE(iso.alpha_star() == Catch::Approx(0.8));
    REQUIRE(iso.A_star() == Catch::Approx(0.8));
    double energy = 0.0;
    for (const auto& mode : iso.modes()) {
        REQUIRE(mode.k.norm() >= 1.0);
        REQUIRE(mode.k.norm() <= 2.0 + 1e-12);
        energy += mode.sigma;
    }
    REQUIRE(energy == Catch::Approx(1.5));
}

TEST_CASE("stationary sampling has the prescribed covariance") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 0.7, 1.3);
    Philox4x32 rng(11, 0);
    MatrixAccumulator acc(2, 2);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const FieldState s = sample_stationary(m, rng);
        REQUIRE(std::abs(s.A.col(0).dot(m.modes()[0].k)) < 1e-12);
        REQUIRE(std::abs(s.B.col(0).dot(m.modes()[0].k)) < 1e-12);
        acc.add(s.A.col(0) * s.A.col(0).transpose());
    }
    acc.require_matches(0.7 * projector(vec2(1, 0)), 4.0);
}

TEST_CASE("one-time field covariance matches the closed form") {
    const SpectralMeasure m = SpectralMeasure::isotropic_shell(6, 2.0, 1.0, 1.0);
    Philox4x32 rng(12, 0);
    const VectorXd x = vec2(0.3, -0.2);
    const VectorXd y = vec2(-0.4, 0.9);
    MatrixAccumulator acc(2, 2);
    for (int i = 0; i < 10000; ++i) {
        const FieldState s = sample_stationary(m, rng);
        acc.add(evaluate(m, s, x) * evaluate(m, s, y).transpose());
    }
    acc.require_matches(m.covariance_exact(0.0, x - y), 4.0);
}

TEST_CASE("evolve with dt = 0 keeps the state and consumes the stream") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 1.0, 1.0);
    Philox4x32 rng(13, 0);
    FieldState s = sample_stationary(m, rng);
    const FieldState before = s;
    Philox4x32 untouched = rng;
    evolve(m, s, 0.0, rng);
    REQUIRE((s.A - before.A).norm() == 0.0);
    REQUIRE((s.B - before.B).norm() == 0.0);
    REQUIRE(s.time == before.time);
    // The stream advanced by exactly the per-step budget even though
    // the mixing weight was zero.
    REQUIRE(rng.next_u32() != untouched.next_u32());
    REQUIRE_THROWS_AS(evolve(m, s, -0.1, rng), ValidationError);
}

TEST_CASE("evolve decorrelates over many relaxation times") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 1.0, 1.0);
    Philox4x32 rng(14, 0);
    const int n = 10000;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        FieldState s = sample_stationary(m, rng);
        const double before = s.A(1, 0);
        evolve(m, s, 50.0, rng);
        const double after = s.A(1, 0);
        sxy += before * after;
        sxx += before * before;
        syy += after * after;
    }
    REQUIRE(std::abs(sxy / std::sqrt(sxx * syy)) < 4.0 / std::sqrt(double(n)));
}

TEST_CASE("amplitude autocovariance follows the exact OU law") {
    const double sigma = 0.9, alpha = 1.4;
    const SpectralMeasure m = SpectralMeasure::shear(1.0, sigma, alpha);
    const MatrixXd G = projector(vec2(1, 0));
    for (const double t : {0.1, 0.5, 1.0}) {
        Philox4x32 rng(15 + int(t * 10), 0);
        MatrixAccumulator acc(2, 2);
        for (int i = 0; i < 10000; ++i) {
            FieldState s = sample_stationary(m, rng);
            const VectorXd a0 = s.A.col(0);
            evolve(m, s, t, rng);
            acc.add(a0 * s.A.col(0).transpose());
        }
        acc.require_matches(sigma * std::exp(-alpha * t) * G, 4.0);
    }
}

TEST_CASE("stationarity is preserved by long evolution") {
    const SpectralMeasure m = SpectralMeasure::isotropic_shell(4, 2.0, 1.0, 1.0);
    Philox4x32 rng(16, 0);
    const VectorXd x = vec2(0.1, 0.2);
    MatrixAccumulator acc(2, 2);
    for (int i = 0; i < 8000; ++i) {
        FieldState s = sample_stationary(m, rng);
        evolve(m, s, 3.7, rng);
        const VectorXd v = evaluate(m, s, x);
        acc.add(v * v.transpose());
    }
    acc.require_matches(m.covariance_exact(0.0, vec2(0, 0)), 4.0);
}

TEST_CASE("two-time covariance agrees for one step and composed steps") {
    // The transition is exact, so evolve(t1 + t2) and
    // evolve(t1) o evolve(t2) must both reproduce the closed-form
    // two-time covariance (distributional semigroup law).
    const double sigma = 1.0, alpha = 0.9;
    const SpectralMeasure m = SpectralMeasure::shear(1.0, sigma, alpha);
    const MatrixXd G = projector(vec2(1, 0));
    const double t1 = 0.4, t2 = 0.35;
    const MatrixXd exact = sigma * std::exp(-alpha * (t1 + t2)) * G;

    Philox4x32 rng(17, 0);
    MatrixAccumulator one(2, 2), two(2, 2);
    for (int i = 0; i < 10000; ++i) {
        FieldState s = sample_stationary(m, rng);
        const VectorXd a0 = s.A.col(0);
        evolve(m, s, t1 + t2, rng);
        one.add(a0 * s.A.col(0).transpose());
    }
    for (int i = 0; i < 10000; ++i) {
        FieldState s = sample_stationary(m, rng);
        const VectorXd a0 = s.A.col(0);
        evolve(m, s, t1, rng);
        evolve(m, s, t2, rng);
        two.add(a0 * s.A.col(0).transpose());
    }
    one.require_matches(exact, 4.0);
    two.require_matches(exact, 4.0);
}

TEST_CASE("evaluate reproduces single-mode closed forms") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 1.0, 1.0);
    Philox4x32 rng(18, 0);
    FieldState s = sample_stationary(m, rng);
    const double a = s.A(1, 0), b = s.B(1, 0);

    VectorXd v = evaluate(m, s, vec2(0.0, 3.3));
    REQUIRE(v[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(v[1] == Catch::Approx(a));

    v = evaluate(m, s, vec2(M_PI / 2.0, -1.0));
    REQUIRE(v[1] == Catch::Approx(b).margin(1e-12));

    // Periodicity with period 2 pi k / |k|^2.
    const VectorXd x = vec2(0.77, -0.3);
    const VectorXd shifted = x + 2.0 * M_PI * vec2(1, 0);
    REQUIRE((evaluate(m, s, x) - evaluate(m, s, shifted)).norm() < 1e-12);
}

TEST_CASE("gradient is divergence-free and matches finite differences") {
    const SpectralMeasure m = SpectralMeasure::isotropic_shell(8, 2.0, 1.0, 1.0);
    Philox4x32 rng(19, 0);
    double max_div = 0.0;
    double max_rel = 0.0;
    const double h = 1e-4;
    for (int i = 0; i < 1000; ++i) {
        FieldState s = sample_stationary(m, rng);
        const VectorXd x = vec2(4.0 * (rng.uniform() - 0.5),
                                4.0 * (rng.uniform() - 0.5));
        const MatrixXd grad = evaluate_gradient(m, s, x);
        max_div = std::max(max_div, std::abs(grad.trace()));
        if (i < 50) {
            for (int l = 0; l < 2; ++l) {
                VectorXd xp = x, xm = x;
                xp[l] += h;
                xm[l] -= h;
                const VectorXd fd =
                    (evaluate(m, s, xp) - evaluate(m, s, xm)) / (2.0 * h);
                const double rel =
                    (grad.col(l) - fd).norm() / std::max(1e-12, fd.norm());
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    REQUIRE(max_div < 1e-10);
    REQUIRE(max_rel < 1e-6);

    // Spot value at the origin of a single mode: columns B_j k_j^T.
    const SpectralMeasure shear = SpectralMeasure::shear(2.0, 1.0, 1.0);
    Philox4x32 rng2(20, 0);
    FieldState s = sample_stationary(shear, rng2);
    const MatrixXd grad0 = evaluate_gradient(shear, s, vec2(0, 0));
    const MatrixXd expect = s.B.col(0) * shear.modes()[0].k.transpose();
    REQUIRE((grad0 - expect).norm() < 1e-12);
}

TEST_CASE("exact covariance closed forms and symmetries") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 1.0, 1.0);
    MatrixXd R = m.covariance_exact(0.0, vec2(0, 0));
    REQUIRE((R - m.one_point_covariance()).norm() < 1e-14);
    R = m.covariance_exact(1.0, vec2(0, 0));
    REQUIRE(R(1, 1) == Catch::Approx(std::exp(-1.0)));
    REQUIRE(R(0, 0) == Catch::Approx(0.0).margin(1e-15));

    const SpectralMeasure iso = SpectralMeasure::isotropic_shell(6, 2.0, 1.0, 1.0);
    const VectorXd x = vec2(0.3, 0.8);
    REQUIRE((iso.covariance_exact(0.4, x) -
             iso.covariance_exact(0.4, -x).transpose())
                .norm() < 1e-13);
    REQUIRE((iso.covariance_exact(-0.4, x) - iso.covariance_exact(0.4, x))
                .norm() < 1e-13);
}

TEST_CASE("projection closure survives long evolution") {
    const SpectralMeasure m = SpectralMeasure::isotropic_shell(6, 2.0, 1.0, 1.0);
    Philox4x32 rng(21, 0);
    FieldState s = sample_stationary(m, rng);
    for (int step = 0; step < 1000; ++step) {
        evolve(m, s, 0.05, rng);
    }
    for (int j = 0; j < m.num_modes(); ++j) {
        REQUIRE(std::abs(s.A.col(j).dot(m.modes()[size_t(j)].k)) < 1e-10);
        REQUIRE(std::abs(s.B.col(j).dot(m.modes()[size_t(j)].k)) < 1e-10);
    }
}
