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

#include "homlab/green_kubo.hpp"
#include "homlab/nonlinearity.hpp"

using namespace homlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

CorrelatorTable shear_table(double sigma, double alpha, long n_paths,
                            double T_GK, uint64_t seed) {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, sigma, alpha);
    return estimate_correlators(m, {ChaosFunctional::component(1)}, n_paths,
                                T_GK, 0.0, seed, 4, 2);
}
}  // namespace

TEST_CASE("correlator horizon must dominate the mixing time") {
    const SpectralMeasure m = SpectralMeasure::shear(1.0, 1.0, 1.0);
    REQUIRE_THROWS_AS(
        estimate_correlators(m, {}, 100, 2.0, 0.0, 1, 4, 1),
        ValidationError);
}

TEST_CASE("shear correlators match the closed-form autocorrelation") {
    const double sigma = 1.0, alpha = 1.0;
    const CorrelatorTable table = shear_table(sigma, alpha, 800, 8.0, 61);

    for (size_t l = 0; l < table.time_grid.size(); l += 8) {
        const double exact = sigma * std::exp(-alpha * table.time_grid[l]);
        const double got = table.C_vv[l](1, 1);
        const double se = table.se_vv[l](1, 1);
        INFO("lag " << table.time_grid[l]);
        REQUIRE(std::abs(got - exact) <= 4.0 * std::max(se, 1e-14));
        // The frozen direction carries no signal at all.
        REQUIRE(table.C_vv[l](0, 0) == 0.0);
        REQUIRE(table.C_vv[l](0, 1) == 0.0);
        // The functional channel is the same observable as v_2.
        REQUIRE(table.C_vPhi[l](1, 0) == table.C_vv[l](1, 1));
        REQUIRE(table.C_Phiv[l](0, 1) == table.C_vv[l](1, 1));
        REQUIRE(table.C_PhiPhi[l](0, 0) == table.C_vv[l](1, 1));
    }
    // Lag zero is an exact Gram matrix: symmetric PSD.
    REQUIRE(table.C_vv[0](0, 1) == table.C_vv[0](1, 0));
    REQUIRE(table.C_vv[0](1, 1) >= 0.0);
}

TEST_CASE("effective diffusivity hits the shear closed form") {
    // A_22 = 2 integral of sigma e^{-alpha t} = 2 sigma / alpha.
    const CorrelatorTable table = shear_table(1.0, 1.0, 2000, 10.0, 62);
    const EffectiveDiffusivity ed = effective_diffusivity(table);
    REQUIRE(ed.A(1, 1) == Catch::Approx(2.0).epsilon(0.10));
    REQUIRE(ed.A(0, 0) == 0.0);
    REQUIRE(std::abs(ed.A(0, 1)) <= 4.0 * std::max(ed.se(0, 1), 1e-14));
    REQUIRE((ed.A - ed.A.transpose()).norm() == 0.0);
}

TEST_CASE("diffusivity is linear in the spectral weight") {
    // Common random numbers: the same seed scales the field by
    // sqrt(sigma), so the estimated A scales exactly linearly.
    const CorrelatorTable t1 = shear_table(1.0, 1.0, 300, 8.0, 63);
    const CorrelatorTable t2 = shear_table(2.0, 1.0, 300, 8.0, 63);
    const EffectiveDiffusivity e1 = effective_diffusivity(t1);
    const EffectiveDiffusivity e2 = effective_diffusivity(t2);
    REQUIRE(e2.A(1, 1) == Catch::Approx(2.0 * e1.A(1, 1)).epsilon(1e-12));
}

TEST_CASE("isotropic diffusivity is isotropic within error") {
    const SpectralMeasure m = SpectralMeasure::isotropic_shell(8, 2.0, 1.0, 1.0);
    const CorrelatorTable table =
        estimate_correlators(m, {}, 1200, 8.0, 0.0, 64, 4, 2);
    const EffectiveDiffusivity ed = effective_diffusivity(table);
    const double se_diag = std::hypot(ed.se(0, 0), ed.se(1, 1));
    REQUIRE(std::abs(ed.A(0, 0) - ed.A(1, 1)) <= 3.0 * se_diag);
    REQUIRE(std::abs(ed.A(0, 1)) <= 3.0 * std::max(ed.se(0, 1), 1e-14));
    REQUIRE(ed.A(0, 0) > 0.0);
}

TEST_CASE("doubling the truncation horizon moves A within the tail bound") {
    const CorrelatorTable t1 = shear_table(1.0, 1.0, 600, 6.0, 65);
    const CorrelatorTable t2 = shear_table(1.0, 1.0, 600, 12.0, 65);
    const EffectiveDiffusivity e1 = effective_diffusivity(t1);
    const EffectiveDiffusivity e2 = effective_diffusivity(t2);
    // The analytic tail closure bounds the truncation effect; allow 3
    // combined standard errors of slack on top.
    const double tail =
        2.0 * std::abs(t1.C_vv.back()(1, 1)) / t1.alpha_star;
    const double slack = 3.0 * std::hypot(e1.se(1, 1), e2.se(1, 1));
    REQUIRE(std::abs(e1.A(1, 1) - e2.A(1, 1)) <= tail + slack);
}

TEST_CASE("assembled constants reproduce the scalar cell closed forms") {
    // Shear flow with Phi = v_2: theta = Phi / alpha, so
    // <theta Phi> = sigma / alpha, kappa0 = 2 sigma / alpha, and
    // kappa_v2 = 2 E(theta, chi_2) = A_22.
    const double sigma = 1.0, alpha = 1.0;
    const CorrelatorTable table = shear_table(sigma, alpha, 2000, 10.0, 66);
    const HomogenizedCoefficients hc = assemble_coefficients(table);

    REQUIRE(hc.num_terms == 1);
    REQUIRE(hc.theta_phi(0, 0) == Catch::Approx(sigma / alpha).epsilon(0.10));
    REQUIRE(hc.kappa0(0, 0) ==
            Catch::Approx(2.0 * sigma / alpha).epsilon(0.10));
    REQUIRE(hc.lambda(1, 0) == Catch::Approx(sigma / alpha).epsilon(0.10));
    REQUIRE(hc.kappa_v(1, 0) == Catch::Approx(hc.A(1, 1)).epsilon(1e-12));
    // Everything touching the frozen direction vanishes.
    REQUIRE(hc.lambda(0, 0) == 0.0);
    REQUIRE(hc.kappa_v(0, 0) == 0.0);
    REQUIRE(hc.degenerate.size() == 1);
    // S S = A on the active subspace.
    REQUIRE((hc.S * hc.S - hc.A).norm() < 1e-10);
    REQUIRE(hc.kappa0(0, 0) == hc.kappa0(0, 0));  // finite
}

TEST_CASE("limit coefficients expose the demo-zero noise structure") {
    const double sigma = 1.0, alpha = 1.0, g = 0.4;
    const CorrelatorTable table = shear_table(sigma, alpha, 2000, 10.0, 67);
    const HomogenizedCoefficients hc = assemble_coefficients(table);
    const LimitCoefficients lc(demo_zero(2), hc);

    const VectorXd y = vec2(0.3, -0.2);
    // Constant g: no drift, u-independent loadings.
    REQUIRE(lc.b(0.5, y, 0.7) == 0.0);
    REQUIRE(lc.db_du(0.5, y, 0.7) == 0.0);
    const VectorXd ct = lc.c_tilde(0.5, y, 0.7);
    REQUIRE(ct[0] == 0.0);  // frozen direction
    REQUIRE(ct[1] == Catch::Approx(g * std::sqrt(2.0 * sigma / alpha))
                         .epsilon(0.10));
    // The reaction noise is carried entirely by the X driver here, so
    // the extra loading collapses (within statistical error).
    double c0, dc0;
    lc.c0_tilde(0.5, y, 0.7, &c0, &dc0);
    const double C0 = g * g * hc.kappa0(0, 0);
    REQUIRE(c0 * c0 <= 0.25 * C0);
    REQUIRE((lc.dc_tilde_du(0.5, y, 0.7)).norm() == 0.0);
}

TEST_CASE("limit drift follows the analytic derivative pairing") {
    // g(u) = 0.3 + 0.2 sin u: b = g'(u) g(u) <theta Phi>.
    const double sigma = 1.0, alpha = 1.0;
    const CorrelatorTable table = shear_table(sigma, alpha, 2000, 10.0, 68);
    const HomogenizedCoefficients hc = assemble_coefficients(table);
    const LimitCoefficients lc(demo_zero_u(2), hc);
    const VectorXd y = vec2(0, 0);
    const double tp = hc.theta_phi(0, 0);
    for (const double u : {-0.8, 0.0, 0.6}) {
        const double g = 0.3 + 0.2 * std::sin(u);
        const double dg = 0.2 * std::cos(u);
        REQUIRE(lc.b(0.0, y, u) == Catch::Approx(dg * g * tp).margin(1e-12));
        const double h = 1e-6;
        const double fd = (lc.b(0.0, y, u + h) - lc.b(0.0, y, u - h)) /
                          (2.0 * h);
        REQUIRE(lc.db_du(0.0, y, u) == Catch::Approx(fd).margin(1e-7));
    }
    // Cauchy-Schwarz of the energy form: |c~|^2 <= C_0 (the clamp
    // pathway throws beyond statistical tolerance; these calls must
    // succeed for every u probed).
    for (double u = -2.0; u <= 2.0; u += 0.25) {
        double c0, dc0;
        REQUIRE_NOTHROW(lc.c0_tilde(0.0, y, u, &c0, &dc0));
        REQUIRE(c0 >= 0.0);
    }
}

TEST_CASE("coefficient tables must match the reaction's term count") {
    const CorrelatorTable table = shear_table(1.0, 1.0, 200, 6.0, 69);
    const HomogenizedCoefficients hc = assemble_coefficients(table);
    // A reaction with no centered term cannot use a one-term table.
    REQUIRE_THROWS_AS(LimitCoefficients(NonlinearitySpec(), hc),
                      ValidationError);
    // demo_mean has exactly one centered term, so a 1-term table works
    // (its constant term never enters the correlation machinery).
    REQUIRE_NOTHROW(LimitCoefficients(demo_mean(2), hc));
}
