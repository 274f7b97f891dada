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

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "homlab/errors.hpp"
#include "homlab/nonlinearity.hpp"
#include "homlab/rng.hpp"
#include "homlab/spectral_field.hpp"

namespace homlab {

/// Time-change convention used throughout: everything is integrated in
/// fast time tau = (s - t) / eps^2. The characteristic equation becomes
///
///   dX/dtau = eps V(tau, X/eps),
///
/// the solution along characteristics
///
///   dU/dtau = eps^(2-alpha) f(t + eps^2 tau, X, U, field shifted by X/eps),
///
/// with alpha in {0,1} selecting the scaling regime. The field itself
/// evolves in fast time with exact OU transitions, so no 1/eps
/// stiffness ever reaches the stepper.
struct MicroConfig {
    double epsilon = 1.0;
    double dtau = 0.0;  // <= 0 requests the automatic stable step
    double t_start = 0.0;
    double T = 1.0;
    int out_stride = 16;

    /// Largest step honouring both scales: a tenth of the fastest OU
    /// relaxation time and a step of X/eps no longer than a tenth of
    /// the shortest field wavelength (X/eps moves at speed V in fast
    /// time, so the bound is eps-free).
    static double max_stable_dtau(const SpectralMeasure& m) {
        const double temporal = 0.1 / m.A_star();
        const double spatial = 0.1 * (2.0 * M_PI / m.K0()) / m.v_rms();
        return std::min(temporal, spatial);
    }

    double resolved_dtau(const SpectralMeasure& m) const {
        const double bound = max_stable_dtau(m);
        if (dtau <= 0.0) {
            return bound;
        }
        if (dtau > bound * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "MicroConfig: dtau = " << dtau
                << " exceeds the stable bound " << bound
                << " (0.1/A_star and 0.1 (2pi/K0)/v_rms)";
            throw ValidationError(msg.str());
        }
        return dtau;
    }

    void validate() const {
        if (!(epsilon > 0.0) || epsilon > 1.0) {
            throw ValidationError("MicroConfig: epsilon must be in (0,1]");
        }
        if (!(T > t_start)) {
            throw ValidationError("MicroConfig: T must exceed t_start");
        }
        if (out_stride < 1) {
            throw ValidationError("MicroConfig: out_stride must be >= 1");
        }
    }
};

struct TrajectoryRecord {
    std::vector<double> times;  // macro times, strictly increasing
    std::vector<Eigen::VectorXd> positions;
    std::vector<double> u_values;   // empty for pure characteristics
    std::vector<double> xi_values;  // empty unless a flow was tracked
    uint64_t seed_id = 0;
};

namespace detail {
struct StepPlan {
    int n_steps;
    double dtau;
    double tau_end;
};

inline StepPlan plan_steps(const SpectralMeasure& m, const MicroConfig& cfg) {
    cfg.validate();
    const double dt = cfg.resolved_dtau(m);
    const double tau_end =
        (cfg.T - cfg.t_start) / (cfg.epsilon * cfg.epsilon);
    const int n = std::max(1, static_cast<int>(std::ceil(tau_end / dt)));
    return {n, tau_end / n, tau_end};
}
}  // namespace detail

/// Integrates several characteristics through ONE shared field
/// realization (the field is the only randomness; trajectories from
/// different starts ride the same draw). Heun two-stage steps with the
/// field advanced exactly between stages.
inline std::vector<TrajectoryRecord> simulate_characteristics_shared(
    const SpectralMeasure& m, const MicroConfig& cfg,
    const std::vector<Eigen::VectorXd>& starts, Philox4x32& rng,
    uint64_t seed_id = 0) {
    const auto plan = detail::plan_steps(m, cfg);
    const double eps = cfg.epsilon;
    const size_t K = starts.size();

    FieldState state = sample_stationary(m, rng);
    std::vector<Eigen::VectorXd> X(starts);
    std::vector<TrajectoryRecord> out(K);
    for (size_t k = 0; k < K; ++k) {
        out[k].seed_id = seed_id;
        out[k].times.push_back(cfg.t_start);
        out[k].positions.push_back(X[k]);
    }

    Eigen::VectorXd slope1(m.dim()), slope2(m.dim()), xp(m.dim());
    std::vector<Eigen::VectorXd> s1(K, Eigen::VectorXd(m.dim()));
    for (int step = 0; step < plan.n_steps; ++step) {
        for (size_t k = 0; k < K; ++k) {
            evaluate_into(m, state, X[k] / eps, s1[k]);
            s1[k] *= eps;
        }
        evolve(m, state, plan.dtau, rng);
        for (size_t k = 0; k < K; ++k) {
            xp = X[k] + plan.dtau * s1[k];
            evaluate_into(m, state, xp / eps, slope2);
            X[k] += 0.5 * plan.dtau * (s1[k] + eps * slope2);
        }
        if ((step + 1) % cfg.out_stride == 0 || step + 1 == plan.n_steps) {
            const double s =
                cfg.t_start + eps * eps * plan.dtau * (step + 1);
            for (size_t k = 0; k < K; ++k) {
                out[k].times.push_back(s);
                out[k].positions.push_back(X[k]);
            }
        }
    }
    return out;
}

inline TrajectoryRecord simulate_characteristic(const SpectralMeasure& m,
                                                const MicroConfig& cfg,
                                                const Eigen::VectorXd& x0,
                                                Philox4x32& rng,
                                                uint64_t seed_id = 0) {
    auto records = simulate_characteristics_shared(m, cfg, {x0}, rng, seed_id);
    return std::move(records.front());
}

/// Coupled (X, U) integration of the solution along the characteristic,
/// starting from U(t) = u0_init. alpha_exponent selects the scaling:
/// 1 (centered reaction, CLT scaling) or 0 (averaged reaction).
inline TrajectoryRecord simulate_semilinear(
    const SpectralMeasure& m, const MicroConfig& cfg,
    const NonlinearitySpec& spec, int alpha_exponent,
    const Eigen::VectorXd& x0, double u0_init, Philox4x32& rng,
    uint64_t seed_id = 0) {
    if (alpha_exponent != 0 && alpha_exponent != 1) {
        throw ValidationError("simulate_semilinear: alpha_exponent not in {0,1}");
    }
    if (alpha_exponent == 1 && !spec.centered()) {
        throw ValidationError(
            "simulate_semilinear: the CLT scaling (alpha_exponent = 1) "
            "requires a centered reaction term");
    }
    const auto plan = detail::plan_steps(m, cfg);
    const double eps = cfg.epsilon;
    const double fac = alpha_exponent == 1 ? eps : eps * eps;

    FieldState state = sample_stationary(m, rng);
    Eigen::VectorXd X = x0;
    double U = u0_init;
    TrajectoryRecord rec;
    rec.seed_id = seed_id;
    rec.times.push_back(cfg.t_start);
    rec.positions.push_back(X);
    rec.u_values.push_back(U);

    Eigen::VectorXd s1x(m.dim()), s2x(m.dim()), xp(m.dim());
    for (int step = 0; step < plan.n_steps; ++step) {
        const double tau = plan.dtau * step;
        const double s_now = cfg.t_start + eps * eps * tau;
        const double s_next = cfg.t_start + eps * eps * (tau + plan.dtau);

        evaluate_into(m, state, X / eps, s1x);
        s1x *= eps;
        const double s1u = fac * evaluate_f(spec, s_now, X, U, m, state, X / eps);
        evolve(m, state, plan.dtau, rng);
        xp = X + plan.dtau * s1x;
        const double up = U + plan.dtau * s1u;
        evaluate_into(m, state, xp / eps, s2x);
        const double s2u =
            fac * evaluate_f(spec, s_next, xp, up, m, state, xp / eps);
        X += 0.5 * plan.dtau * (s1x + eps * s2x);
        U += 0.5 * plan.dtau * (s1u + s2u);

        if ((step + 1) % cfg.out_stride == 0 || step + 1 == plan.n_steps) {
            rec.times.push_back(s_next);
            rec.positions.push_back(X);
            rec.u_values.push_back(U);
        }
    }
    return rec;
}

/// The solution flow on a u-grid, all columns driven by the common
/// field realization and the common characteristic, plus the
/// variational flow integrated as log xi (RHS eps^(2-alpha) df/du), so
/// xi stays exactly positive.
struct FlowTable {
    std::vector<double> times;  // macro output times
    std::vector<double> u_grid;
    std::vector<std::vector<double>> values;  // values[ti][ui]
    std::vector<std::vector<double>> xi;      // xi[ti][ui]
    std::vector<Eigen::VectorXd> x_path;      // X at output times
    uint64_t seed_id = 0;

    const std::vector<double>& final_values() const { return values.back(); }
    const Eigen::VectorXd& x_final() const { return x_path.back(); }
};

namespace detail {
/// Per-stage cache: the functional values Phi_m at the current shift
/// are u-independent, so they are computed once and reused across the
/// whole u-grid.
struct StageF {
    const NonlinearitySpec* spec;
    double t;
    const Eigen::VectorXd* x;
    std::vector<double> phis;

    void load(const NonlinearitySpec& s, double t_, const Eigen::VectorXd& x_,
              const SpectralMeasure& m, const FieldState& state,
              const Eigen::VectorXd& shift) {
        spec = &s;
        t = t_;
        x = &x_;
        static thread_local Eigen::VectorXd v;
        evaluate_into(m, state, shift, v);
        phis.resize(s.terms().size());
        for (size_t i = 0; i < s.terms().size(); ++i) {
            phis[i] = s.terms()[i].phi.evaluate(m, v);
        }
    }

    double f(double u) const {
        double r = 0.0;
        for (size_t i = 0; i < spec->terms().size(); ++i) {
            r += spec->terms()[i].g.value(t, *x, u) * phis[i];
        }
        return r;
    }

    double df_du(double u) const {
        double r = 0.0;
        for (size_t i = 0; i < spec->terms().size(); ++i) {
            r += spec->terms()[i].g.du(t, *x, u) * phis[i];
        }
        return r;
    }
};

inline void check_ordered(const std::vector<double>& col, double s,
                          uint64_t seed_id, const char* where) {
    for (size_t i = 1; i < col.size(); ++i) {
        if (!(col[i] > col[i - 1])) {
            std::ostringstream msg;
            msg << where << ": flow columns crossed at macro time " << s
                << " between grid points " << i - 1 << " and " << i
                << " (values " << col[i - 1] << ", " << col[i]
                << "), seed_id = " << seed_id
                << "; reduce the step or check the regime";
            throw NumericQualityError(msg.str());
        }
    }
}
}  // namespace detail

inline FlowTable simulate_flow_map(const SpectralMeasure& m,
                                   const MicroConfig& cfg,
                                   const NonlinearitySpec& spec,
                                   const std::vector<double>& u_grid,
                                   const Eigen::VectorXd& x0,
                                   int alpha_exponent, Philox4x32& rng,
                                   uint64_t seed_id = 0) {
    if (u_grid.size() < 2) {
        throw ValidationError("simulate_flow_map: u_grid needs >= 2 points");
    }
    for (size_t i = 1; i < u_grid.size(); ++i) {
        if (!(u_grid[i] > u_grid[i - 1])) {
            throw ValidationError(
                "simulate_flow_map: u_grid must be strictly increasing");
        }
    }
    if (alpha_exponent != 0 && alpha_exponent != 1) {
        throw ValidationError("simulate_flow_map: alpha_exponent not in {0,1}");
    }
    if (alpha_exponent == 1 && !spec.centered()) {
        throw ValidationError(
            "simulate_flow_map: the CLT scaling (alpha_exponent = 1) "
            "requires a centered reaction term");
    }
    const auto plan = detail::plan_steps(m, cfg);
    const double eps = cfg.epsilon;
    const double fac = alpha_exponent == 1 ? eps : eps * eps;
    const size_t nu = u_grid.size();

    FieldState state = sample_stationary(m, rng);
    Eigen::VectorXd X = x0;
    std::vector<double> U(u_grid);
    std::vector<double> logxi(nu, 0.0);

    FlowTable table;
    table.seed_id = seed_id;
    table.u_grid = u_grid;
    table.times.push_back(cfg.t_start);
    table.values.push_back(U);
    table.xi.push_back(std::vector<double>(nu, 1.0));
    table.x_path.push_back(X);

    Eigen::VectorXd s1x(m.dim()), s2x(m.dim()), xp(m.dim());
    std::vector<double> s1u(nu), s1z(nu), up(nu);
    detail::StageF stage1, stage2;
    for (int step = 0; step < plan.n_steps; ++step) {
        const double tau = plan.dtau * step;
        const double s_now = cfg.t_start + eps * eps * tau;
        const double s_next = cfg.t_start + eps * eps * (tau + plan.dtau);

        evaluate_into(m, state, X / eps, s1x);
        s1x *= eps;
        stage1.load(spec, s_now, X, m, state, X / eps);
        for (size_t i = 0; i < nu; ++i) {
            s1u[i] = fac * stage1.f(U[i]);
            s1z[i] = fac * stage1.df_du(U[i]);
        }
        evolve(m, state, plan.dtau, rng);
        xp = X + plan.dtau * s1x;
        for (size_t i = 0; i < nu; ++i) {
            up[i] = U[i] + plan.dtau * s1u[i];
        }
        evaluate_into(m, state, xp / eps, s2x);
        stage2.load(spec, s_next, xp, m, state, xp / eps);
        for (size_t i = 0; i < nu; ++i) {
            const double s2u = fac * stage2.f(up[i]);
            const double s2z = fac * stage2.df_du(up[i]);
            U[i] += 0.5 * plan.dtau * (s1u[i] + s2u);
            logxi[i] += 0.5 * plan.dtau * (s1z[i] + s2z);
        }
        X += 0.5 * plan.dtau * (s1x + eps * s2x);

        if ((step + 1) % cfg.out_stride == 0 || step + 1 == plan.n_steps) {
            detail::check_ordered(U, s_next, seed_id, "simulate_flow_map");
            table.times.push_back(s_next);
            table.values.push_back(U);
            std::vector<double> xi_row(nu);
            for (size_t i = 0; i < nu; ++i) {
                xi_row[i] = std::exp(logxi[i]);
            }
            table.xi.push_back(std::move(xi_row));
            table.x_path.push_back(X);
        }
    }
    return table;
}

/// Inverts a monotone flow column: piecewise-linear inverse refined by
/// bisection to 1e-10. Outside the image of the grid the flow is taken
/// as the identity (the reaction has compact support in u there), so
/// the target is returned unchanged.
inline double invert_flow(const std::vector<double>& u_grid,
                          const std::vector<double>& images, double target) {
    const size_t n = u_grid.size();
    if (n != images.size() || n < 2) {
        throw ValidationError("invert_flow: mismatched or short tables");
    }
    for (size_t i = 1; i < n; ++i) {
        if (!(images[i] > images[i - 1])) {
            throw NumericQualityError("invert_flow: non-monotone flow table");
        }
    }
    if (target == images.front()) {
        return u_grid.front();
    }
    if (target == images.back()) {
        return u_grid.back();
    }
    if (target < images.front() || target > images.back()) {
        return target;
    }
    const auto it = std::upper_bound(images.begin(), images.end(), target);
    size_t hi = static_cast<size_t>(it - images.begin());
    size_t lo = hi - 1;
    double a = u_grid[lo], b = u_grid[hi];
    const double fa = images[lo], fb = images[hi];
    // Exact inverse of the piecewise-linear interpolant, then bisection
    // polish on the same interpolant.
    double u = a + (target - fa) * (b - a) / (fb - fa);
    auto pl = [&](double x) { return fa + (x - a) * (fb - fa) / (b - a); };
    double left = a, right = b;
    for (int it2 = 0; it2 < 60 && right - left > 1e-10; ++it2) {
        const double mid = 0.5 * (left + right);
        if (pl(mid) < target) {
            left = mid;
        } else {
            right = mid;
        }
    }
    const double refined = 0.5 * (left + right);
    // The closed-form root is exact; keep the bisection value only if
    // they disagree beyond its own tolerance (they never should).
    return std::abs(refined - u) > 1e-9 ? refined : u;
}

inline double invert_flow(const FlowTable& table, double target) {
    return invert_flow(table.u_grid, table.final_values(), target);
}

/// Field realization frozen on a fine fast-time grid, for
/// common-random-numbers step-refinement studies: integrating with a
/// coarser step reads the same field path at shared times, so endpoint
/// differences isolate the stepper error.
inline std::vector<FieldState> sample_field_path(const SpectralMeasure& m,
                                                 int n_steps, double dtau,
                                                 Philox4x32& rng) {
    std::vector<FieldState> path;
    path.reserve(size_t(n_steps) + 1);
    path.push_back(sample_stationary(m, rng));
    for (int i = 0; i < n_steps; ++i) {
        FieldState next = path.back();
        evolve(m, next, dtau, rng);
        path.push_back(std::move(next));
    }
    return path;
}

/// Heun characteristic driven by a precomputed field path sampled at
/// dtau_fine; the integrator step must be an integer multiple of it.
inline Eigen::VectorXd integrate_characteristic_on_field(
    const SpectralMeasure& m, const MicroConfig& cfg,
    const Eigen::VectorXd& x0, const std::vector<FieldState>& field_path,
    double dtau_fine) {
    const auto plan = detail::plan_steps(m, cfg);
    const int stride = int(std::round(plan.dtau / dtau_fine));
    if (std::abs(stride * dtau_fine - plan.dtau) > 1e-9 * plan.dtau ||
        size_t(plan.n_steps) * stride + 1 > field_path.size()) {
        throw ValidationError(
            "integrate_characteristic_on_field: field path grid does not "
            "refine the integrator step");
    }
    const double eps = cfg.epsilon;
    Eigen::VectorXd X = x0;
    Eigen::VectorXd s1(m.dim()), s2(m.dim()), xp(m.dim());
    for (int step = 0; step < plan.n_steps; ++step) {
        const FieldState& f0 = field_path[size_t(step) * stride];
        const FieldState& f1 = field_path[size_t(step + 1) * stride];
        evaluate_into(m, f0, X / eps, s1);
        xp = X + plan.dtau * eps * s1;
        evaluate_into(m, f1, xp / eps, s2);
        X += 0.5 * plan.dtau * eps * (s1 + s2);
    }
    return X;
}

/// Lagrangian observables of the unit-scale environment process: the
/// velocity seen from the particle and the reaction functionals
/// evaluated at the particle. Emitted on the grid {0, stride dtau, ...}
/// up to the horizon; the process starts stationary, so there is no
/// burn-in.
struct EnvironmentSeries {
    std::vector<double> times;
    Eigen::MatrixXd v;    // d x n_out
    Eigen::MatrixXd phi;  // M x n_out
};

inline EnvironmentSeries sample_environment(
    const SpectralMeasure& m, const std::vector<ChaosFunctional>& functionals,
    double horizon, double dtau, int out_stride, Philox4x32& rng) {
    if (!(horizon > 0.0) || !(dtau > 0.0) || out_stride < 1) {
        throw ValidationError("sample_environment: bad horizon/step");
    }
    const int n_steps =
        std::max(1, static_cast<int>(std::ceil(horizon / dtau)));
    const double dt = horizon / n_steps;
    const int n_out = n_steps / out_stride + 1;
    const int M = static_cast<int>(functionals.size());

    EnvironmentSeries series;
    series.times.reserve(n_out);
    series.v.resize(m.dim(), n_out);
    series.phi.resize(M, n_out);

    FieldState state = sample_stationary(m, rng);
    Eigen::VectorXd X = Eigen::VectorXd::Zero(m.dim());
    Eigen::VectorXd vel(m.dim()), s1(m.dim()), s2(m.dim()), xp(m.dim());

    int out_col = 0;
    auto emit = [&](double tau) {
        evaluate_into(m, state, X, vel);
        series.times.push_back(tau);
        series.v.col(out_col) = vel;
        for (int j = 0; j < M; ++j) {
            series.phi(j, out_col) = functionals[j].evaluate(m, vel);
        }
        ++out_col;
    };

    emit(0.0);
    for (int step = 0; step < n_steps; ++step) {
        evaluate_into(m, state, X, s1);
        evolve(m, state, dt, rng);
        xp = X + dt * s1;
        evaluate_into(m, state, xp, s2);
        X += 0.5 * dt * (s1 + s2);
        if ((step + 1) % out_stride == 0) {
            emit(dt * (step + 1));
        }
    }
    series.v.conservativeResize(m.dim(), out_col);
    series.phi.conservativeResize(M, out_col);
    return series;
}

}  // namespace homlab
