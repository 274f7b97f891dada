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
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "homlab/errors.hpp"
#include "homlab/green_kubo.hpp"
#include "homlab/microscale.hpp"
#include "homlab/nonlinearity.hpp"
#include "homlab/rng.hpp"

namespace homlab {

/// A sampled limit path: d+1 standard Brownian drivers on a uniform
/// grid (index 0 is the extra noise of the limit flow, 1..d generate
/// the effective Brownian motion through S), and the resulting
/// X(s) = x + S (cumulated increments). Increments are exact Gaussian
/// draws, so the path law at grid times carries no discretization
/// error.
struct LimitPath {
    std::vector<double> times;  // t .. T, n_steps + 1 points
    Eigen::MatrixXd dW;         // (d+1) x n_steps, N(0, ds) entries
    Eigen::MatrixXd X;          // d x (n_steps + 1)

    int n_steps() const { return int(dW.cols()); }
    double ds() const { return times[1] - times[0]; }
    Eigen::VectorXd x_final() const { return X.col(X.cols() - 1); }

    /// Piecewise-linear interpolation of X between grid times.
    Eigen::VectorXd x_at(double s) const {
        const double a = (s - times.front()) / ds();
        const int i = std::max(
            0, std::min(int(a), int(times.size()) - 2));
        const double w = std::max(0.0, std::min(1.0, a - i));
        return (1.0 - w) * X.col(i) + w * X.col(i + 1);
    }
};

/// Draw order per step: driver components 0..d.
inline LimitPath sample_effective_bm(const HomogenizedCoefficients& coeffs,
                                     const Eigen::VectorXd& x, double t,
                                     double T, int n_steps, Philox4x32& rng) {
    if (!(T > t) || n_steps < 1) {
        throw ValidationError("sample_effective_bm: bad time grid");
    }
    const int d = coeffs.dim;
    LimitPath path;
    path.times.resize(n_steps + 1);
    path.dW.resize(d + 1, n_steps);
    path.X.resize(d, n_steps + 1);
    const double ds = (T - t) / n_steps;
    const double root_ds = std::sqrt(ds);
    path.X.col(0) = x;
    for (int i = 0; i <= n_steps; ++i) {
        path.times[i] = t + ds * i;
    }
    for (int i = 0; i < n_steps; ++i) {
        for (int j = 0; j <= d; ++j) {
            path.dW(j, i) = root_ds * rng.normal();
        }
        path.X.col(i + 1) =
            path.X.col(i) + coeffs.S * path.dW.block(1, i, d, 1);
    }
    return path;
}

/// Halves the time resolution of a path by summing increment pairs;
/// the coarse path visits the same Brownian values at shared times, so
/// scheme errors under step halving are measured with common noise.
inline LimitPath coarsen_path(const LimitPath& fine) {
    const int n = fine.n_steps();
    if (n % 2 != 0) {
        throw ValidationError("coarsen_path: step count must be even");
    }
    LimitPath coarse;
    coarse.times.resize(size_t(n / 2) + 1);
    coarse.dW.resize(fine.dW.rows(), n / 2);
    coarse.X.resize(fine.X.rows(), n / 2 + 1);
    for (int i = 0; i <= n / 2; ++i) {
        coarse.times[size_t(i)] = fine.times[size_t(2 * i)];
        coarse.X.col(i) = fine.X.col(2 * i);
    }
    for (int i = 0; i < n / 2; ++i) {
        coarse.dW.col(i) = fine.dW.col(2 * i) + fine.dW.col(2 * i + 1);
    }
    return coarse;
}

/// The linear limit observable u0(x + beta_{T-t}).
inline double solve_linear_limit(const std::function<double(const Eigen::VectorXd&)>& u0,
                                 const LimitPath& path) {
    return u0(path.x_final());
}

/// Solves the pathwise integral equation of the averaged regime,
/// equivalent to the terminal-value ODE
///
///   dU/ds = fbar(s, X(s), U(s)),  U(T) = u0(X(T)),
///
/// integrated backward with RK4 on the path grid (X interpolated
/// linearly between grid points). Returns U at s = t.
inline double solve_integral_equation(
    const NonlinearitySpec& spec, const LimitPath& path,
    const std::function<double(const Eigen::VectorXd&)>& u0) {
    const int n = path.n_steps();
    const double h = path.ds();
    double U = u0(path.x_final());
    for (int i = n; i > 0; --i) {
        const double s1 = path.times[size_t(i)];
        const double sm = s1 - 0.5 * h;
        const double s0 = path.times[size_t(i - 1)];
        const Eigen::VectorXd x1 = path.X.col(i);
        const Eigen::VectorXd xm = path.x_at(sm);
        const Eigen::VectorXd x0 = path.X.col(i - 1);
        const double k1 = mean_f(spec, s1, x1, U);
        const double k2 = mean_f(spec, sm, xm, U - 0.5 * h * k1);
        const double k3 = mean_f(spec, sm, xm, U - 0.5 * h * k2);
        const double k4 = mean_f(spec, s0, x0, U - h * k3);
        U -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return U;
}

/// Flow table of the limit SDE system: Euler-Maruyama columns over the
/// shared d+1 drivers of `path`, with the derivative flow computed
/// through the exponent
///
///   Z' = db/du - 1/2 sum_j (dc~_j/du)^2 (ds)  +  sum_j (dc~_j/du) dW_j,
///
/// so xi = exp(Z) stays exactly positive. Strict column ordering is
/// asserted at every output time.
struct LimitFlowTable {
    std::vector<double> times;
    std::vector<double> u_grid;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> xi;

    const std::vector<double>& final_values() const { return values.back(); }
};

inline LimitFlowTable simulate_limit_flow(const LimitCoefficients& coeffs,
                                          const std::vector<double>& u_grid,
                                          const LimitPath& path,
                                          int out_stride = 16,
                                          uint64_t seed_id = 0) {
    if (u_grid.size() < 2) {
        throw ValidationError("simulate_limit_flow: u_grid needs >= 2 points");
    }
    for (size_t i = 1; i < u_grid.size(); ++i) {
        if (!(u_grid[i] > u_grid[i - 1])) {
            throw ValidationError(
                "simulate_limit_flow: u_grid must be strictly increasing");
        }
    }
    const int d = coeffs.dim();
    const int n = path.n_steps();
    const double ds = path.ds();
    const size_t nu = u_grid.size();

    std::vector<double> U(u_grid);
    std::vector<double> Z(nu, 0.0);

    LimitFlowTable table;
    table.u_grid = u_grid;
    table.times.push_back(path.times.front());
    table.values.push_back(U);
    table.xi.push_back(std::vector<double>(nu, 1.0));

    for (int i = 0; i < n; ++i) {
        const double s = path.times[size_t(i)];
        const Eigen::VectorXd x = path.X.col(i);
        for (size_t k = 0; k < nu; ++k) {
            const double u = U[k];
            const double drift = coeffs.b(s, x, u);
            const Eigen::VectorXd ct = coeffs.c_tilde(s, x, u);
            double c0, dc0;
            coeffs.c0_tilde(s, x, u, &c0, &dc0);
            const double alpha = coeffs.db_du(s, x, u);
            const Eigen::VectorXd gamma = coeffs.dc_tilde_du(s, x, u);

            double noise = c0 * path.dW(0, i);
            double znoise = dc0 * path.dW(0, i);
            for (int j = 0; j < d; ++j) {
                noise += ct[j] * path.dW(j + 1, i);
                znoise += gamma[j] * path.dW(j + 1, i);
            }
            const double gamma2 = dc0 * dc0 + gamma.squaredNorm();
            U[k] = u + drift * ds + noise;
            Z[k] += (alpha - 0.5 * gamma2) * ds + znoise;
        }
        if ((i + 1) % out_stride == 0 || i + 1 == n) {
            for (size_t k = 1; k < nu; ++k) {
                if (!(U[k] > U[k - 1])) {
                    std::ostringstream msg;
                    msg << "simulate_limit_flow: columns crossed at s = "
                        << path.times[size_t(i + 1)] << " between grid points "
                        << k - 1 << " and " << k << " (values " << U[k - 1]
                        << ", " << U[k] << "), seed_id = " << seed_id
                        << "; reduce the step";
                    throw NumericQualityError(msg.str());
                }
            }
            table.times.push_back(path.times[size_t(i + 1)]);
            table.values.push_back(U);
            std::vector<double> xi_row(nu);
            for (size_t k = 0; k < nu; ++k) {
                xi_row[k] = std::exp(Z[k]);
            }
            table.xi.push_back(std::move(xi_row));
        }
    }
    return table;
}

/// Inverse of the terminal diffeomorphism applied to the linear
/// observable: same monotone interpolation and identity tail as the
/// microscale inversion.
inline double invert_limit_flow(
    const LimitFlowTable& table,
    const std::function<double(const Eigen::VectorXd&)>& u0,
    const LimitPath& path) {
    return invert_flow(table.u_grid, table.final_values(), u0(path.x_final()));
}

}  // namespace homlab
