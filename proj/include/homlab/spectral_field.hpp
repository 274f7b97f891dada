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
#include <string>
#include <utility>
#include <vector>

#include "homlab/errors.hpp"
#include "homlab/rng.hpp"

namespace homlab {

/// Incompressible projector G(k) = I - k k^T / |k|^2. Symmetric,
/// idempotent, annihilates k.
inline Eigen::MatrixXd projector(const Eigen::VectorXd& k) {
    const double k2 = k.squaredNorm();
    if (!(k2 > 0.0)) {
        throw ValidationError("projector: zero wavevector");
    }
    const auto d = k.size();
    return Eigen::MatrixXd::Identity(d, d) - (k * k.transpose()) / k2;
}

/// One Fourier mode of the velocity field: wavevector, spectral weight
/// (stationary energy of its amplitude pair) and temporal relaxation
/// rate of the Ornstein-Uhlenbeck amplitude dynamics.
struct SpectralMode {
    Eigen::VectorXd k;
    double sigma = 0.0;
    double alpha = 0.0;
};

/// Discrete spectral measure of the stationary incompressible Gaussian
/// field
///
///   V(t,x) = sum_j [ A_j(t) cos(k_j . x) + B_j(t) sin(k_j . x) ],
///
/// with A_j, B_j independent stationary OU processes in R^d of
/// covariance sigma_j G(k_j) and relaxation rate alpha_j. The induced
/// space-time covariance is
///
///   R_il(t,x) = sum_j sigma_j G_il(k_j) exp(-alpha_j |t|) cos(k_j . x).
///
/// k and -k are identified: a single mode's cos/sin amplitude pair
/// carries both.
class SpectralMeasure {
public:
    SpectralMeasure(int dim, std::vector<SpectralMode> modes)
        : dim_(dim), modes_(std::move(modes)) {
        if (dim_ < 2) {
            throw ValidationError("SpectralMeasure: dim must be >= 2");
        }
        if (modes_.empty()) {
            throw ValidationError("SpectralMeasure: needs at least one mode");
        }
        K0_ = 0.0;
        alpha_star_ = modes_.front().alpha;
        A_star_ = modes_.front().alpha;
        for (size_t j = 0; j < modes_.size(); ++j) {
            const SpectralMode& m = modes_[j];
            if (m.k.size() != dim_) {
                throw ValidationError("SpectralMeasure: mode " +
                                      std::to_string(j) +
                                      " has wrong wavevector dimension");
            }
            if (!(m.k.norm() > 0.0)) {
                throw ValidationError("SpectralMeasure: mode " +
                                      std::to_string(j) +
                                      " has zero wavevector");
            }
            if (!(m.sigma > 0.0)) {
                throw ValidationError("SpectralMeasure: mode " +
                                      std::to_string(j) +
                                      " has non-positive weight");
            }
            if (!(m.alpha > 0.0)) {
                throw ValidationError("SpectralMeasure: mode " +
                                      std::to_string(j) +
                                      " has non-positive decay rate");
            }
            for (size_t i = 0; i < j; ++i) {
                if ((modes_[i].k - m.k).norm() < 1e-12 ||
                    (modes_[i].k + m.k).norm() < 1e-12) {
                    throw ValidationError(
                        "SpectralMeasure: duplicate wavevector at modes " +
                        std::to_string(i) + " and " + std::to_string(j) +
                        " (k and -k are one mode)");
                }
            }
            K0_ = std::max(K0_, m.k.norm());
            alpha_star_ = std::min(alpha_star_, m.alpha);
            A_star_ = std::max(A_star_, m.alpha);
        }
        cache_arrays();
    }

    int dim() const { return dim_; }
    int num_modes() const { return static_cast<int>(modes_.size()); }
    const std::vector<SpectralMode>& modes() const { return modes_; }
    double K0() const { return K0_; }
    double alpha_star() const { return alpha_star_; }
    double A_star() const { return A_star_; }

    /// All wavevectors as columns of a d x n matrix.
    const Eigen::MatrixXd& wavevectors() const { return K_; }
    const Eigen::ArrayXd& sigmas() const { return sigma_; }
    const Eigen::ArrayXd& alphas() const { return alpha_; }

    /// One-point covariance R(0,0) = sum_j sigma_j G(k_j).
    const Eigen::MatrixXd& one_point_covariance() const { return R0_; }

    /// RMS speed per component, sqrt(trace R(0,0) / d).
    double v_rms() const { return v_rms_; }

    /// Exact covariance R(t,x) = E[V(s+t, y+x) V(s, y)^T].
    Eigen::MatrixXd covariance_exact(double t, const Eigen::VectorXd& x) const {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(dim_, dim_);
        for (int j = 0; j < num_modes(); ++j) {
            const double w = sigma_[j] * std::exp(-alpha_[j] * std::abs(t)) *
                             std::cos(K_.col(j).dot(x));
            R.noalias() += w * Gamma_[j];
        }
        return R;
    }

    /// "shear": single mode k = (kappa, 0, ..., 0). The field then has
    /// only components orthogonal to axis 1 and depends on x_1 alone,
    /// so axis-1 transport is frozen.
    static SpectralMeasure shear(double kappa, double sigma, double alpha,
                                 int dim = 2) {
        Eigen::VectorXd k = Eigen::VectorXd::Zero(dim);
        k[0] = kappa;
        return SpectralMeasure(dim, {SpectralMode{k, sigma, alpha}});
    }

    enum class AlphaProfile { Constant, Linear };

    /// "isotropic-shell" (d = 2): num_modes directions equally spaced
    /// over the half circle (k and -k are one mode, so the half circle
    /// covers all of them), |k| uniform on [K0/2, K0], equal weights
    /// summing to `energy`. The radius pattern repeats with a
    /// quarter-turn period, which makes the measure exactly invariant
    /// under 90-degree rotation and hence the effective diffusivity
    /// exactly isotropic; fully independent radii would leave a small
    /// realization-dependent anisotropy. The linear profile
    /// interpolates the decay rate between alpha and A_star with
    /// |k|/K0.
    static SpectralMeasure isotropic_shell(
        int num_modes, double K0, double energy, double alpha,
        AlphaProfile profile = AlphaProfile::Constant, double A_star = 0.0,
        uint64_t mode_seed = 9001) {
        if (num_modes < 2 || num_modes % 2 != 0) {
            throw ValidationError(
                "isotropic_shell: num_modes must be even and >= 2");
        }
        if (!(K0 > 0.0) || !(energy > 0.0) || !(alpha > 0.0)) {
            throw ValidationError(
                "isotropic_shell: K0, energy, alpha must be positive");
        }
        if (profile == AlphaProfile::Linear && !(A_star >= alpha)) {
            throw ValidationError("isotropic_shell: A_star must be >= alpha");
        }
        Philox4x32 rng(mode_seed, 0);
        std::vector<double> radii(static_cast<size_t>(num_modes));
        for (int j = 0; j < num_modes / 2; ++j) {
            radii[size_t(j)] = K0 * (0.5 + 0.5 * rng.uniform());
            radii[size_t(j + num_modes / 2)] = radii[size_t(j)];
        }
        std::vector<SpectralMode> modes;
        modes.reserve(size_t(num_modes));
        const double sigma = energy / num_modes;
        for (int j = 0; j < num_modes; ++j) {
            const double theta = M_PI * (j + 0.5) / num_modes;
            const double mag = radii[size_t(j)];
            Eigen::VectorXd k(2);
            k << mag * std::cos(theta), mag * std::sin(theta);
            double a = alpha;
            if (profile == AlphaProfile::Linear) {
                a = alpha + (A_star - alpha) * mag / K0;
            }
            modes.push_back(SpectralMode{k, sigma, a});
        }
        return SpectralMeasure(2, std::move(modes));
    }

private:
    void cache_arrays() {
        const int n = num_modes();
        K_.resize(dim_, n);
        sigma_.resize(n);
        alpha_.resize(n);
        sqrt_sigma_.resize(n);
        inv_k2_.resize(n);
        Gamma_.clear();
        Gamma_.reserve(n);
        R0_ = Eigen::MatrixXd::Zero(dim_, dim_);
        for (int j = 0; j < n; ++j) {
            K_.col(j) = modes_[j].k;
            sigma_[j] = modes_[j].sigma;
            alpha_[j] = modes_[j].alpha;
            sqrt_sigma_[j] = std::sqrt(modes_[j].sigma);
            inv_k2_[j] = 1.0 / modes_[j].k.squaredNorm();
            Gamma_.push_back(projector(modes_[j].k));
            R0_.noalias() += sigma_[j] * Gamma_.back();
        }
        v_rms_ = std::sqrt(R0_.trace() / dim_);
    }

    int dim_;
    std::vector<SpectralMode> modes_;
    double K0_ = 0.0;
    double alpha_star_ = 0.0;
    double A_star_ = 0.0;

    Eigen::MatrixXd K_;
    Eigen::ArrayXd sigma_, alpha_, sqrt_sigma_, inv_k2_;
    std::vector<Eigen::MatrixXd> Gamma_;
    Eigen::MatrixXd R0_;
    double v_rms_ = 0.0;

    friend struct FieldState;
};

/// The whole random environment at one instant: per-mode cos/sin
/// amplitude pairs, columns of d x n matrices. A value type: copy it,
/// ship it to a worker, evolve your own copy.
struct FieldState {
    double time = 0.0;
    Eigen::MatrixXd A;  // cos amplitudes, column j = A_j
    Eigen::MatrixXd B;  // sin amplitudes, column j = B_j
};

namespace detail {
/// Fills G's columns with projections G(k_j) (sqrt(sigma_j) g_j),
/// g ~ N(0, I). Consumption order: column by column, component by
/// component. Projection of an isotropic Gaussian through G(k) has
/// covariance exactly sigma G(k) since the projector is idempotent.
inline void fill_projected_gaussians(const SpectralMeasure& m,
                                     Philox4x32& rng, Eigen::MatrixXd& G) {
    const int d = m.dim();
    const int n = m.num_modes();
    const Eigen::MatrixXd& K = m.wavevectors();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < d; ++i) {
            G(i, j) = rng.normal();
        }
        const double proj = K.col(j).dot(G.col(j)) / K.col(j).squaredNorm();
        G.col(j).noalias() -= proj * K.col(j);
        G.col(j) *= std::sqrt(m.sigmas()[j]);
    }
}
}  // namespace detail

/// Draws a field state from the stationary law: A_j, B_j i.i.d.
/// N(0, sigma_j G(k_j)). Consumption: all A columns, then all B columns.
inline FieldState sample_stationary(const SpectralMeasure& m,
                                    Philox4x32& rng) {
    FieldState s;
    s.time = 0.0;
    s.A.resize(m.dim(), m.num_modes());
    s.B.resize(m.dim(), m.num_modes());
    detail::fill_projected_gaussians(m, rng, s.A);
    detail::fill_projected_gaussians(m, rng, s.B);
    return s;
}

/// Exact OU transition over dt for every amplitude:
///   A_j <- exp(-alpha_j dt) A_j + sqrt(1 - exp(-2 alpha_j dt)) zeta_j,
/// zeta_j ~ N(0, sigma_j G(k_j)). Exact in law for any dt, so the field
/// is never interpolated in time. RNG consumption is one d-vector per
/// amplitude per mode regardless of dt (dt = 0 still draws, keeping
/// parallel stream alignment independent of the step plan).
inline void evolve(const SpectralMeasure& m, FieldState& s, double dt,
                   Philox4x32& rng) {
    if (dt < 0.0) {
        throw ValidationError("evolve: dt must be >= 0");
    }
    const int n = m.num_modes();
    static thread_local Eigen::MatrixXd GA, GB;
    GA.resize(m.dim(), n);
    GB.resize(m.dim(), n);
    detail::fill_projected_gaussians(m, rng, GA);
    detail::fill_projected_gaussians(m, rng, GB);
    for (int j = 0; j < n; ++j) {
        const double decay = std::exp(-m.alphas()[j] * dt);
        const double mix = std::sqrt(std::max(0.0, 1.0 - decay * decay));
        s.A.col(j) = decay * s.A.col(j) + mix * GA.col(j);
        s.B.col(j) = decay * s.B.col(j) + mix * GB.col(j);
    }
    s.time += dt;
}

/// V(state, x) = sum_j [A_j cos(k_j . x) + B_j sin(k_j . x)].
inline void evaluate_into(const SpectralMeasure& m, const FieldState& s,
                          const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    const int n = m.num_modes();
    out.setZero(m.dim());
    const Eigen::MatrixXd& K = m.wavevectors();
    for (int j = 0; j < n; ++j) {
        const double phase = K.col(j).dot(x);
        out.noalias() += std::cos(phase) * s.A.col(j);
        out.noalias() += std::sin(phase) * s.B.col(j);
    }
}

inline Eigen::VectorXd evaluate(const SpectralMeasure& m, const FieldState& s,
                                const Eigen::VectorXd& x) {
    Eigen::VectorXd v;
    evaluate_into(m, s, x, v);
    return v;
}

/// Spatial gradient, entry (i,l) = dV_i/dx_l. Its trace is the
/// divergence, identically zero because every amplitude lies in the
/// range of its projector.
inline Eigen::MatrixXd evaluate_gradient(const SpectralMeasure& m,
                                         const FieldState& s,
                                         const Eigen::VectorXd& x) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(m.dim(), m.dim());
    const Eigen::MatrixXd& K = m.wavevectors();
    for (int j = 0; j < m.num_modes(); ++j) {
        const double phase = K.col(j).dot(x);
        grad.noalias() -= std::sin(phase) * s.A.col(j) * K.col(j).transpose();
        grad.noalias() += std::cos(phase) * s.B.col(j) * K.col(j).transpose();
    }
    return grad;
}

}  // namespace homlab
