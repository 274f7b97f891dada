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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "homlab/errors.hpp"
#include "homlab/microscale.hpp"
#include "homlab/nonlinearity.hpp"
#include "homlab/parallel.hpp"
#include "homlab/rng.hpp"

namespace homlab {

/// Every homogenized coefficient in this module is a truncated time
/// integral of a stationary Lagrangian correlation. Writing theta for
/// the zero-mean solution of -L theta = F, the semigroup representation
/// theta = int_0^inf Q_t F dt turns every pairing into a correlation
/// integral:
///
///   <F, theta_G> = int_0^inf E[F(eta_0) G(eta_t)] dt,
///
/// and the symmetric part of the generator satisfies
///
///   E(theta_F, theta_G) = 1/2 (<F, theta_G> + <G, theta_F>)
///
/// because the advective part of the generator is antisymmetric. No
/// corrector or cell solution is ever represented pointwise.
///
/// Normalization: the effective covariance rate is A = 2 <v, chi>, the
/// additive-functional CLT constant; all noise constants carry the same
/// factor 2 (kappa_v = 2 E(theta, chi), kappa0 = 2 E(theta, theta)).
/// The factor is pinned by the shear-flow oracle
/// Var[X_2(t+D) - X_2(t)]/D -> 2 sigma / alpha.
struct CorrelatorTable {
    std::vector<double> time_grid;  // 0 .. T_GK
    // Entry conventions, with w = (v_1..v_d, Phi_1..Phi_M):
    //   C_vv[l](p,q)     = E[ v_p(eta_0)   v_q(eta_t_l)   ]
    //   C_vPhi[l](p,m)   = E[ v_p(eta_0)   Phi_m(eta_t_l) ]
    //   C_Phiv[l](m,p)   = E[ Phi_m(eta_0) v_p(eta_t_l)   ]
    //   C_PhiPhi[l](m,n) = E[ Phi_m(eta_0) Phi_n(eta_t_l) ]
    std::vector<Eigen::MatrixXd> C_vv, C_vPhi, C_Phiv, C_PhiPhi;
    std::vector<Eigen::MatrixXd> se_vv, se_vPhi, se_Phiv, se_PhiPhi;
    long n_paths = 0;
    double alpha_star = 0.0;
    double T_GK = 0.0;

    int dim() const { return C_vv.empty() ? 0 : int(C_vv[0].rows()); }
    int num_functionals() const {
        return C_PhiPhi.empty() ? 0 : int(C_PhiPhi[0].rows());
    }
};

namespace detail {
/// Fixed chunk width for the sufficient-statistic reduction. The
/// reduction tree (serial within a chunk, chunks merged in index order)
/// is a function of this constant only, never of the worker count, so
/// outputs are bit-stable across thread counts.
constexpr int kReductionChunk = 16;
}  // namespace detail

inline CorrelatorTable estimate_correlators(
    const SpectralMeasure& m, const std::vector<ChaosFunctional>& functionals,
    long n_paths, double T_GK, double dtau, uint64_t master_seed,
    uint64_t experiment_id, int n_threads = 1) {
    if (!(T_GK * m.alpha_star() >= 5.0)) {
        std::ostringstream msg;
        msg << "estimate_correlators: T_GK = " << T_GK
            << " is below 5/alpha_star = " << 5.0 / m.alpha_star()
            << "; the exponential tail bound on the correlators would not "
               "hold at the truncation point";
        throw ValidationError(msg.str());
    }
    if (n_paths < 2) {
        throw ValidationError("estimate_correlators: n_paths must be >= 2");
    }
    if (dtau <= 0.0) {
        dtau = MicroConfig::max_stable_dtau(m);
    }
    // Output grid: coarse enough to keep the lag set small, fine enough
    // to resolve the fastest decay.
    const double dtau_out_target = std::min(0.05 / m.alpha_star(), dtau * 10.0);
    const int stride = std::max(1, int(std::round(dtau_out_target / dtau)));
    // Horizon doubles the integration window so every lag up to T_GK
    // can be averaged over T_GK worth of time origins (the process
    // starts stationary, no burn-in to discard).
    const double horizon = 2.0 * T_GK;
    const int n_steps = std::max(1, int(std::ceil(horizon / dtau)));
    const double dt = horizon / n_steps;
    const double dt_out = dt * stride;
    const int n_out = n_steps / stride + 1;
    const int n_lags = std::min(n_out - 1, int(std::round(T_GK / dt_out)));
    const int n_origins = n_out - n_lags;
    if (n_origins < 1 || n_lags < 2) {
        throw ValidationError("estimate_correlators: grid too coarse");
    }

    const int d = m.dim();
    const int M = int(functionals.size());
    const int D = d + M;

    struct ChunkStats {
        std::vector<Eigen::MatrixXd> sum, sumsq;
    };
    const int n_chunks =
        int((n_paths + detail::kReductionChunk - 1) / detail::kReductionChunk);
    std::vector<ChunkStats> chunks(n_chunks);

    parallel_for(n_chunks, n_threads, [&](int c) {
        ChunkStats& st = chunks[c];
        st.sum.assign(n_lags + 1, Eigen::MatrixXd::Zero(D, D));
        st.sumsq.assign(n_lags + 1, Eigen::MatrixXd::Zero(D, D));
        const long begin = long(c) * detail::kReductionChunk;
        const long end = std::min<long>(begin + detail::kReductionChunk, n_paths);
        Eigen::MatrixXd W(D, n_out);
        Eigen::MatrixXd C(D, D);
        for (long path = begin; path < end; ++path) {
            Philox4x32 rng =
                make_stream(master_seed, experiment_id, 0, uint64_t(path));
            EnvironmentSeries series =
                sample_environment(m, functionals, horizon, dtau, stride, rng);
            W.topRows(d) = series.v;
            if (M > 0) {
                W.bottomRows(M) = series.phi;
            }
            for (int l = 0; l <= n_lags; ++l) {
                C.noalias() = W.leftCols(n_origins) *
                              W.middleCols(l, n_origins).transpose();
                C /= double(n_origins);
                st.sum[l] += C;
                st.sumsq[l] += C.cwiseProduct(C);
            }
        }
    });

    std::vector<Eigen::MatrixXd> sum(n_lags + 1, Eigen::MatrixXd::Zero(D, D));
    std::vector<Eigen::MatrixXd> sumsq(n_lags + 1, Eigen::MatrixXd::Zero(D, D));
    for (int c = 0; c < n_chunks; ++c) {
        for (int l = 0; l <= n_lags; ++l) {
            sum[l] += chunks[c].sum[l];
            sumsq[l] += chunks[c].sumsq[l];
        }
    }

    CorrelatorTable table;
    table.n_paths = n_paths;
    table.alpha_star = m.alpha_star();
    table.T_GK = n_lags * dt_out;
    table.time_grid.resize(n_lags + 1);
    table.C_vv.resize(n_lags + 1);
    table.C_vPhi.resize(n_lags + 1);
    table.C_Phiv.resize(n_lags + 1);
    table.C_PhiPhi.resize(n_lags + 1);
    table.se_vv.resize(n_lags + 1);
    table.se_vPhi.resize(n_lags + 1);
    table.se_Phiv.resize(n_lags + 1);
    table.se_PhiPhi.resize(n_lags + 1);
    const double inv_n = 1.0 / double(n_paths);
    for (int l = 0; l <= n_lags; ++l) {
        table.time_grid[l] = l * dt_out;
        const Eigen::MatrixXd mean = sum[l] * inv_n;
        const Eigen::MatrixXd var =
            ((sumsq[l] * inv_n) - mean.cwiseProduct(mean)).cwiseMax(0.0);
        const Eigen::MatrixXd se = (var * inv_n).cwiseSqrt();
        table.C_vv[l] = mean.topLeftCorner(d, d);
        table.C_vPhi[l] = mean.topRightCorner(d, M);
        table.C_Phiv[l] = mean.bottomLeftCorner(M, d);
        table.C_PhiPhi[l] = mean.bottomRightCorner(M, M);
        table.se_vv[l] = se.topLeftCorner(d, d);
        table.se_vPhi[l] = se.topRightCorner(d, M);
        table.se_Phiv[l] = se.bottomLeftCorner(M, d);
        table.se_PhiPhi[l] = se.bottomRightCorner(M, M);
    }

    // Tail-bound invariant at the truncation point.
    const double max_var =
        std::max(table.C_vv[0].diagonal().maxCoeff(),
                 M > 0 ? table.C_PhiPhi[0].diagonal().maxCoeff() : 0.0);
    const double decay = std::exp(-m.alpha_star() * table.T_GK);
    auto check_tail = [&](const Eigen::MatrixXd& C, const Eigen::MatrixXd& se,
                          const char* name) {
        for (int i = 0; i < C.rows(); ++i) {
            for (int j = 0; j < C.cols(); ++j) {
                const double bound = max_var * decay + 4.0 * se(i, j);
                if (std::abs(C(i, j)) > bound + 1e-12) {
                    std::ostringstream msg;
                    msg << "estimate_correlators: " << name << "(" << i << ","
                        << j << ") = " << C(i, j) << " at T_GK exceeds the "
                        << "tail bound " << bound
                        << "; extend T_GK or add paths";
                    throw NumericQualityError(msg.str());
                }
            }
        }
    };
    check_tail(table.C_vv[n_lags], table.se_vv[n_lags], "C_vv");
    if (M > 0) {
        check_tail(table.C_vPhi[n_lags], table.se_vPhi[n_lags], "C_vPhi");
        check_tail(table.C_Phiv[n_lags], table.se_Phiv[n_lags], "C_Phiv");
        check_tail(table.C_PhiPhi[n_lags], table.se_PhiPhi[n_lags], "C_PhiPhi");
    }
    return table;
}

namespace detail {
/// Trapezoid integral over the table grid plus the closed-form
/// exponential closure of the tail: the integrand beyond T_GK is
/// bounded by its value at T_GK times exp(-alpha_star (t - T_GK)).
inline double integrate_with_tail(const std::vector<double>& t,
                                  const std::vector<double>& c,
                                  double alpha_star) {
    double acc = 0.0;
    for (size_t l = 1; l < t.size(); ++l) {
        acc += 0.5 * (c[l] + c[l - 1]) * (t[l] - t[l - 1]);
    }
    acc += c.back() / alpha_star;
    return acc;
}

inline double integral_se(const std::vector<double>& t,
                          const std::vector<double>& se, double alpha_star) {
    double acc = 0.0;
    for (size_t l = 1; l < t.size(); ++l) {
        const double w = 0.5 * (t[l] - t[l - 1]);
        acc += w * w * (se[l] * se[l] + se[l - 1] * se[l - 1]);
    }
    acc += se.back() * se.back() / (alpha_star * alpha_star);
    return std::sqrt(acc);
}

template <class Pick>
double integrate_entry(const CorrelatorTable& table, Pick pick) {
    std::vector<double> c(table.time_grid.size());
    for (size_t l = 0; l < c.size(); ++l) {
        c[l] = pick(int(l));
    }
    return integrate_with_tail(table.time_grid, c, table.alpha_star);
}

template <class Pick>
double entry_se(const CorrelatorTable& table, Pick pick) {
    std::vector<double> s(table.time_grid.size());
    for (size_t l = 0; l < s.size(); ++l) {
        s[l] = pick(int(l));
    }
    return integral_se(table.time_grid, s, table.alpha_star);
}
}  // namespace detail

struct EffectiveDiffusivity {
    Eigen::MatrixXd A;   // symmetric PSD, rate of the limit covariance
    Eigen::MatrixXd se;  // per-entry propagated standard error
    bool clamped = false;  // a small negative eigenvalue was zeroed
};

/// A_pq = 2 <v_p, chi_q> estimated as the symmetrized correlation
/// integral: A = I + I^T with I_pq = int_0^inf E[v_p(0) v_q(t)] dt.
/// Symmetry is exact by construction; eigenvalues negative within
/// statistical error are clamped to zero, beyond it the data is
/// rejected.
inline EffectiveDiffusivity effective_diffusivity(
    const CorrelatorTable& table) {
    const int d = table.dim();
    Eigen::MatrixXd I(d, d), Ise(d, d);
    for (int p = 0; p < d; ++p) {
        for (int q = 0; q < d; ++q) {
            I(p, q) = detail::integrate_entry(
                table, [&](int l) { return table.C_vv[l](p, q); });
            Ise(p, q) = detail::entry_se(
                table, [&](int l) { return table.se_vv[l](p, q); });
        }
    }
    EffectiveDiffusivity out;
    out.A = I + I.transpose();
    out.se = (Ise.cwiseProduct(Ise) +
              Ise.transpose().cwiseProduct(Ise.transpose()))
                 .cwiseSqrt();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.A);
    const double se_scale = out.se.maxCoeff();
    Eigen::VectorXd lam = eig.eigenvalues();
    bool fixed = false;
    for (int i = 0; i < d; ++i) {
        if (lam[i] < 0.0) {
            if (-lam[i] <= 4.0 * se_scale) {
                lam[i] = 0.0;
                fixed = true;
            } else {
                std::ostringstream msg;
                msg << "effective_diffusivity: eigenvalue " << lam[i]
                    << " negative beyond 4 standard errors (" << se_scale
                    << "); correlator data is inconsistent";
                throw NumericQualityError(msg.str());
            }
        }
    }
    if (fixed) {
        out.A = eig.eigenvectors() * lam.asDiagonal() *
                eig.eigenvectors().transpose();
        out.A = 0.5 * (out.A + out.A.transpose());
        out.clamped = true;
    }
    return out;
}

/// Scalar constants assembled from the correlator table for a separable
/// reaction f = sum_m g_m Phi_m (centered terms only enter):
///
///   lambda(p,m)    = <theta_m v_p>     = int E[v_p(0) Phi_m(t)] dt
///   theta_phi(m,n) = <theta_m Phi_n>   = int E[Phi_n(0) Phi_m(t)] dt
///   kappa_v(j,m)   = 2 E(theta_m, chi_j)
///                  = int (E[Phi_m(0) v_j(t)] + E[v_j(0) Phi_m(t)]) dt
///   kappa0(m,n)    = 2 E(theta_m, theta_n)
///                  = int (E[Phi_m(0) Phi_n(t)] + E[Phi_n(0) Phi_m(t)]) dt
struct HomogenizedCoefficients {
    int dim = 0;
    int num_terms = 0;           // centered terms, index m
    Eigen::MatrixXd A;           // d x d effective covariance rate
    Eigen::MatrixXd S;           // symmetric PSD square root of A
    Eigen::MatrixXd S_pinv;      // pseudo-inverse on the non-degenerate span
    std::vector<int> degenerate; // eigen-directions with eigenvalue <= tol
    Eigen::MatrixXd lambda;      // d x M
    Eigen::MatrixXd theta_phi;   // M x M
    Eigen::MatrixXd mu;          // symmetrized theta_phi
    Eigen::MatrixXd kappa_v;     // d x M
    Eigen::MatrixXd kappa0;      // M x M
    Eigen::MatrixXd se_A, se_lambda, se_kappa_v, se_kappa0;
    double T_GK = 0.0;
    long n_paths = 0;
    uint64_t seed = 0;

    double eig_tol() const { return 1e-8 * A.trace(); }
};

/// Rebuilds S, its pseudo-inverse and the degenerate-direction flags
/// from A. S S = A holds to roundoff on the non-degenerate subspace.
inline void rebuild_square_root(HomogenizedCoefficients& hc) {
    const int d = hc.dim;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hc.A);
    const double tol = hc.eig_tol();
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sqinv = Eigen::VectorXd::Zero(d);
    hc.degenerate.clear();
    for (int i = 0; i < d; ++i) {
        const double lam = std::max(0.0, eig.eigenvalues()[i]);
        if (lam > tol) {
            sq[i] = std::sqrt(lam);
            sqinv[i] = 1.0 / sq[i];
        } else {
            hc.degenerate.push_back(i);
        }
    }
    hc.S = eig.eigenvectors() * sq.asDiagonal() * eig.eigenvectors().transpose();
    hc.S_pinv =
        eig.eigenvectors() * sqinv.asDiagonal() * eig.eigenvectors().transpose();
}

inline HomogenizedCoefficients assemble_coefficients(
    const CorrelatorTable& table) {
    const int d = table.dim();
    const int M = table.num_functionals();
    HomogenizedCoefficients hc;
    hc.dim = d;
    hc.num_terms = M;
    hc.T_GK = table.T_GK;
    hc.n_paths = table.n_paths;

    EffectiveDiffusivity ed = effective_diffusivity(table);
    hc.A = ed.A;
    hc.se_A = ed.se;
    rebuild_square_root(hc);

    hc.lambda.resize(d, M);
    hc.se_lambda.resize(d, M);
    hc.kappa_v.resize(d, M);
    hc.se_kappa_v.resize(d, M);
    for (int p = 0; p < d; ++p) {
        for (int mm = 0; mm < M; ++mm) {
            hc.lambda(p, mm) = detail::integrate_entry(
                table, [&](int l) { return table.C_vPhi[l](p, mm); });
            hc.se_lambda(p, mm) = detail::entry_se(
                table, [&](int l) { return table.se_vPhi[l](p, mm); });
            const double phiv = detail::integrate_entry(
                table, [&](int l) { return table.C_Phiv[l](mm, p); });
            hc.kappa_v(p, mm) = hc.lambda(p, mm) + phiv;
            const double se_phiv = detail::entry_se(
                table, [&](int l) { return table.se_Phiv[l](mm, p); });
            hc.se_kappa_v(p, mm) = std::sqrt(
                hc.se_lambda(p, mm) * hc.se_lambda(p, mm) + se_phiv * se_phiv);
        }
    }

    hc.theta_phi.resize(M, M);
    hc.kappa0.resize(M, M);
    hc.se_kappa0.resize(M, M);
    Eigen::MatrixXd se_tp(M, M);
    for (int mm = 0; mm < M; ++mm) {
        for (int nn = 0; nn < M; ++nn) {
            // <theta_m Phi_n> pairs the later observable with theta's
            // source: int E[Phi_n(0) Phi_m(t)] dt.
            hc.theta_phi(mm, nn) = detail::integrate_entry(
                table, [&](int l) { return table.C_PhiPhi[l](nn, mm); });
            se_tp(mm, nn) = detail::entry_se(
                table, [&](int l) { return table.se_PhiPhi[l](nn, mm); });
        }
    }
    hc.mu = 0.5 * (hc.theta_phi + hc.theta_phi.transpose());
    hc.kappa0 = hc.theta_phi + hc.theta_phi.transpose();
    hc.se_kappa0 =
        (se_tp.cwiseProduct(se_tp) +
         se_tp.transpose().cwiseProduct(se_tp.transpose()))
            .cwiseSqrt();
    return hc;
}

/// Callable limit-SDE coefficients for a separable centered reaction:
///
///   b(s,y,u)   = sum_m grad_y g_m . lambda_.m
///              + sum_{m,n} du g_m g_n theta_phi(m,n)
///   c~_j       = sum_m g_m (S^+ kappa_v)_{j,m},  j = 1..d
///   c~_0^2     = C_0 - |c~|^2,  C_0 = g^T kappa0 g
///
/// c~_0^2 negative within statistical error is clamped to zero (and the
/// event counted); negative beyond 4 SE is a data-quality error.
class LimitCoefficients {
public:
    LimitCoefficients(const NonlinearitySpec& spec,
                      const HomogenizedCoefficients& hc)
        : hc_(hc) {
        for (int idx : spec.centered_term_indices()) {
            terms_.push_back(spec.terms()[size_t(idx)]);
        }
        if (int(terms_.size()) != hc_.num_terms) {
            throw ValidationError(
                "LimitCoefficients: coefficient table was assembled for a "
                "different number of centered terms");
        }
        ct_basis_ = hc_.S_pinv * hc_.kappa_v;  // d x M
        q_ = hc_.kappa0 - ct_basis_.transpose() * ct_basis_;
        q_ = 0.5 * (q_ + q_.transpose());
        // First-order error scale for the clamp guard on c~_0^2.
        Eigen::MatrixXd se_gram =
            ct_basis_.cwiseAbs().transpose() *
            (hc_.S_pinv.cwiseAbs() * hc_.se_kappa_v);
        se_q_ = hc_.se_kappa0 + se_gram + se_gram.transpose();
    }

    int dim() const { return hc_.dim; }
    const HomogenizedCoefficients& constants() const { return hc_; }
    long clamp_events() const { return clamp_events_.load(); }

    double b(double s, const Eigen::VectorXd& y, double u) const {
        double out = 0.0;
        for (size_t mm = 0; mm < terms_.size(); ++mm) {
            out += terms_[mm].g.dx(s, y, u).dot(hc_.lambda.col(long(mm)));
            const double dgm = terms_[mm].g.du(s, y, u);
            if (dgm != 0.0) {
                for (size_t nn = 0; nn < terms_.size(); ++nn) {
                    out += dgm * terms_[nn].g.value(s, y, u) *
                           hc_.theta_phi(long(mm), long(nn));
                }
            }
        }
        return out;
    }

    double db_du(double s, const Eigen::VectorXd& y, double u) const {
        double out = 0.0;
        for (size_t mm = 0; mm < terms_.size(); ++mm) {
            out += terms_[mm].g.dxdu(s, y, u).dot(hc_.lambda.col(long(mm)));
            const double dgm = terms_[mm].g.du(s, y, u);
            const double ddgm = terms_[mm].g.dudu(s, y, u);
            for (size_t nn = 0; nn < terms_.size(); ++nn) {
                out += (ddgm * terms_[nn].g.value(s, y, u) +
                        dgm * terms_[nn].g.du(s, y, u)) *
                       hc_.theta_phi(long(mm), long(nn));
            }
        }
        return out;
    }

    /// Noise loadings paired with the X drivers (j = 1..d).
    Eigen::VectorXd c_tilde(double s, const Eigen::VectorXd& y,
                            double u) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(hc_.dim);
        for (size_t mm = 0; mm < terms_.size(); ++mm) {
            out.noalias() +=
                terms_[mm].g.value(s, y, u) * ct_basis_.col(long(mm));
        }
        return out;
    }

    Eigen::VectorXd dc_tilde_du(double s, const Eigen::VectorXd& y,
                                double u) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(hc_.dim);
        for (size_t mm = 0; mm < terms_.size(); ++mm) {
            out.noalias() +=
                terms_[mm].g.du(s, y, u) * ct_basis_.col(long(mm));
        }
        return out;
    }

    /// Extra-driver loading c~_0 >= 0 and its u-derivative (zero on the
    /// clamped set, where the one-sided derivative is taken as 0).
    void c0_tilde(double s, const Eigen::VectorXd& y, double u,
                  double* c0, double* dc0_du) const {
        Eigen::VectorXd g(long(terms_.size()));
        Eigen::VectorXd dg(long(terms_.size()));
        for (size_t mm = 0; mm < terms_.size(); ++mm) {
            g[long(mm)] = terms_[mm].g.value(s, y, u);
            dg[long(mm)] = terms_[mm].g.du(s, y, u);
        }
        const double c0sq = g.dot(q_ * g);
        if (c0sq < 0.0) {
            const double tol =
                4.0 * g.cwiseAbs().dot(se_q_ * g.cwiseAbs()) + 1e-14;
            if (-c0sq > tol) {
                std::ostringstream msg;
                msg << "LimitCoefficients: c~_0^2 = " << c0sq
                    << " negative beyond the statistical tolerance " << tol
                    << " at u = " << u << "; estimates are inconsistent";
                throw NumericQualityError(msg.str());
            }
            clamp_events_.fetch_add(1, std::memory_order_relaxed);
            *c0 = 0.0;
            *dc0_du = 0.0;
            return;
        }
        *c0 = std::sqrt(c0sq);
        if (*c0 < 1e-12) {
            *dc0_du = 0.0;
        } else {
            *dc0_du = dg.dot(q_ * g) / *c0;
        }
    }

private:
    HomogenizedCoefficients hc_;
    std::vector<NonlinearityTerm> terms_;
    Eigen::MatrixXd ct_basis_;  // d x M, columns S^+ kappa_v
    Eigen::MatrixXd q_, se_q_;  // M x M
    mutable std::atomic<long> clamp_events_{0};
};

}  // namespace homlab
