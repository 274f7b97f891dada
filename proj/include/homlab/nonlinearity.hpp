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
#include "homlab/spectral_field.hpp"

namespace homlab {

/// A functional of the field evaluated at the shift point. Constant has
/// mean 1 under the stationary law; the other kinds are exactly
/// centered (CenteredQuadratic subtracts the closed-form one-point
/// covariance, not a sample mean).
struct ChaosFunctional {
    enum class Kind { Constant, FieldComponent, CenteredQuadratic };

    Kind kind = Kind::Constant;
    int p = -1;  // axis index, 0-based
    int q = -1;

    static ChaosFunctional constant() { return {Kind::Constant, -1, -1}; }
    static ChaosFunctional component(int axis) {
        return {Kind::FieldComponent, axis, -1};
    }
    static ChaosFunctional centered_quadratic(int axis_p, int axis_q) {
        return {Kind::CenteredQuadratic, axis_p, axis_q};
    }

    void validate(int dim) const {
        if (kind == Kind::FieldComponent && (p < 0 || p >= dim)) {
            throw ValidationError("ChaosFunctional: axis index out of range");
        }
        if (kind == Kind::CenteredQuadratic &&
            (p < 0 || p >= dim || q < 0 || q >= dim)) {
            throw ValidationError("ChaosFunctional: axis index out of range");
        }
    }

    double evaluate(const SpectralMeasure& m, const Eigen::VectorXd& v_shift)
        const {
        switch (kind) {
        case Kind::Constant:
            return 1.0;
        case Kind::FieldComponent:
            return v_shift[p];
        case Kind::CenteredQuadratic:
            return v_shift[p] * v_shift[q] - m.one_point_covariance()(p, q);
        }
        return 0.0;
    }
};

/// Closed-form coefficient g(t,x,u) drawn from a fixed expression
/// library, with analytic first and second partials in (x,u). All
/// library shapes are bounded with bounded derivatives, matching the
/// smoothness the model requires of the reaction term.
///
///   Constant: g = c
///   Wave:     g = offset + amp cos(kx . x + ku u + phase)
///   Bump:     g = amp exp(-|x - cx|^2 / (2 wx^2) - (u - cu)^2 / (2 wu^2))
class SmoothCoefficient {
public:
    enum class Kind { Constant, Wave, Bump };

    static SmoothCoefficient constant(double c) {
        SmoothCoefficient g;
        g.kind_ = Kind::Constant;
        g.offset_ = c;
        return g;
    }

    static SmoothCoefficient wave(double amp, Eigen::VectorXd kx, double ku,
                                  double phase = 0.0, double offset = 0.0) {
        SmoothCoefficient g;
        g.kind_ = Kind::Wave;
        g.amp_ = amp;
        g.kx_ = std::move(kx);
        g.ku_ = ku;
        g.phase_ = phase;
        g.offset_ = offset;
        return g;
    }

    static SmoothCoefficient bump(double amp, Eigen::VectorXd center_x,
                                  double width_x, double center_u = 0.0,
                                  double width_u = 0.0) {
        if (!(width_x > 0.0)) {
            throw ValidationError("SmoothCoefficient::bump: width_x <= 0");
        }
        if (width_u < 0.0) {
            throw ValidationError("SmoothCoefficient::bump: width_u < 0");
        }
        SmoothCoefficient g;
        g.kind_ = Kind::Bump;
        g.amp_ = amp;
        g.center_x_ = std::move(center_x);
        g.width_x_ = width_x;
        g.center_u_ = center_u;
        g.width_u_ = width_u;  // 0 means no u dependence
        return g;
    }

    Kind kind() const { return kind_; }

    /// Structurally zero everywhere (used by the centering predicate).
    bool is_zero() const {
        switch (kind_) {
        case Kind::Constant:
            return offset_ == 0.0;
        case Kind::Wave:
            return amp_ == 0.0 && offset_ == 0.0;
        case Kind::Bump:
            return amp_ == 0.0;
        }
        return false;
    }

    double value(double /*t*/, const Eigen::VectorXd& x, double u) const {
        switch (kind_) {
        case Kind::Constant:
            return offset_;
        case Kind::Wave:
            return offset_ + amp_ * std::cos(arg(x, u));
        case Kind::Bump:
            return amp_ * std::exp(exponent(x, u));
        }
        return 0.0;
    }

    double du(double /*t*/, const Eigen::VectorXd& x, double u) const {
        switch (kind_) {
        case Kind::Constant:
            return 0.0;
        case Kind::Wave:
            return -amp_ * ku_ * std::sin(arg(x, u));
        case Kind::Bump:
            return value(0.0, x, u) * du_exponent(u);
        }
        return 0.0;
    }

    double dudu(double /*t*/, const Eigen::VectorXd& x, double u) const {
        switch (kind_) {
        case Kind::Constant:
            return 0.0;
        case Kind::Wave:
            return -amp_ * ku_ * ku_ * std::cos(arg(x, u));
        case Kind::Bump: {
            const double e = du_exponent(u);
            const double e2 =
                width_u_ > 0.0 ? -1.0 / (width_u_ * width_u_) : 0.0;
            return value(0.0, x, u) * (e * e + e2);
        }
        }
        return 0.0;
    }

    Eigen::VectorXd dx(double /*t*/, const Eigen::VectorXd& x, double u) const {
        switch (kind_) {
        case Kind::Constant:
            return Eigen::VectorXd::Zero(x.size());
        case Kind::Wave:
            if (kx_.size() == 0) {
                return Eigen::VectorXd::Zero(x.size());
            }
            return -amp_ * std::sin(arg(x, u)) * kx_;
        case Kind::Bump:
            return value(0.0, x, u) *
                   (-(x - center_x_) / (width_x_ * width_x_));
        }
        return Eigen::VectorXd::Zero(x.size());
    }

    /// d^2 g / dx du, needed for the u-derivative of the limit drift.
    Eigen::VectorXd dxdu(double /*t*/, const Eigen::VectorXd& x,
                         double u) const {
        switch (kind_) {
        case Kind::Constant:
            return Eigen::VectorXd::Zero(x.size());
        case Kind::Wave:
            if (kx_.size() == 0) {
                return Eigen::VectorXd::Zero(x.size());
            }
            return -amp_ * ku_ * std::cos(arg(x, u)) * kx_;
        case Kind::Bump:
            return du(0.0, x, u) * (-(x - center_x_) / (width_x_ * width_x_));
        }
        return Eigen::VectorXd::Zero(x.size());
    }

private:
    double arg(const Eigen::VectorXd& x, double u) const {
        double a = ku_ * u + phase_;
        if (kx_.size() > 0) {
            a += kx_.dot(x);
        }
        return a;
    }

    double exponent(const Eigen::VectorXd& x, double u) const {
        double e = -(x - center_x_).squaredNorm() / (2.0 * width_x_ * width_x_);
        if (width_u_ > 0.0) {
            const double du_ = u - center_u_;
            e -= du_ * du_ / (2.0 * width_u_ * width_u_);
        }
        return e;
    }

    double du_exponent(double u) const {
        if (width_u_ <= 0.0) {
            return 0.0;
        }
        return -(u - center_u_) / (width_u_ * width_u_);
    }

    Kind kind_ = Kind::Constant;
    double amp_ = 0.0;
    double offset_ = 0.0;
    Eigen::VectorXd kx_;
    double ku_ = 0.0;
    double phase_ = 0.0;
    Eigen::VectorXd center_x_;
    double width_x_ = 1.0;
    double center_u_ = 0.0;
    double width_u_ = 0.0;
};

struct NonlinearityTerm {
    SmoothCoefficient g;
    ChaosFunctional phi;
};

/// Reaction term as a finite sum of separable terms g_m(t,x,u) Phi_m.
/// Separability is what lets every limit coefficient factor into
/// analytic (t,x,u) functions times scalar correlation integrals.
class NonlinearitySpec {
public:
    NonlinearitySpec() = default;
    NonlinearitySpec(std::vector<NonlinearityTerm> terms, int dim)
        : terms_(std::move(terms)) {
        for (const auto& term : terms_) {
            term.phi.validate(dim);
        }
    }

    const std::vector<NonlinearityTerm>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    /// True iff the mean over the stationary field law vanishes
    /// identically: no Constant functional is paired with a nonzero g.
    bool centered() const {
        for (const auto& term : terms_) {
            if (term.phi.kind == ChaosFunctional::Kind::Constant &&
                !term.g.is_zero()) {
                return false;
            }
        }
        return true;
    }

    /// Indices of terms whose functional is centered (non-Constant).
    /// These are the terms that feed the correlation-integral machinery.
    std::vector<int> centered_term_indices() const {
        std::vector<int> idx;
        for (size_t m = 0; m < terms_.size(); ++m) {
            if (terms_[m].phi.kind != ChaosFunctional::Kind::Constant) {
                idx.push_back(static_cast<int>(m));
            }
        }
        return idx;
    }

private:
    std::vector<NonlinearityTerm> terms_;
};

/// f(t,x,u, field shifted by `shift`). FieldComponent and
/// CenteredQuadratic reduce to field values at the shift point.
inline double evaluate_f(const NonlinearitySpec& spec, double t,
                         const Eigen::VectorXd& x, double u,
                         const SpectralMeasure& m, const FieldState& state,
                         const Eigen::VectorXd& shift) {
    static thread_local Eigen::VectorXd v;
    evaluate_into(m, state, shift, v);
    double f = 0.0;
    for (const auto& term : spec.terms()) {
        f += term.g.value(t, x, u) * term.phi.evaluate(m, v);
    }
    return f;
}

/// Mean over the stationary field law: only Constant functionals
/// survive. Exact, no sampling.
inline double mean_f(const NonlinearitySpec& spec, double t,
                     const Eigen::VectorXd& x, double u) {
    double f = 0.0;
    for (const auto& term : spec.terms()) {
        if (term.phi.kind == ChaosFunctional::Kind::Constant) {
            f += term.g.value(t, x, u);
        }
    }
    return f;
}

/// Analytic partials in (x,u); the functionals carry no (x,u)
/// dependence so only the g factors differentiate.
inline void partials_f(const NonlinearitySpec& spec, double t,
                       const Eigen::VectorXd& x, double u,
                       const SpectralMeasure& m, const FieldState& state,
                       const Eigen::VectorXd& shift, Eigen::VectorXd& df_dx,
                       double& df_du) {
    static thread_local Eigen::VectorXd v;
    evaluate_into(m, state, shift, v);
    df_dx.setZero(x.size());
    df_du = 0.0;
    for (const auto& term : spec.terms()) {
        const double phi = term.phi.evaluate(m, v);
        df_dx.noalias() += phi * term.g.dx(t, x, u);
        df_du += phi * term.g.du(t, x, u);
    }
}

/// Built-in demonstration terms.
///
/// demo_mean: nonzero-mean pair used for the averaged (alpha = 0)
/// regime: 0.5 cos(u) plus 0.3 cos(x_1) times the second field
/// component.
inline NonlinearitySpec demo_mean(int dim = 2) {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(dim);
    e1[0] = 1.0;
    std::vector<NonlinearityTerm> terms;
    terms.push_back({SmoothCoefficient::wave(0.5, Eigen::VectorXd(), 1.0),
                     ChaosFunctional::constant()});
    terms.push_back(
        {SmoothCoefficient::wave(0.3, e1, 0.0), ChaosFunctional::component(1)});
    return NonlinearitySpec(std::move(terms), dim);
}

/// demo_zero: centered, u- and x-independent: 0.4 V_2.
inline NonlinearitySpec demo_zero(int dim = 2) {
    std::vector<NonlinearityTerm> terms;
    terms.push_back(
        {SmoothCoefficient::constant(0.4), ChaosFunctional::component(1)});
    // A Constant-kind g pairs fine with a centered functional; the
    // centering predicate only rejects Constant functionals.
    return NonlinearitySpec(std::move(terms), dim);
}

/// demo_zero_u: centered with u dependence: (0.3 + 0.2 sin(u)) V_2.
inline NonlinearitySpec demo_zero_u(int dim = 2) {
    std::vector<NonlinearityTerm> terms;
    terms.push_back({SmoothCoefficient::wave(0.2, Eigen::VectorXd(), 1.0,
                                             -M_PI / 2.0, 0.3),
                     ChaosFunctional::component(1)});
    return NonlinearitySpec(std::move(terms), dim);
}

}  // namespace homlab
