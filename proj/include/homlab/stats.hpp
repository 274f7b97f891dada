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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "homlab/errors.hpp"
#include "homlab/rng.hpp"

namespace homlab {

struct SampleSet {
    std::vector<double> values;
    std::string label;     // epsilon value or "limit"
    uint64_t seed = 0;

    void validate() const {
        if (values.empty()) {
            throw ValidationError("SampleSet '" + label + "' is empty");
        }
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw ValidationError("SampleSet '" + label +
                                      "' contains a non-finite value");
            }
        }
    }
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

namespace detail {
/// Kolmogorov tail sum Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2),
/// truncated at 100 terms.
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-8) {
        return 1.0;
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-16) {
            break;
        }
    }
    return std::min(1.0, std::max(0.0, 2.0 * sum));
}
}  // namespace detail

/// Two-sample Kolmogorov-Smirnov statistic by a merged sweep over both
/// sorted samples, with the usual asymptotic p approximation.
inline KsResult ks_two_sample(const SampleSet& a, const SampleSet& b) {
    a.validate();
    b.validate();
    if (a.values.size() < 50 || b.values.size() < 50) {
        throw ValidationError("ks_two_sample: need at least 50 samples each");
    }
    std::vector<double> xa(a.values), xb(b.values);
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    const size_t n = xa.size(), m = xb.size();
    size_t i = 0, j = 0;
    double D = 0.0;
    while (i < n && j < m) {
        const double va = xa[i], vb = xb[j];
        if (va <= vb) {
            ++i;
        }
        if (vb <= va) {
            ++j;
        }
        D = std::max(D, std::abs(double(i) / n - double(j) / m));
    }
    const double ne = double(n) * m / double(n + m);
    const double sq = std::sqrt(ne);
    KsResult r;
    r.statistic = D;
    r.p_value = detail::kolmogorov_q((sq + 0.12 + 0.11 / sq) * D);
    return r;
}

/// Exact 1-Wasserstein distance between empirical laws: the integral of
/// |F_a^{-1} - F_b^{-1}| over quantile levels, piecewise-constant
/// quantile functions merged at their breakpoints. For equal sizes this
/// reduces to the mean absolute difference of sorted samples.
inline double wasserstein1(const SampleSet& a, const SampleSet& b) {
    a.validate();
    b.validate();
    std::vector<double> xa(a.values), xb(b.values);
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    const size_t n = xa.size(), m = xb.size();
    double acc = 0.0;
    double q = 0.0;
    size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double qa = double(i + 1) / n;
        const double qb = double(j + 1) / m;
        const double q_next = std::min(qa, qb);
        acc += (q_next - q) * std::abs(xa[i] - xb[j]);
        q = q_next;
        if (qa <= qb + 1e-15) {
            ++i;
        }
        if (qb <= qa + 1e-15) {
            ++j;
        }
    }
    return acc;
}

struct CorrelationResult {
    double corr = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

namespace detail {
inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    const double denom = std::sqrt(sxx * syy);
    return denom > 0.0 ? sxy / denom : 0.0;
}
}  // namespace detail

/// Pearson correlation of paired samples with a percentile bootstrap
/// 95% interval (2000 resamples, deterministic stream).
inline CorrelationResult correlation_ci(const SampleSet& x, const SampleSet& y,
                                        int n_boot = 2000,
                                        uint64_t boot_seed = 7777) {
    x.validate();
    y.validate();
    if (x.values.size() != y.values.size()) {
        throw ValidationError("correlation_ci: paired samples differ in size");
    }
    if (x.values.size() < 100) {
        throw ValidationError("correlation_ci: need at least 100 pairs");
    }
    const size_t n = x.values.size();
    CorrelationResult r;
    r.corr = detail::pearson(x.values, y.values);

    Philox4x32 rng(boot_seed, 0);
    std::vector<double> boots(static_cast<size_t>(n_boot));
    std::vector<double> bx(n), by(n);
    for (int b = 0; b < n_boot; ++b) {
        for (size_t i = 0; i < n; ++i) {
            const size_t pick = size_t(rng.next_u64() % n);
            bx[i] = x.values[pick];
            by[i] = y.values[pick];
        }
        boots[size_t(b)] = detail::pearson(bx, by);
    }
    std::sort(boots.begin(), boots.end());
    r.ci_lo = boots[size_t(0.025 * (n_boot - 1))];
    r.ci_hi = boots[size_t(0.975 * (n_boot - 1))];
    return r;
}

struct MetricWithCi {
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Percentile bootstrap interval for any two-sample metric.
inline MetricWithCi bootstrap_metric_ci(
    const SampleSet& a, const SampleSet& b,
    const std::function<double(const SampleSet&, const SampleSet&)>& metric,
    int n_boot = 200, uint64_t boot_seed = 8888) {
    MetricWithCi out;
    out.value = metric(a, b);
    Philox4x32 rng(boot_seed, 1);
    std::vector<double> boots(static_cast<size_t>(n_boot));
    SampleSet ra = a, rb = b;
    for (int k = 0; k < n_boot; ++k) {
        for (size_t i = 0; i < a.values.size(); ++i) {
            ra.values[i] = a.values[size_t(rng.next_u64() % a.values.size())];
        }
        for (size_t i = 0; i < b.values.size(); ++i) {
            rb.values[i] = b.values[size_t(rng.next_u64() % b.values.size())];
        }
        boots[size_t(k)] = metric(ra, rb);
    }
    std::sort(boots.begin(), boots.end());
    out.ci_lo = boots[size_t(0.025 * (n_boot - 1))];
    out.ci_hi = boots[size_t(0.975 * (n_boot - 1))];
    return out;
}

/// Quadrature of one weak observation <u_eps(t), phi> over a start
/// grid: sum_i u_i phi(x_i) cell. All u_i must come from trajectories
/// sharing ONE field realization; variance across realizations is the
/// caller's reduction.
inline double weak_average(const std::vector<double>& u_values,
                           const std::vector<double>& phi_values,
                           double cell_volume) {
    if (u_values.size() != phi_values.size() || u_values.empty()) {
        throw ValidationError("weak_average: mismatched grids");
    }
    double acc = 0.0;
    for (size_t i = 0; i < u_values.size(); ++i) {
        acc += u_values[i] * phi_values[i];
    }
    return acc * cell_volume;
}

/// Ladder of a law-convergence metric along decreasing epsilon. The
/// trend test allows one confidence-interval overlap violation: strict
/// monotonicity of a noisy estimator is not a sound requirement.
struct ConvergenceLadder {
    std::vector<double> epsilons;  // strictly decreasing
    std::vector<MetricWithCi> metrics;

    void validate() const {
        if (epsilons.size() != metrics.size()) {
            throw ValidationError("ConvergenceLadder: size mismatch");
        }
        for (size_t i = 1; i < epsilons.size(); ++i) {
            if (!(epsilons[i] < epsilons[i - 1])) {
                throw ValidationError(
                    "ConvergenceLadder: epsilons must strictly decrease");
            }
        }
    }

    /// Rung i+1 is in trend if its value does not exceed rung i, or if
    /// the two confidence intervals overlap.
    bool monotone_trend(int allowed_violations = 1) const {
        validate();
        int violations = 0;
        for (size_t i = 1; i < metrics.size(); ++i) {
            const bool decreasing = metrics[i].value <= metrics[i - 1].value;
            const bool overlap = metrics[i].ci_lo <= metrics[i - 1].ci_hi &&
                                 metrics[i - 1].ci_lo <= metrics[i].ci_hi;
            if (!decreasing && !overlap) {
                ++violations;
            }
        }
        return violations <= allowed_violations;
    }
};

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double variance_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) {
        acc += (x - m) * (x - m);
    }
    return acc / double(v.size() - 1);
}

}  // namespace homlab
