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
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "homlab/config.hpp"
#include "homlab/green_kubo.hpp"
#include "homlab/io.hpp"
#include "homlab/macroscale.hpp"
#include "homlab/microscale.hpp"
#include "homlab/parallel.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct RunOptions {
    int threads = 1;
    std::string out_override;  // empty keeps the config's output_dir
    std::optional<uint64_t> seed_override;
    bool write_files = true;
};

/// Stream roles. A trajectory stream is (master_seed, role, eps_index,
/// trajectory_index); roles rather than experiment names so that
/// reduction identities hold exactly: the reaction-free semilinear
/// pipeline replays the very same field draws as the linear pipeline.
namespace streams {
constexpr uint64_t kMicro = 1;
constexpr uint64_t kLimit = 2;
constexpr uint64_t kLimitSelf = 3;
constexpr uint64_t kCoefficients = 4;
constexpr uint64_t kFieldCheck = 5;
constexpr uint64_t kEpsLimit = 1000000;  // eps_index slot for limit samples
}  // namespace streams

struct RunArtifacts {
    ResultTable table;
    std::vector<SampleSet> sample_sets;  // written as samples_<label>.csv
    std::optional<nlohmann::json> coefficients;
    std::optional<CorrelatorTable> correlators;
    std::vector<std::string> written_files;
};

namespace pipedetail {

struct Lab {
    const ExperimentConfig& cfg;
    SpectralMeasure measure;
    NonlinearitySpec spec;
    int threads;
    uint64_t seed;

    Lab(const ExperimentConfig& c, const RunOptions& opt)
        : cfg(c),
          measure(c.make_measure()),
          spec(c.make_f(measure.dim())),
          threads(opt.threads),
          seed(opt.seed_override.value_or(c.seed)) {}

    MicroConfig micro_for(double eps) const {
        MicroConfig mc;
        mc.epsilon = eps;
        mc.dtau = cfg.numerics.dtau;
        mc.t_start = cfg.t;
        mc.T = cfg.T;
        mc.out_stride = cfg.numerics.out_stride;
        return mc;
    }

    std::vector<double> u_grid() const {
        const double u_max = cfg.u0 ? cfg.u0->sup_norm() : 1.0;
        const double lo = -2.0 * u_max - cfg.numerics.u_grid_pad;
        const double hi = 2.0 * u_max + cfg.numerics.u_grid_pad;
        const int n = cfg.numerics.u_grid_points;
        std::vector<double> grid(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            grid[size_t(i)] = lo + (hi - lo) * i / (n - 1);
        }
        return grid;
    }

    std::function<double(const Eigen::VectorXd&)> u0_fn() const {
        const BumpFunction u0 = *cfg.u0;
        return [u0](const Eigen::VectorXd& x) { return u0(x); };
    }
};

inline std::string eps_label(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", eps);
    return buf;
}

template <class Fn>
std::vector<double> sample_parallel(long n, int threads, Fn&& fn) {
    std::vector<double> out(static_cast<size_t>(n));
    parallel_for(int(n), threads, [&](int i) { out[size_t(i)] = fn(i); });
    return out;
}

/// Gauss-Hermite nodes/weights for E[h(Z)], Z standard normal, via the
/// Golub-Welsch eigenproblem of the Hermite recurrence.
inline void gauss_hermite(int n, std::vector<double>* nodes,
                          std::vector<double>* weights) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(i / 2.0);
        J(i - 1, i) = b;
        J(i, i - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    nodes->resize(size_t(n));
    weights->resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        // Physicists' nodes t relate to the standard normal by z = sqrt(2) t.
        (*nodes)[size_t(i)] = std::sqrt(2.0) * eig.eigenvalues()[i];
        const double v0 = eig.eigenvectors()(0, i);
        (*weights)[size_t(i)] = v0 * v0;  // already sums to 1
    }
}

/// E[u0(mean + G Z)] for Z standard normal, with G the square root of a
/// PSD covariance; degenerate directions are frozen. Tensor-product
/// quadrature over the non-degenerate eigen-directions.
inline double gaussian_expectation(
    const std::function<double(const Eigen::VectorXd&)>& h,
    const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int n_nodes = 32) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double tol = 1e-12 * std::max(1.0, cov.trace());
    std::vector<int> active;
    for (int i = 0; i < cov.rows(); ++i) {
        if (eig.eigenvalues()[i] > tol) {
            active.push_back(i);
        }
    }
    std::vector<double> nodes, weights;
    gauss_hermite(n_nodes, &nodes, &weights);
    const int k = int(active.size());
    if (k == 0) {
        return h(mean);
    }
    double acc = 0.0;
    std::vector<int> idx(size_t(k), 0);
    Eigen::VectorXd x(mean.size());
    while (true) {
        double w = 1.0;
        x = mean;
        for (int a = 0; a < k; ++a) {
            const int i = idx[size_t(a)];
            w *= weights[size_t(i)];
            x += std::sqrt(eig.eigenvalues()[active[size_t(a)]]) *
                 nodes[size_t(i)] * eig.eigenvectors().col(active[size_t(a)]);
        }
        acc += w * h(x);
        int a = 0;
        while (a < k && ++idx[size_t(a)] == n_nodes) {
            idx[size_t(a)] = 0;
            ++a;
        }
        if (a == k) {
            break;
        }
    }
    return acc;
}

struct CoeffBundle {
    HomogenizedCoefficients hc;
    nlohmann::json j;
    bool loaded = false;
};

inline std::string coefficients_key(const Lab& lab) {
    nlohmann::json key;
    key["measure"] = lab.cfg.measure_json;
    key["f"] = lab.cfg.f_json ? *lab.cfg.f_json : nlohmann::json();
    key["T_GK"] = lab.cfg.numerics.T_GK;
    key["gk_paths"] = lab.cfg.numerics.gk_paths;
    key["dtau"] = lab.cfg.numerics.dtau;
    key["seed"] = lab.seed;
    return content_hash(key.dump());
}

/// Loads output_dir/coefficients.json when it matches the current
/// (measure, reaction, estimation parameters, seed); otherwise runs the
/// correlation-integral estimation and assembles a fresh table.
inline CoeffBundle ensure_coefficients(const Lab& lab,
                                       const std::string& out_dir) {
    const std::string hash = coefficients_key(lab);
    const std::string path = out_dir + "/coefficients.json";
    if (!out_dir.empty() && std::filesystem::exists(path)) {
        try {
            nlohmann::json j = nlohmann::json::parse(read_text_file(path));
            if (j.at("meta").at("content_hash").get<std::string>() == hash) {
                CoeffBundle bundle{coefficients_from_json(j), j, true};
                return bundle;
            }
        } catch (...) {
            // Unreadable or stale cache: recompute below.
        }
    }
    std::vector<ChaosFunctional> functionals;
    for (int idx : lab.spec.centered_term_indices()) {
        functionals.push_back(lab.spec.terms()[size_t(idx)].phi);
    }
    CorrelatorTable table = estimate_correlators(
        lab.measure, functionals, lab.cfg.numerics.gk_paths,
        lab.cfg.numerics.T_GK, lab.cfg.numerics.dtau, lab.seed,
        streams::kCoefficients, lab.threads);
    HomogenizedCoefficients hc = assemble_coefficients(table);
    hc.seed = lab.seed;
    return CoeffBundle{hc, coefficients_to_json(hc, hash), false};
}

inline void append_two_sample_metrics(ResultTable* table, const SampleSet& a,
                                      const SampleSet& limit, uint64_t seed,
                                      size_t rung) {
    const auto ks_metric = [](const SampleSet& x, const SampleSet& y) {
        return ks_two_sample(x, y).statistic;
    };
    const auto w1_metric = [](const SampleSet& x, const SampleSet& y) {
        return wasserstein1(x, y);
    };
    const MetricWithCi ks = bootstrap_metric_ci(
        a, limit, ks_metric, 200, derive_stream(seed, 101, rung));
    const MetricWithCi w1 = bootstrap_metric_ci(
        a, limit, w1_metric, 200, derive_stream(seed, 102, rung));
    const double p = ks_two_sample(a, limit).p_value;
    table->add(a.label, "ks", ks.value, ks.ci_lo, ks.ci_hi,
               long(a.values.size()));
    table->add(a.label, "ks_p", p, 0.0, 0.0, long(a.values.size()));
    table->add(a.label, "w1", w1.value, w1.ci_lo, w1.ci_hi,
               long(a.values.size()));
}

/// Shared tail of the pointwise-law pipelines: metrics ladder for each
/// epsilon sample against the limit sample, plus the self-distance of
/// two independent limit samples as the attainable floor.
inline void pointwise_law_metrics(ResultTable* table,
                                  const std::vector<SampleSet>& eps_sets,
                                  const SampleSet& limit,
                                  const SampleSet& limit2, uint64_t seed) {
    for (size_t i = 0; i < eps_sets.size(); ++i) {
        append_two_sample_metrics(table, eps_sets[i], limit, seed, i);
    }
    const KsResult self = ks_two_sample(limit, limit2);
    table->add("limit", "ks_self", self.statistic, 0.0, 0.0,
               long(limit.values.size()));
}

// ---------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------

inline RunArtifacts pipeline_linear(const Lab& lab) {
    RunArtifacts art;
    const auto u0 = lab.u0_fn();
    std::vector<SampleSet> eps_sets;
    for (size_t ei = 0; ei < lab.cfg.epsilons.size(); ++ei) {
        const double eps = lab.cfg.epsilons[ei];
        const MicroConfig mc = lab.micro_for(eps);
        auto vals = sample_parallel(lab.cfg.n_paths, lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kMicro, ei, uint64_t(i));
            auto rec = simulate_characteristic(lab.measure, mc, lab.cfg.x, rng,
                                               uint64_t(i));
            return u0(rec.positions.back());
        });
        eps_sets.push_back(SampleSet{std::move(vals), eps_label(eps), lab.seed});
    }

    const CoeffBundle coeffs = ensure_coefficients(lab, lab.cfg.output_dir);
    auto limit_sample = [&](uint64_t role, const char* label) {
        auto vals = sample_parallel(lab.cfg.n_paths, lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, role, streams::kEpsLimit, uint64_t(i));
            LimitPath path =
                sample_effective_bm(coeffs.hc, lab.cfg.x, lab.cfg.t, lab.cfg.T,
                                    lab.cfg.numerics.n_steps, rng);
            return solve_linear_limit(u0, path);
        });
        return SampleSet{std::move(vals), label, lab.seed};
    };
    const SampleSet limit = limit_sample(streams::kLimit, "limit");
    const SampleSet limit2 = limit_sample(streams::kLimitSelf, "limit2");

    pointwise_law_metrics(&art.table, eps_sets, limit, limit2, lab.seed);
    for (auto& s : eps_sets) {
        art.sample_sets.push_back(std::move(s));
    }
    art.sample_sets.push_back(limit);
    art.coefficients = coeffs.j;
    return art;
}

inline RunArtifacts pipeline_two_point(const Lab& lab) {
    RunArtifacts art;
    const auto u0 = lab.u0_fn();
    for (size_t ei = 0; ei < lab.cfg.epsilons.size(); ++ei) {
        const double eps = lab.cfg.epsilons[ei];
        const MicroConfig mc = lab.micro_for(eps);
        std::vector<double> u_a(size_t(lab.cfg.n_paths));
        std::vector<double> u_b(size_t(lab.cfg.n_paths));
        parallel_for(int(lab.cfg.n_paths), lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kMicro, ei, uint64_t(i));
            auto recs = simulate_characteristics_shared(
                lab.measure, mc, {lab.cfg.x, lab.cfg.x2}, rng, uint64_t(i));
            u_a[size_t(i)] = u0(recs[0].positions.back());
            u_b[size_t(i)] = u0(recs[1].positions.back());
        });
        SampleSet sa{std::move(u_a), eps_label(eps) + "_x1", lab.seed};
        SampleSet sb{std::move(u_b), eps_label(eps) + "_x2", lab.seed};
        const CorrelationResult corr = correlation_ci(
            sa, sb, 2000, derive_stream(lab.seed, 103, ei));
        art.table.add(eps_label(eps), "corr", corr.corr, corr.ci_lo,
                      corr.ci_hi, lab.cfg.n_paths);
        art.sample_sets.push_back(std::move(sa));
        art.sample_sets.push_back(std::move(sb));
    }
    return art;
}

inline RunArtifacts pipeline_weak_average(const Lab& lab) {
    RunArtifacts art;
    const auto u0 = lab.u0_fn();
    const int G = lab.cfg.numerics.weak_grid_points;
    const double h = lab.cfg.numerics.weak_grid_halfwidth;
    const int d = lab.measure.dim();
    if (d != 2) {
        throw ValidationError("weak-average: implemented for dim = 2 grids");
    }
    if (G * G < 20) {
        std::cerr << "[homogenize-lab] warning: weak-average start grid has "
                  << G * G << " points (< 20); quadrature bias dominates\n";
    }
    const double spacing = G > 1 ? 2.0 * h / (G - 1) : 1.0;
    const double cell = spacing * spacing;
    BumpFunction phi = lab.cfg.numerics.phi.value_or(
        BumpFunction(lab.cfg.x, h, 1.0));
    const double norm = phi.integral();
    std::vector<Eigen::VectorXd> starts;
    std::vector<double> phi_vals;
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            Eigen::VectorXd p = lab.cfg.x;
            p[0] += -h + spacing * i;
            p[1] += -h + spacing * j;
            phi_vals.push_back(phi(p) / norm);
            starts.push_back(std::move(p));
        }
    }

    for (size_t ei = 0; ei < lab.cfg.epsilons.size(); ++ei) {
        const double eps = lab.cfg.epsilons[ei];
        const MicroConfig mc = lab.micro_for(eps);
        auto w_vals = sample_parallel(lab.cfg.n_paths, lab.threads, [&](int r) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kMicro, ei, uint64_t(r));
            auto recs = simulate_characteristics_shared(lab.measure, mc,
                                                        starts, rng,
                                                        uint64_t(r));
            std::vector<double> u_vals(starts.size());
            for (size_t k = 0; k < starts.size(); ++k) {
                u_vals[k] = u0(recs[k].positions.back());
            }
            return weak_average(u_vals, phi_vals, cell);
        });
        const double mean = mean_of(w_vals);
        const double var = variance_of(w_vals);
        const double se_mean = std::sqrt(var / double(w_vals.size()));
        const double se_var = var * std::sqrt(2.0 / double(w_vals.size() - 1));
        art.table.add(eps_label(eps), "weak_mean", mean, mean - 1.96 * se_mean,
                      mean + 1.96 * se_mean, long(w_vals.size()));
        art.table.add(eps_label(eps), "weak_var", var,
                      std::max(0.0, var - 1.96 * se_var), var + 1.96 * se_var,
                      long(w_vals.size()));
        art.sample_sets.push_back(
            SampleSet{std::move(w_vals), eps_label(eps), lab.seed});
    }

    // Deterministic limit of the weak observation: quadrature of
    // E[u0(x_i + beta_{T-t})] over the same start grid.
    const CoeffBundle coeffs = ensure_coefficients(lab, lab.cfg.output_dir);
    const Eigen::MatrixXd cov = coeffs.hc.A * (lab.cfg.T - lab.cfg.t);
    double limit_val = 0.0;
    for (size_t k = 0; k < starts.size(); ++k) {
        limit_val +=
            gaussian_expectation(u0, starts[k], cov) * phi_vals[k] * cell;
    }
    art.table.add("limit", "weak_mean", limit_val, limit_val, limit_val,
                  long(starts.size()));
    art.coefficients = coeffs.j;
    return art;
}

inline RunArtifacts pipeline_semilinear(const Lab& lab, int alpha_exponent) {
    RunArtifacts art;
    const auto u0 = lab.u0_fn();
    const std::vector<double> grid = lab.u_grid();

    std::vector<SampleSet> eps_sets;
    for (size_t ei = 0; ei < lab.cfg.epsilons.size(); ++ei) {
        const double eps = lab.cfg.epsilons[ei];
        const MicroConfig mc = lab.micro_for(eps);
        auto vals = sample_parallel(lab.cfg.n_paths, lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kMicro, ei, uint64_t(i));
            FlowTable flow =
                simulate_flow_map(lab.measure, mc, lab.spec, grid, lab.cfg.x,
                                  alpha_exponent, rng, uint64_t(i));
            return invert_flow(flow, u0(flow.x_final()));
        });
        eps_sets.push_back(SampleSet{std::move(vals), eps_label(eps), lab.seed});
    }

    const CoeffBundle coeffs = ensure_coefficients(lab, lab.cfg.output_dir);
    std::optional<LimitCoefficients> limit_coeffs;
    if (alpha_exponent == 1) {
        limit_coeffs.emplace(lab.spec, coeffs.hc);
    }
    auto limit_sample = [&](uint64_t role, const char* label) {
        auto vals = sample_parallel(lab.cfg.n_paths, lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, role, streams::kEpsLimit, uint64_t(i));
            if (alpha_exponent == 1) {
                LimitPath path = sample_effective_bm(
                    coeffs.hc, lab.cfg.x, lab.cfg.t, lab.cfg.T,
                    lab.cfg.numerics.n_steps, rng);
                LimitFlowTable flow = simulate_limit_flow(
                    *limit_coeffs, grid, path, lab.cfg.numerics.out_stride,
                    uint64_t(i));
                return invert_limit_flow(flow, u0, path);
            }
            LimitPath path = sample_effective_bm(
                coeffs.hc, lab.cfg.x, lab.cfg.t, lab.cfg.T,
                lab.cfg.numerics.path_steps, rng);
            return solve_integral_equation(lab.spec, path, u0);
        });
        return SampleSet{std::move(vals), label, lab.seed};
    };
    const SampleSet limit = limit_sample(streams::kLimit, "limit");
    const SampleSet limit2 = limit_sample(streams::kLimitSelf, "limit2");

    pointwise_law_metrics(&art.table, eps_sets, limit, limit2, lab.seed);
    for (auto& s : eps_sets) {
        art.sample_sets.push_back(std::move(s));
    }
    art.sample_sets.push_back(limit);
    art.coefficients = coeffs.j;
    return art;
}

inline RunArtifacts pipeline_diffusivity(const Lab& lab) {
    RunArtifacts art;
    const int d = lab.measure.dim();
    CorrelatorTable table = estimate_correlators(
        lab.measure, {}, lab.cfg.numerics.gk_paths, lab.cfg.numerics.T_GK,
        lab.cfg.numerics.dtau, lab.seed, streams::kCoefficients, lab.threads);
    const EffectiveDiffusivity ed = effective_diffusivity(table);
    for (int p = 0; p < d; ++p) {
        for (int q = p; q < d; ++q) {
            char name[32];
            std::snprintf(name, sizeof name, "A_%d%d_gk", p + 1, q + 1);
            art.table.add("0", name, ed.A(p, q),
                          ed.A(p, q) - 1.96 * ed.se(p, q),
                          ed.A(p, q) + 1.96 * ed.se(p, q), table.n_paths);
        }
    }

    for (size_t ei = 0; ei < lab.cfg.epsilons.size(); ++ei) {
        const double eps = lab.cfg.epsilons[ei];
        const MicroConfig mc = lab.micro_for(eps);
        std::vector<Eigen::VectorXd> ends(size_t(lab.cfg.n_paths));
        parallel_for(int(lab.cfg.n_paths), lab.threads, [&](int i) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kMicro, ei, uint64_t(i));
            auto rec = simulate_characteristic(lab.measure, mc, lab.cfg.x, rng,
                                               uint64_t(i));
            ends[size_t(i)] = rec.positions.back();
        });
        const double span = lab.cfg.T - lab.cfg.t;
        for (int p = 0; p < d; ++p) {
            std::vector<double> disp(ends.size());
            for (size_t i = 0; i < ends.size(); ++i) {
                disp[i] = ends[i][p] - lab.cfg.x[p];
            }
            const double slope = variance_of(disp) / span;
            const double se =
                slope * std::sqrt(2.0 / double(disp.size() - 1));
            char name[32];
            std::snprintf(name, sizeof name, "msd_slope_%d", p + 1);
            art.table.add(eps_label(eps), name, slope, slope - 1.96 * se,
                          slope + 1.96 * se, lab.cfg.n_paths);
        }
    }
    art.correlators = std::move(table);
    return art;
}

inline RunArtifacts pipeline_field_check(const Lab& lab) {
    RunArtifacts art;
    const int d = lab.measure.dim();
    const int n_div = 1000;
    std::vector<double> divs(static_cast<size_t>(n_div));
    parallel_for(n_div, lab.threads, [&](int i) {
        Philox4x32 rng =
            make_stream(lab.seed, streams::kFieldCheck, 0, uint64_t(i));
        FieldState state = sample_stationary(lab.measure, rng);
        Eigen::VectorXd x(d);
        for (int c = 0; c < d; ++c) {
            x[c] = 10.0 * (rng.uniform() - 0.5);
        }
        divs[size_t(i)] =
            std::abs(evaluate_gradient(lab.measure, state, x).trace());
    });
    art.table.add("0", "max_abs_divergence",
                  *std::max_element(divs.begin(), divs.end()), 0, 0, n_div);

    // Empirical space-time covariance against the closed form on a
    // 5 x 5 (t, x) grid; reports the largest |z| over grid and entries.
    const long N = lab.cfg.n_paths;
    const std::vector<double> t_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<Eigen::VectorXd> x_grid;
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(d);
    dir[0] = M_SQRT1_2;
    dir[1] = M_SQRT1_2;
    for (int r = 0; r < 5; ++r) {
        x_grid.push_back(dir * (0.5 * r));
    }
    const size_t cells = t_grid.size() * x_grid.size();
    struct Acc {
        std::vector<Eigen::MatrixXd> sum, sumsq;
    };
    const int chunk = detail::kReductionChunk;
    const int n_chunks = int((N + chunk - 1) / chunk);
    std::vector<Acc> accs(static_cast<size_t>(n_chunks));
    parallel_for(n_chunks, lab.threads, [&](int c) {
        Acc& acc = accs[size_t(c)];
        acc.sum.assign(cells, Eigen::MatrixXd::Zero(d, d));
        acc.sumsq.assign(cells, Eigen::MatrixXd::Zero(d, d));
        Eigen::VectorXd v0(d), vt(d);
        const long begin = long(c) * chunk;
        const long end = std::min<long>(begin + chunk, N);
        for (long i = begin; i < end; ++i) {
            Philox4x32 rng =
                make_stream(lab.seed, streams::kFieldCheck, 1, uint64_t(i));
            FieldState state = sample_stationary(lab.measure, rng);
            evaluate_into(lab.measure, state,
                          Eigen::VectorXd::Zero(d), v0);
            double t_now = 0.0;
            for (size_t ti = 0; ti < t_grid.size(); ++ti) {
                evolve(lab.measure, state, t_grid[ti] - t_now, rng);
                t_now = t_grid[ti];
                for (size_t xi = 0; xi < x_grid.size(); ++xi) {
                    evaluate_into(lab.measure, state, x_grid[xi], vt);
                    const size_t cell = ti * x_grid.size() + xi;
                    const Eigen::MatrixXd prod = vt * v0.transpose();
                    acc.sum[cell] += prod;
                    acc.sumsq[cell] += prod.cwiseProduct(prod);
                }
            }
        }
    });
    double max_z = 0.0;
    for (size_t cell = 0; cell < cells; ++cell) {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
        Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(d, d);
        for (int c = 0; c < n_chunks; ++c) {
            sum += accs[size_t(c)].sum[cell];
            sumsq += accs[size_t(c)].sumsq[cell];
        }
        const size_t ti = cell / x_grid.size();
        const size_t xi = cell % x_grid.size();
        const Eigen::MatrixXd mean = sum / double(N);
        const Eigen::MatrixXd se =
            ((sumsq / double(N) - mean.cwiseProduct(mean)).cwiseMax(0.0) /
             double(N))
                .cwiseSqrt();
        const Eigen::MatrixXd exact =
            lab.measure.covariance_exact(t_grid[ti], x_grid[xi]);
        for (int p = 0; p < d; ++p) {
            for (int q = 0; q < d; ++q) {
                const double denom = std::max(se(p, q), 1e-14);
                max_z = std::max(max_z,
                                 std::abs(mean(p, q) - exact(p, q)) / denom);
            }
        }
    }
    art.table.add("0", "cov_max_abs_z", max_z, 0, 0, N);
    return art;
}

inline RunArtifacts pipeline_coefficients(const Lab& lab) {
    RunArtifacts art;
    std::vector<ChaosFunctional> functionals;
    for (int idx : lab.spec.centered_term_indices()) {
        functionals.push_back(lab.spec.terms()[size_t(idx)].phi);
    }
    CorrelatorTable table = estimate_correlators(
        lab.measure, functionals, lab.cfg.numerics.gk_paths,
        lab.cfg.numerics.T_GK, lab.cfg.numerics.dtau, lab.seed,
        streams::kCoefficients, lab.threads);
    HomogenizedCoefficients hc = assemble_coefficients(table);
    hc.seed = lab.seed;
    const int d = hc.dim;
    for (int p = 0; p < d; ++p) {
        for (int q = p; q < d; ++q) {
            char name[32];
            std::snprintf(name, sizeof name, "A_%d%d", p + 1, q + 1);
            art.table.add("0", name, hc.A(p, q),
                          hc.A(p, q) - 1.96 * hc.se_A(p, q),
                          hc.A(p, q) + 1.96 * hc.se_A(p, q), hc.n_paths);
        }
    }
    for (int p = 0; p < d; ++p) {
        for (int mm = 0; mm < hc.num_terms; ++mm) {
            char name[32];
            std::snprintf(name, sizeof name, "lambda_%d%d", p + 1, mm + 1);
            art.table.add("0", name, hc.lambda(p, mm),
                          hc.lambda(p, mm) - 1.96 * hc.se_lambda(p, mm),
                          hc.lambda(p, mm) + 1.96 * hc.se_lambda(p, mm),
                          hc.n_paths);
        }
    }
    art.coefficients = coefficients_to_json(hc, coefficients_key(lab));
    art.correlators = std::move(table);
    return art;
}

}  // namespace pipedetail

/// Runs one declarative experiment: dispatch, deterministic parallel
/// Monte Carlo, CSV/JSON outputs. Any worker failure aborts the run;
/// files written by the failed run are removed before rethrowing.
inline RunArtifacts run_experiment(const ExperimentConfig& config,
                                   const RunOptions& options) {
    ExperimentConfig cfg = config;
    if (!options.out_override.empty()) {
        cfg.output_dir = options.out_override;
    }
    pipedetail::Lab lab(cfg, options);

    const auto t0 = std::chrono::steady_clock::now();
    RunArtifacts art;
    switch (cfg.experiment) {
    case Experiment::FieldCheck:
        art = pipedetail::pipeline_field_check(lab);
        break;
    case Experiment::Diffusivity:
        art = pipedetail::pipeline_diffusivity(lab);
        break;
    case Experiment::Coefficients:
        art = pipedetail::pipeline_coefficients(lab);
        break;
    case Experiment::Linear:
        art = pipedetail::pipeline_linear(lab);
        break;
    case Experiment::TwoPoint:
        art = pipedetail::pipeline_two_point(lab);
        break;
    case Experiment::WeakAverage:
        art = pipedetail::pipeline_weak_average(lab);
        break;
    case Experiment::SemilinearMean:
        art = pipedetail::pipeline_semilinear(lab, 0);
        break;
    case Experiment::SemilinearZero:
        art = pipedetail::pipeline_semilinear(lab, 1);
        break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();

    if (!options.write_files) {
        return art;
    }
    ensure_directory(cfg.output_dir);
    auto path_of = [&](const std::string& name) {
        return cfg.output_dir + "/" + name;
    };
    try {
        write_text_file(path_of("metrics.csv"), metrics_csv(art.table));
        art.written_files.push_back(path_of("metrics.csv"));
        for (const SampleSet& s : art.sample_sets) {
            const std::string name = "samples_" + s.label + ".csv";
            write_text_file(path_of(name), samples_csv(s));
            art.written_files.push_back(path_of(name));
        }
        if (art.coefficients) {
            write_text_file(path_of("coefficients.json"),
                            art.coefficients->dump(2) + "\n");
            art.written_files.push_back(path_of("coefficients.json"));
        }
        if (art.correlators) {
            write_text_file(path_of("correlators.csv"),
                            correlators_csv(*art.correlators));
            art.written_files.push_back(path_of("correlators.csv"));
        }
        nlohmann::json manifest;
        manifest["experiment"] = experiment_name(cfg.experiment);
        manifest["config"] = cfg.raw;
        manifest["config_hash"] = content_hash(cfg.raw.dump());
        manifest["seed"] = lab.seed;
        manifest["threads"] = options.threads;
        manifest["wall_ms"] = wall_ms;
        if (art.coefficients) {
            manifest["coefficients_file"] = "coefficients.json";
        }
        nlohmann::json files = nlohmann::json::array();
        for (const auto& f : art.written_files) {
            files.push_back(std::filesystem::path(f).filename().string());
        }
        manifest["outputs"] = files;
        write_text_file(path_of("manifest.json"), manifest.dump(2) + "\n");
        art.written_files.push_back(path_of("manifest.json"));
    } catch (...) {
        for (const auto& f : art.written_files) {
            std::error_code ec;
            std::filesystem::remove(f, ec);
        }
        throw;
    }
    return art;
}

}  // namespace homlab
