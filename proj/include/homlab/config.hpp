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
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/bump.hpp"
#include "homlab/errors.hpp"
#include "homlab/nonlinearity.hpp"
#include "homlab/spectral_field.hpp"

namespace homlab {

using json = nlohmann::json;

namespace cfgdetail {

inline const json& require(const json& j, const std::string& key,
                           const std::string& path) {
    if (!j.contains(key)) {
        throw ValidationError(path + key + ": missing required field");
    }
    return j.at(key);
}

inline double get_number(const json& j, const std::string& key,
                         const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number()) {
        throw ValidationError(path + key + ": expected a number");
    }
    return v.get<double>();
}

inline double get_number_or(const json& j, const std::string& key,
                            const std::string& path, double fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_number()) {
        throw ValidationError(path + key + ": expected a number");
    }
    return j.at(key).get<double>();
}

inline long get_integer(const json& j, const std::string& key,
                        const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number_integer()) {
        throw ValidationError(path + key + ": expected an integer");
    }
    return v.get<long>();
}

inline long get_integer_or(const json& j, const std::string& key,
                           const std::string& path, long fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_number_integer()) {
        throw ValidationError(path + key + ": expected an integer");
    }
    return j.at(key).get<long>();
}

inline std::string get_string(const json& j, const std::string& key,
                              const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_string()) {
        throw ValidationError(path + key + ": expected a string");
    }
    return v.get<std::string>();
}

inline Eigen::VectorXd get_vector(const json& j, const std::string& key,
                                  const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_array() || v.empty()) {
        throw ValidationError(path + key + ": expected a non-empty array");
    }
    Eigen::VectorXd out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            throw ValidationError(path + key + "[" + std::to_string(i) +
                                  "]: expected a number");
        }
        out[long(i)] = v[i].get<double>();
    }
    return out;
}

}  // namespace cfgdetail

inline SpectralMeasure parse_measure(const json& j,
                                     const std::string& path = "measure.") {
    using namespace cfgdetail;
    if (j.contains("preset")) {
        const std::string preset = get_string(j, "preset", path);
        if (preset == "shear") {
            const double kappa = get_number_or(j, "kappa", path, 1.0);
            const double sigma = get_number_or(j, "sigma", path, 1.0);
            const double alpha = get_number_or(j, "alpha", path, 1.0);
            const int dim = int(get_integer_or(j, "dim", path, 2));
            return SpectralMeasure::shear(kappa, sigma, alpha, dim);
        }
        if (preset == "isotropic-shell") {
            const int num_modes = int(get_integer_or(j, "num_modes", path, 12));
            const double K0 = get_number_or(j, "K0", path, 2.0);
            const double energy = get_number_or(j, "energy", path, 1.0);
            const double alpha = get_number_or(j, "alpha", path, 1.0);
            auto profile = SpectralMeasure::AlphaProfile::Constant;
            double A_star = alpha;
            if (j.contains("alpha_profile")) {
                const std::string p = get_string(j, "alpha_profile", path);
                if (p == "linear") {
                    profile = SpectralMeasure::AlphaProfile::Linear;
                    A_star = get_number(j, "A_star", path);
                } else if (p != "constant") {
                    throw ValidationError(path +
                                          "alpha_profile: unknown profile '" +
                                          p + "'");
                }
            }
            const uint64_t mode_seed =
                uint64_t(get_integer_or(j, "mode_seed", path, 9001));
            return SpectralMeasure::isotropic_shell(num_modes, K0, energy,
                                                    alpha, profile, A_star,
                                                    mode_seed);
        }
        throw ValidationError(path + "preset: unknown preset '" + preset + "'");
    }
    const int dim = int(get_integer(j, "dim", path));
    const json& modes_json = require(j, "modes", path);
    if (!modes_json.is_array() || modes_json.empty()) {
        throw ValidationError(path + "modes: expected a non-empty array");
    }
    std::vector<SpectralMode> modes;
    for (size_t i = 0; i < modes_json.size(); ++i) {
        const std::string mpath = path + "modes[" + std::to_string(i) + "].";
        SpectralMode mode;
        mode.k = get_vector(modes_json[i], "k", mpath);
        mode.sigma = get_number(modes_json[i], "sigma", mpath);
        mode.alpha = get_number(modes_json[i], "alpha", mpath);
        modes.push_back(std::move(mode));
    }
    return SpectralMeasure(dim, std::move(modes));
}

inline SmoothCoefficient parse_coefficient(const json& j, int dim,
                                           const std::string& path) {
    using namespace cfgdetail;
    const std::string id = get_string(j, "id", path);
    if (id == "const") {
        return SmoothCoefficient::constant(get_number(j, "c", path));
    }
    if (id == "wave") {
        const double amp = get_number(j, "amp", path);
        Eigen::VectorXd kx;
        if (j.contains("kx")) {
            kx = get_vector(j, "kx", path);
            if (kx.size() != dim) {
                throw ValidationError(path + "kx: dimension mismatch");
            }
        }
        return SmoothCoefficient::wave(amp, kx,
                                       get_number_or(j, "ku", path, 0.0),
                                       get_number_or(j, "phase", path, 0.0),
                                       get_number_or(j, "offset", path, 0.0));
    }
    if (id == "bump") {
        Eigen::VectorXd cx = get_vector(j, "center_x", path);
        if (cx.size() != dim) {
            throw ValidationError(path + "center_x: dimension mismatch");
        }
        return SmoothCoefficient::bump(get_number(j, "amp", path),
                                       std::move(cx),
                                       get_number(j, "width_x", path),
                                       get_number_or(j, "center_u", path, 0.0),
                                       get_number_or(j, "width_u", path, 0.0));
    }
    throw ValidationError(path + "id: unknown expression '" + id + "'");
}

/// Axis indices in config files are 1-based (p = 2 is the second field
/// component); internally they are 0-based.
inline ChaosFunctional parse_functional(const json& j, int dim,
                                        const std::string& path) {
    using namespace cfgdetail;
    const std::string kind = get_string(j, "kind", path);
    auto axis = [&](const char* key) {
        const long p = get_integer(j, key, path);
        if (p < 1 || p > dim) {
            throw ValidationError(path + key + ": axis must be in [1, " +
                                  std::to_string(dim) + "]");
        }
        return int(p - 1);
    };
    if (kind == "constant") {
        return ChaosFunctional::constant();
    }
    if (kind == "component") {
        return ChaosFunctional::component(axis("p"));
    }
    if (kind == "quadratic") {
        return ChaosFunctional::centered_quadratic(axis("p"), axis("q"));
    }
    throw ValidationError(path + "kind: unknown functional '" + kind + "'");
}

inline NonlinearitySpec parse_nonlinearity(const json& j, int dim,
                                           const std::string& path = "f") {
    using namespace cfgdetail;
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        if (name == "demo-mean") {
            return demo_mean(dim);
        }
        if (name == "demo-zero") {
            return demo_zero(dim);
        }
        if (name == "demo-zero-u") {
            return demo_zero_u(dim);
        }
        throw ValidationError(path + ": unknown built-in spec '" + name + "'");
    }
    if (!j.is_array() || j.empty()) {
        throw ValidationError(path + ": expected a non-empty array of terms");
    }
    std::vector<NonlinearityTerm> terms;
    for (size_t i = 0; i < j.size(); ++i) {
        const std::string tpath = path + "[" + std::to_string(i) + "].";
        NonlinearityTerm term{
            parse_coefficient(require(j[i], "g", tpath), dim, tpath + "g."),
            parse_functional(require(j[i], "phi", tpath), dim,
                             tpath + "phi.")};
        terms.push_back(std::move(term));
    }
    return NonlinearitySpec(std::move(terms), dim);
}

enum class Experiment {
    FieldCheck,
    Diffusivity,
    Coefficients,
    Linear,
    TwoPoint,
    WeakAverage,
    SemilinearMean,
    SemilinearZero,
};

inline Experiment parse_experiment_name(const std::string& name) {
    if (name == "field-check") return Experiment::FieldCheck;
    if (name == "diffusivity") return Experiment::Diffusivity;
    if (name == "coefficients") return Experiment::Coefficients;
    if (name == "linear") return Experiment::Linear;
    if (name == "two-point") return Experiment::TwoPoint;
    if (name == "weak-average") return Experiment::WeakAverage;
    if (name == "semilinear-mean") return Experiment::SemilinearMean;
    if (name == "semilinear-zero") return Experiment::SemilinearZero;
    throw ValidationError("experiment: unknown experiment '" + name + "'");
}

inline std::string experiment_name(Experiment e) {
    switch (e) {
    case Experiment::FieldCheck: return "field-check";
    case Experiment::Diffusivity: return "diffusivity";
    case Experiment::Coefficients: return "coefficients";
    case Experiment::Linear: return "linear";
    case Experiment::TwoPoint: return "two-point";
    case Experiment::WeakAverage: return "weak-average";
    case Experiment::SemilinearMean: return "semilinear-mean";
    case Experiment::SemilinearZero: return "semilinear-zero";
    }
    return "?";
}

/// Numeric overrides; zero values request the built-in defaults.
struct Numerics {
    double dtau = 0.0;        // fast-time step (0 = automatic stable step)
    int n_steps = 2048;       // limit-SDE Euler steps
    int path_steps = 512;     // integral-equation path grid
    double T_GK = 10.0;       // correlator truncation horizon
    long gk_paths = 2000;     // paths for correlator estimation
    int u_grid_points = 41;
    double u_grid_pad = 1.0;  // grid spans [-2|u0| - pad, 2|u0| + pad]
    int out_stride = 16;
    int weak_grid_points = 5;  // per axis
    double weak_grid_halfwidth = 1.0;
    std::optional<BumpFunction> phi;  // weak-average weight (normalized)
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Linear;
    json measure_json;
    std::optional<json> f_json;
    std::optional<BumpFunction> u0;
    double t = 0.0;
    double T = 1.0;
    Eigen::VectorXd x;
    Eigen::VectorXd x2;  // two-point only
    std::vector<double> epsilons;
    long n_paths = 1000;
    uint64_t seed = 0;
    std::string output_dir = "out";
    Numerics numerics;
    json raw;  // echo for the manifest

    SpectralMeasure make_measure() const { return parse_measure(measure_json); }

    bool has_f() const { return f_json.has_value(); }

    NonlinearitySpec make_f(int dim) const {
        if (!f_json) {
            return NonlinearitySpec();
        }
        return parse_nonlinearity(*f_json, dim);
    }
};

inline ExperimentConfig parse_config(const json& j) {
    using namespace cfgdetail;
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.experiment = parse_experiment_name(get_string(j, "experiment", ""));
    cfg.measure_json = require(j, "measure", "");
    const SpectralMeasure measure = parse_measure(cfg.measure_json);
    const int dim = measure.dim();

    const bool needs_samples = cfg.experiment == Experiment::Linear ||
                               cfg.experiment == Experiment::TwoPoint ||
                               cfg.experiment == Experiment::WeakAverage ||
                               cfg.experiment == Experiment::SemilinearMean ||
                               cfg.experiment == Experiment::SemilinearZero;

    if (j.contains("f")) {
        if (cfg.experiment == Experiment::Linear ||
            cfg.experiment == Experiment::TwoPoint ||
            cfg.experiment == Experiment::WeakAverage ||
            cfg.experiment == Experiment::FieldCheck ||
            cfg.experiment == Experiment::Diffusivity) {
            throw ValidationError(
                "f: not allowed for the " +
                experiment_name(cfg.experiment) +
                " experiment (it solves the reaction-free problem)");
        }
        cfg.f_json = j.at("f");
        const NonlinearitySpec spec = parse_nonlinearity(*cfg.f_json, dim);
        if (cfg.experiment == Experiment::SemilinearZero && !spec.centered()) {
            throw ValidationError(
                "f: semilinear-zero requires a centered reaction "
                "(no constant-functional term with nonzero coefficient)");
        }
        if (cfg.experiment == Experiment::SemilinearMean && spec.centered()) {
            throw ValidationError(
                "f: semilinear-mean requires a nonzero mean part; "
                "use semilinear-zero for centered reactions");
        }
    } else if (cfg.experiment == Experiment::SemilinearMean ||
               cfg.experiment == Experiment::SemilinearZero) {
        throw ValidationError("f: required for semilinear experiments");
    }

    if (j.contains("u0")) {
        const json& u0j = j.at("u0");
        Eigen::VectorXd center = get_vector(u0j, "center", "u0.");
        if (center.size() != dim) {
            throw ValidationError("u0.center: dimension mismatch with measure");
        }
        cfg.u0 = BumpFunction(std::move(center),
                              get_number(u0j, "radius", "u0."),
                              get_number(u0j, "height", "u0."));
    } else if (needs_samples) {
        throw ValidationError("u0: required for this experiment");
    }

    cfg.t = get_number_or(j, "t", "", 0.0);
    cfg.T = get_number_or(j, "T", "", 1.0);
    if (!(cfg.T > cfg.t)) {
        throw ValidationError("T: must exceed t");
    }

    if (j.contains("x")) {
        cfg.x = get_vector(j, "x", "");
        if (cfg.x.size() != dim) {
            throw ValidationError("x: dimension mismatch with measure");
        }
    } else {
        cfg.x = Eigen::VectorXd::Zero(dim);
    }

    if (cfg.experiment == Experiment::TwoPoint) {
        cfg.x2 = get_vector(j, "x2", "");
        if (cfg.x2.size() != dim) {
            throw ValidationError("x2: dimension mismatch with measure");
        }
        if ((cfg.x2 - cfg.x).norm() < 1e-12) {
            throw ValidationError(
                "x2: two-point starts must be mutually distinct");
        }
    }

    if (needs_samples || cfg.experiment == Experiment::Diffusivity) {
        const json& eps = require(j, "epsilons", "");
        if (!eps.is_array() || eps.empty()) {
            throw ValidationError("epsilons: expected a non-empty array");
        }
        for (size_t i = 0; i < eps.size(); ++i) {
            if (!eps[i].is_number()) {
                throw ValidationError("epsilons[" + std::to_string(i) +
                                      "]: expected a number");
            }
            const double e = eps[i].get<double>();
            if (!(e > 0.0) || e > 1.0) {
                throw ValidationError("epsilons[" + std::to_string(i) +
                                      "]: must lie in (0, 1]");
            }
            if (i > 0 && !(e < cfg.epsilons.back())) {
                throw ValidationError("epsilons[" + std::to_string(i) +
                                      "]: must be strictly decreasing");
            }
            cfg.epsilons.push_back(e);
        }
    }

    cfg.n_paths = get_integer_or(j, "n_paths", "", 1000);
    if (cfg.n_paths < 100) {
        throw ValidationError("n_paths: must be >= 100");
    }
    cfg.seed = uint64_t(get_integer_or(j, "seed", "", 0));
    if (j.contains("output_dir")) {
        cfg.output_dir = get_string(j, "output_dir", "");
    }

    if (j.contains("numerics")) {
        const json& nj = j.at("numerics");
        Numerics& n = cfg.numerics;
        n.dtau = get_number_or(nj, "dtau", "numerics.", 0.0);
        n.n_steps = int(get_integer_or(nj, "n_steps", "numerics.", 2048));
        n.path_steps = int(get_integer_or(nj, "path_steps", "numerics.", 512));
        n.T_GK = get_number_or(nj, "T_GK", "numerics.", 10.0);
        n.gk_paths = get_integer_or(nj, "gk_paths", "numerics.", 2000);
        n.u_grid_points =
            int(get_integer_or(nj, "u_grid_points", "numerics.", 41));
        n.u_grid_pad = get_number_or(nj, "u_grid_pad", "numerics.", 1.0);
        n.out_stride = int(get_integer_or(nj, "out_stride", "numerics.", 16));
        n.weak_grid_points =
            int(get_integer_or(nj, "weak_grid_points", "numerics.", 5));
        n.weak_grid_halfwidth =
            get_number_or(nj, "weak_grid_halfwidth", "numerics.", 1.0);
        if (nj.contains("phi")) {
            const json& pj = nj.at("phi");
            Eigen::VectorXd c = get_vector(pj, "center", "numerics.phi.");
            if (c.size() != dim) {
                throw ValidationError("numerics.phi.center: dimension mismatch");
            }
            n.phi = BumpFunction(std::move(c),
                                 get_number(pj, "radius", "numerics.phi."),
                                 1.0);
        }
        if (n.n_steps < 2 || n.path_steps < 2 || n.u_grid_points < 3) {
            throw ValidationError("numerics: grid sizes too small");
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: JSON parse failure: ") +
                              e.what());
    }
    return parse_config(j);
}

/// FNV-1a content hash of the canonical config text, for traceability
/// of outputs back to their exact configuration.
inline std::string content_hash(const std::string& text) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return std::string(buf);
}

}  // namespace homlab
