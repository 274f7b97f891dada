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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/errors.hpp"
#include "homlab/green_kubo.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct ResultRow {
    std::string label;      // epsilon value or "limit"
    std::string statistic;  // metric name
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    long n = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    void add(const std::string& label, const std::string& statistic,
             double value, double ci_lo = 0.0, double ci_hi = 0.0,
             long n = 0) {
        rows.push_back({label, statistic, value, ci_lo, ci_hi, n});
    }
};

namespace iodetail {
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}
}  // namespace iodetail

inline std::string metrics_csv(const ResultTable& table) {
    std::ostringstream out;
    out << "epsilon,statistic,value,ci_lo,ci_hi,n\n";
    for (const ResultRow& r : table.rows) {
        out << r.label << ',' << r.statistic << ',' << iodetail::fmt(r.value)
            << ',' << iodetail::fmt(r.ci_lo) << ',' << iodetail::fmt(r.ci_hi)
            << ',' << r.n << '\n';
    }
    return out.str();
}

inline std::string samples_csv(const SampleSet& samples) {
    std::ostringstream out;
    out << "path_id,u\n";
    for (size_t i = 0; i < samples.values.size(); ++i) {
        out << i << ',' << iodetail::fmt(samples.values[i]) << '\n';
    }
    return out.str();
}

inline std::string correlators_csv(const CorrelatorTable& table) {
    const int d = table.dim();
    const int M = table.num_functionals();
    std::ostringstream out;
    out << "t";
    for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q) out << ",vv_" << p + 1 << q + 1;
    for (int p = 0; p < d; ++p)
        for (int m = 0; m < M; ++m) out << ",vphi_" << p + 1 << m + 1;
    for (int m = 0; m < M; ++m)
        for (int p = 0; p < d; ++p) out << ",phiv_" << m + 1 << p + 1;
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < M; ++n) out << ",phiphi_" << m + 1 << n + 1;
    out << '\n';
    for (size_t l = 0; l < table.time_grid.size(); ++l) {
        out << iodetail::fmt(table.time_grid[l]);
        for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q)
                out << ',' << iodetail::fmt(table.C_vv[l](p, q));
        for (int p = 0; p < d; ++p)
            for (int m = 0; m < M; ++m)
                out << ',' << iodetail::fmt(table.C_vPhi[l](p, m));
        for (int m = 0; m < M; ++m)
            for (int p = 0; p < d; ++p)
                out << ',' << iodetail::fmt(table.C_Phiv[l](m, p));
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < M; ++n)
                out << ',' << iodetail::fmt(table.C_PhiPhi[l](m, n));
        out << '\n';
    }
    return out.str();
}

inline std::string trajectory_csv(const TrajectoryRecord& rec) {
    std::ostringstream out;
    out << "s";
    const int d = rec.positions.empty() ? 0 : int(rec.positions[0].size());
    for (int i = 0; i < d; ++i) {
        out << ",x" << i + 1;
    }
    if (!rec.u_values.empty()) out << ",u";
    if (!rec.xi_values.empty()) out << ",xi";
    out << '\n';
    for (size_t i = 0; i < rec.times.size(); ++i) {
        out << iodetail::fmt(rec.times[i]);
        for (int c = 0; c < d; ++c) {
            out << ',' << iodetail::fmt(rec.positions[i][c]);
        }
        if (!rec.u_values.empty()) {
            out << ',' << iodetail::fmt(rec.u_values[i]);
        }
        if (!rec.xi_values.empty()) {
            out << ',' << iodetail::fmt(rec.xi_values[i]);
        }
        out << '\n';
    }
    return out.str();
}

namespace iodetail {
inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (long i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (long j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const long rows = long(j.size());
    const long cols = rows > 0 ? long(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long c = 0; c < cols; ++c) {
            m(i, c) = j.at(size_t(i)).at(size_t(c)).get<double>();
        }
    }
    return m;
}
}  // namespace iodetail

inline nlohmann::json coefficients_to_json(const HomogenizedCoefficients& hc,
                                           const std::string& hash) {
    using iodetail::matrix_to_json;
    nlohmann::json j;
    j["A"] = matrix_to_json(hc.A);
    j["S"] = matrix_to_json(hc.S);
    j["lambda"] = matrix_to_json(hc.lambda);
    j["mu"] = matrix_to_json(hc.mu);
    j["theta_phi"] = matrix_to_json(hc.theta_phi);
    j["kappa_v"] = matrix_to_json(hc.kappa_v);
    j["kappa0"] = matrix_to_json(hc.kappa0);
    j["std_errors"] = {{"A", matrix_to_json(hc.se_A)},
                       {"lambda", matrix_to_json(hc.se_lambda)},
                       {"kappa_v", matrix_to_json(hc.se_kappa_v)},
                       {"kappa0", matrix_to_json(hc.se_kappa0)}};
    j["meta"] = {{"T_GK", hc.T_GK},
                 {"n_paths", hc.n_paths},
                 {"seed", hc.seed},
                 {"dim", hc.dim},
                 {"num_terms", hc.num_terms},
                 {"degenerate", hc.degenerate},
                 {"content_hash", hash}};
    return j;
}

inline HomogenizedCoefficients coefficients_from_json(const nlohmann::json& j) {
    using iodetail::matrix_from_json;
    HomogenizedCoefficients hc;
    hc.A = matrix_from_json(j.at("A"));
    hc.S = matrix_from_json(j.at("S"));
    hc.lambda = matrix_from_json(j.at("lambda"));
    hc.mu = matrix_from_json(j.at("mu"));
    hc.theta_phi = matrix_from_json(j.at("theta_phi"));
    hc.kappa_v = matrix_from_json(j.at("kappa_v"));
    hc.kappa0 = matrix_from_json(j.at("kappa0"));
    const auto& se = j.at("std_errors");
    hc.se_A = matrix_from_json(se.at("A"));
    hc.se_lambda = matrix_from_json(se.at("lambda"));
    hc.se_kappa_v = matrix_from_json(se.at("kappa_v"));
    hc.se_kappa0 = matrix_from_json(se.at("kappa0"));
    const auto& meta = j.at("meta");
    hc.T_GK = meta.at("T_GK").get<double>();
    hc.n_paths = meta.at("n_paths").get<long>();
    hc.seed = meta.at("seed").get<uint64_t>();
    hc.dim = meta.at("dim").get<int>();
    hc.num_terms = meta.at("num_terms").get<int>();
    hc.degenerate = meta.at("degenerate").get<std::vector<int>>();
    rebuild_square_root(hc);
    return hc;
}

inline void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory '" + dir + "': " + ec.message());
    }
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << content;
    if (!out) {
        throw IoError("write failure on '" + path + "'");
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace homlab
