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

#include <cstdint>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "homlab/config.hpp"
#include "homlab/io.hpp"
#include "homlab/pipelines.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumericQuality = 3;
constexpr int kExitIo = 4;

homlab::ExperimentConfig load_config(const std::string& path) {
    return homlab::parse_config_string(homlab::read_text_file(path));
}

int run_command(const std::string& config_path, const std::string& out_dir,
                int threads, int64_t seed, bool seed_set,
                bool force_coefficients) {
    homlab::ExperimentConfig cfg = load_config(config_path);
    if (force_coefficients) {
        cfg.experiment = homlab::Experiment::Coefficients;
    }
    homlab::RunOptions opt;
    opt.threads = threads > 0 ? threads
                              : int(std::thread::hardware_concurrency());
    if (opt.threads < 1) {
        opt.threads = 1;
    }
    opt.out_override = out_dir;
    if (seed_set) {
        opt.seed_override = uint64_t(seed);
    }
    const homlab::RunArtifacts art = homlab::run_experiment(cfg, opt);
    std::cout << homlab::metrics_csv(art.table);
    std::cout << "wrote " << art.written_files.size() << " files to "
              << (out_dir.empty() ? cfg.output_dir : out_dir) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"homogenize-lab: Monte Carlo experiments for random "
                 "advection with oscillatory coefficients"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;
    int64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config file (JSON)")
            ->required();
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--threads", threads,
                        "worker threads (default: hardware)");
        cmd->add_option("--seed", seed, "master seed override")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* run = app.add_subcommand("run", "run the configured experiment");
    add_common(run);
    CLI::App* coeff = app.add_subcommand(
        "coefficients", "estimate homogenized coefficients only");
    add_common(coeff);
    CLI::App* validate =
        app.add_subcommand("validate", "parse and validate a config file");
    validate->add_option("config", config_path, "experiment config file (JSON)")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            homlab::ExperimentConfig cfg = load_config(config_path);
            std::cout << "ok: " << homlab::experiment_name(cfg.experiment)
                      << " experiment, seed " << cfg.seed << "\n";
            return 0;
        }
        if (coeff->parsed()) {
            return run_command(config_path, out_dir, threads, seed, seed_set,
                               true);
        }
        return run_command(config_path, out_dir, threads, seed, seed_set,
                           false);
    } catch (const homlab::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const homlab::NumericQualityError& e) {
        std::cerr << "numeric-quality error: " << e.what() << "\n";
        return kExitNumericQuality;
    } catch (const homlab::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
