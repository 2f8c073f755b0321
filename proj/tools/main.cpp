#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "relgan/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"relgan: a desk-scale relativistic GAN training laboratory"};
    app.require_subcommand(1);

    std::vector<std::string> config_paths;
    std::string out_dir;
    int jobs = 1;
    std::optional<std::uint64_t> seed_override;
    std::uint64_t seed_value = 0;
    auto* train = app.add_subcommand("train", "run configured experiments");
    train->add_option("--config", config_paths, "experiment file(s), key = value lines")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--out", out_dir, "output directory (overrides config and RELGAN_OUT)");
    train->add_option("--jobs", jobs, "run up to N configs concurrently")->default_val(1);
    auto* seed_opt = train->add_option("--seed", seed_value, "override the config seed");

    auto* gradcheck = app.add_subcommand("gradcheck", "oracle and finite-difference gradient suites");

    std::vector<double> reals, fakes;
    auto* losstable = app.add_subcommand("losstable", "probability and loss table for given critic values");
    losstable->add_option("--real", reals, "critic values on real data");
    losstable->add_option("--fake", fakes, "critic values on fake data");

    std::string samples_csv, dataset = "ring8";
    std::uint64_t metrics_seed = 1;
    auto* metrics = app.add_subcommand("metrics", "recompute metrics from a samples CSV");
    metrics->add_option("--samples", samples_csv, "samples CSV (x,y header)")->required();
    metrics->add_option("--dataset", dataset, "reference dataset name")->default_val("ring8");
    metrics->add_option("--seed", metrics_seed, "reference sampling seed")->default_val(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : relgan::cli::kExitConfig;
    }

    try {
        if (train->parsed()) {
            if (!seed_opt->empty()) seed_override = seed_value;
            return relgan::cli::cmd_train(config_paths, out_dir, jobs, seed_override, std::cout, std::cerr);
        }
        if (gradcheck->parsed()) return relgan::cli::cmd_gradcheck(std::cout);
        if (losstable->parsed()) return relgan::cli::cmd_losstable(reals, fakes, std::cout);
        if (metrics->parsed())
            return relgan::cli::cmd_metrics(samples_csv, dataset, metrics_seed, std::cout);
    } catch (const relgan::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return relgan::cli::kExitConfig;
    } catch (const relgan::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return relgan::cli::kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return relgan::cli::kExitConfig;
    }
    return relgan::cli::kExitConfig;
}
