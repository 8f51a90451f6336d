#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "exbench/detail/common.hpp"
#include "exbench/harness.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    int jobs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", opts.seed, "seed override");
    cmd->add_option("--jobs", opts.jobs, "worker threads (0 = hardware)");
}

exbench::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    auto config = exbench::load_experiment_config(opts.config_path);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (opts.seed >= 0) config.seed = static_cast<std::uint64_t>(opts.seed);
    if (opts.jobs >= 0) config.jobs = static_cast<unsigned>(opts.jobs);
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exbench: benchmark local model-agnostic explainers with sanity metrics"};
    app.require_subcommand(1);

    CommonOpts synth_opts, train_opts, explain_opts, metrics_opts, bench_opts;

    auto* synth = app.add_subcommand("synth", "materialize a synthetic spec as a dataset CSV");
    synth->add_option("--config", synth_opts.config_path, "synthetic spec (JSON)")->required();
    synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
    synth->add_option("--seed", synth_opts.seed, "seed override");
    synth->add_option("--jobs", synth_opts.jobs, "accepted for symmetry; generation is serial");

    add_common(app.add_subcommand("train", "train classifiers and the similar-model family"),
               train_opts);
    add_common(app.add_subcommand("explain", "produce explanation caches (resumable)"),
               explain_opts);
    add_common(app.add_subcommand("metrics", "compute metric reports from the caches"),
               metrics_opts);
    add_common(app.add_subcommand("bench", "per-sample runtime per approach"), bench_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here with exit code 0; anything else is a usage
        // problem and maps to the validation exit code.
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("synth")) {
            exbench::run_synth(synth_opts.config_path, synth_opts.out_dir, synth_opts.seed);
        } else if (app.got_subcommand("train")) {
            exbench::run_train(load_with_overrides(train_opts));
        } else if (app.got_subcommand("explain")) {
            exbench::run_explain(load_with_overrides(explain_opts));
        } else if (app.got_subcommand("metrics")) {
            exbench::run_metrics(load_with_overrides(metrics_opts));
        } else if (app.got_subcommand("bench")) {
            exbench::run_bench(load_with_overrides(bench_opts));
        }
    } catch (const exbench::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
