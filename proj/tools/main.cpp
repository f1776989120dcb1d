#include <CLI11.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "ieqn/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ieqn: dual expectile-quantile distributional RL experiments"};
    app.require_subcommand(1);

    ieqn::cli::CliOptions options;
    std::uint64_t seed_flag = 0;

    for (const char* name : {"regress", "project", "dp", "train", "spread"}) {
        auto* sub = app.add_subcommand(name, "");
        sub->add_option("--config", options.config_path, "key = value config file");
        sub->add_option("--set", options.sets, "override KEY=VALUE (repeatable)");
        sub->add_option("--out", options.out_dir, "output directory (default: out)");
        auto* seed_opt = sub->add_option("--seed", seed_flag, "override the root seed");
        sub->add_flag("--quiet", options.quiet, "suppress progress output");
        sub->footer(ieqn::cli::schema_help(name));
        sub->callback([&options, name, seed_opt, &seed_flag]() {
            options.subcommand = name;
            if (seed_opt->count() > 0) options.seed = seed_flag;
        });
    }

    // descriptions shown in the top-level help
    app.get_subcommand("regress")->description(
        "fit quantile/expectile statistic vectors to a sampled target");
    app.get_subcommand("project")->description(
        "dual-projection convergence study and nonexpansion table");
    app.get_subcommand("dp")->description(
        "iterate the dual projected Bellman operator against a Monte-Carlo oracle");
    app.get_subcommand("train")->description("train TD agents on the chain MDP");
    app.get_subcommand("spread")->description("recompute spread metrics from a trace CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    return ieqn::cli::dispatch(options);
}
