#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "corrlab/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"corrlab - noise-correlation wave laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    corrlab::RunOptions opts;

    auto* run = app.add_subcommand("run", "run a scenario from a JSON config");
    run->add_option("config", config_path, "scenario config (JSON)")->required();
    run->add_flag("--strict", opts.strict, "exit 3 when any check fails");
    run->add_option("--workers", opts.workers, "worker count (default 1, bit-stable)");
    run->add_option("--out", opts.out_dir, "output directory (overrides config)");

    auto* list = app.add_subcommand("list", "list scenarios and what each one demonstrates");

    std::string validate_path;
    auto* val = app.add_subcommand("validate", "validate a config without running");
    val->add_option("config", validate_path, "scenario config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return corrlab::run_scenario_file(config_path, opts);
    if (list->parsed()) {
        for (const auto& s : corrlab::list_scenarios())
            std::printf("%-28s %s\n", s.name.c_str(), s.reproduces.c_str());
        return 0;
    }
    if (val->parsed()) {
        std::string err;
        const int rc = corrlab::validate_scenario_file(validate_path, &err);
        if (rc != 0)
            std::fprintf(stderr, "validation error: %s\n", err.c_str());
        else
            std::printf("ok\n");
        return rc;
    }
    return 0;
}
