// mtsim command line front end. Talks to the core exclusively through the
// C API in mtsim/mtsim.h; exit codes mirror mtsim_status.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "mtsim/mtsim.h"

namespace {

bool read_file(const std::string& path, std::string& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

int fail(mtsim_status status) {
    std::cerr << "error: " << mtsim_last_error() << "\n";
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mtsim - Mutual-Taught alignment simulation laboratory"};
    app.require_subcommand(1);

    // run
    auto* cmd_run = app.add_subcommand("run", "Run an experiment from a config file");
    std::string run_config, run_out;
    uint64_t run_seed = 0;
    bool run_has_seed = false, run_write_env = false;
    cmd_run->add_option("--config", run_config, "Experiment config JSON file")->required();
    cmd_run->add_option("--seed", run_seed, "Replace the config's seed list with one seed")
        ->each([&](const std::string&) { run_has_seed = true; });
    cmd_run->add_option("--out", run_out, "Output directory override");
    cmd_run->add_flag("--write-env", run_write_env, "Also write the serialized environment(s)");

    // gradcheck
    auto* cmd_grad = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    uint64_t grad_seed = 1234;
    int grad_instances = 24;
    cmd_grad->add_option("--seed", grad_seed, "Seed for the random instances");
    cmd_grad->add_option("--instances", grad_instances, "Number of random instances per gradient");

    // ablate
    auto* cmd_ablate = app.add_subcommand("ablate", "Run one ablation axis over shared environments");
    std::string ablate_axis, ablate_config, ablate_out;
    cmd_ablate->add_option("--axis", ablate_axis, "Ablation axis: filter | rm-data")->required();
    cmd_ablate->add_option("--config", ablate_config, "Experiment config JSON file")->required();
    cmd_ablate->add_option("--out", ablate_out, "Output directory override");

    // baseline
    auto* cmd_base = app.add_subcommand("baseline", "Run a baseline method against a config");
    std::string base_method, base_config, base_out;
    uint64_t base_seed = 0;
    bool base_has_seed = false;
    cmd_base->add_option("--method", base_method, "Baseline: offline-dpo | iter-dpo")->required();
    cmd_base->add_option("--config", base_config, "Experiment config JSON file")->required();
    cmd_base->add_option("--seed", base_seed, "Replace the config's seed list with one seed")
        ->each([&](const std::string&) { base_has_seed = true; });
    cmd_base->add_option("--out", base_out, "Output directory override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(MTSIM_ERR_CONFIG);
    }

    if (cmd_run->parsed()) {
        std::string config;
        if (!read_file(run_config, config)) {
            std::cerr << "error: cannot read config file: " << run_config << "\n";
            return static_cast<int>(MTSIM_ERR_CONFIG);
        }
        mtsim_status st = mtsim_experiment_run(config.c_str(), nullptr,
                                               run_out.empty() ? nullptr : run_out.c_str(),
                                               run_has_seed ? 1 : 0, run_seed, run_write_env ? 1 : 0);
        if (st != MTSIM_OK) return fail(st);
        std::cout << "run complete\n";
        return 0;
    }

    if (cmd_grad->parsed()) {
        char* report = nullptr;
        mtsim_status st = mtsim_gradcheck(grad_seed, grad_instances, 0.0, &report);
        if (report) {
            std::cout << report << "\n";
            mtsim_string_free(report);
        }
        if (st != MTSIM_OK) return fail(st);
        return 0;
    }

    if (cmd_ablate->parsed()) {
        std::string config;
        if (!read_file(ablate_config, config)) {
            std::cerr << "error: cannot read config file: " << ablate_config << "\n";
            return static_cast<int>(MTSIM_ERR_CONFIG);
        }
        mtsim_status st = mtsim_ablate(config.c_str(), ablate_axis.c_str(),
                                       ablate_out.empty() ? nullptr : ablate_out.c_str());
        if (st != MTSIM_OK) return fail(st);
        std::cout << "ablation complete\n";
        return 0;
    }

    if (cmd_base->parsed()) {
        std::string config;
        if (!read_file(base_config, config)) {
            std::cerr << "error: cannot read config file: " << base_config << "\n";
            return static_cast<int>(MTSIM_ERR_CONFIG);
        }
        const char* method = base_method == "iter-dpo" ? "iter-dpo-fixed-rm" : base_method.c_str();
        mtsim_status st = mtsim_experiment_run(config.c_str(), method,
                                               base_out.empty() ? nullptr : base_out.c_str(),
                                               base_has_seed ? 1 : 0, base_seed, 0);
        if (st != MTSIM_OK) return fail(st);
        std::cout << "baseline complete\n";
        return 0;
    }

    return static_cast<int>(MTSIM_ERR_CONFIG);
}
