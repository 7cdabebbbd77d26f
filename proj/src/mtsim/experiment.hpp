#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loop.hpp"
#include "serialize.hpp"

namespace mtsim {

enum class Method { kMutualTaught, kOfflineDpo, kIterDpoFixedRm };

const char* method_name(Method m);
Method method_from_name(const std::string& s);

struct ExperimentConfig {
    EnvConfig env;
    LoopConfig loop;
    Method method = Method::kMutualTaught;
    std::vector<uint64_t> seeds = {1};
    std::string out_dir = "out";
    bool write_env = false;
    bool transfer_eval = false;

    void validate() const;
};

Json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const Json& j);

// Number of policy iterations the schedule allows; summary.csv is padded to
// this length so halted runs still produce one row per (iteration, metric).
int scheduled_iterations(Method method, const LoopConfig& loop);

RunResult dispatch_method(Method method, const Environment& env, const LoopConfig& loop, uint64_t seed);

// Builds one environment per seed, runs the configured method, and writes
// config.echo.json, iterations.jsonl, and summary.csv into cfg.out_dir.
void run_experiment(const ExperimentConfig& cfg);

struct GradcheckReport {
    int instances = 0;
    double max_rel_dpo = 0.0;
    double max_rel_bt = 0.0;
    bool pass = false;
};

// Central finite-difference verification of dpo_grad and bt_grad on random
// instances. `corruption` adds a deliberate offset to one analytic gradient
// entry so tests can confirm the detector fires.
GradcheckReport run_gradcheck(uint64_t seed = 1234, int instances = 24, double corruption = 0.0);
Json gradcheck_report_to_json(const GradcheckReport& r);

enum class AblationAxis { kFilter, kRmData };

const char* ablation_axis_name(AblationAxis a);
AblationAxis ablation_axis_from_name(const std::string& s);

// Runs every variant of one axis per seed against a shared environment and
// writes paired wide-format rows to ablation.csv for sign tests.
void run_ablation(const ExperimentConfig& base, AblationAxis axis, const std::string& out_dir);

std::string format_double(double v);

}  // namespace mtsim
