#include "mtsim/mtsim.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "mtsim/experiment.hpp"
#include "mtsim/serialize.hpp"

using namespace mtsim;

struct mtsim_env {
    Environment env;
};

namespace {

thread_local std::string g_last_error = "ok";

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <class Fn>
mtsim_status guard(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return MTSIM_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return MTSIM_ERR_RUNTIME;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MTSIM_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return MTSIM_ERR_RUNTIME;
    }
}

}  // namespace

extern "C" {

const char* mtsim_version(void) { return "1.0.0"; }

const char* mtsim_last_error(void) { return g_last_error.c_str(); }

void mtsim_string_free(char* s) { delete[] s; }

mtsim_status mtsim_env_create(const char* env_config_json, mtsim_env** out_env) {
    return guard([&]() -> mtsim_status {
        if (!env_config_json || !out_env) throw std::invalid_argument("null argument");
        EnvConfig cfg = env_config_from_json(parse_json(env_config_json, "env config"));
        *out_env = new mtsim_env{build_environment(cfg)};
        return MTSIM_OK;
    });
}

mtsim_status mtsim_env_from_json(const char* env_json, mtsim_env** out_env) {
    return guard([&]() -> mtsim_status {
        if (!env_json || !out_env) throw std::invalid_argument("null argument");
        *out_env = new mtsim_env{environment_from_json(parse_json(env_json, "environment"))};
        return MTSIM_OK;
    });
}

void mtsim_env_free(mtsim_env* env) { delete env; }

mtsim_status mtsim_env_to_json(const mtsim_env* env, char** out_json) {
    return guard([&]() -> mtsim_status {
        if (!env || !out_json) throw std::invalid_argument("null argument");
        *out_json = dup_string(environment_to_json(env->env).dump());
        return MTSIM_OK;
    });
}

uint64_t mtsim_env_fingerprint(const mtsim_env* env) {
    if (!env) return 0;
    try {
        return env_fingerprint(env->env);
    } catch (...) {
        return 0;
    }
}

mtsim_status mtsim_loop_run(const mtsim_env* env, const char* loop_config_json, uint64_t seed,
                            char** out_report_json) {
    return guard([&]() -> mtsim_status {
        if (!env || !loop_config_json || !out_report_json) throw std::invalid_argument("null argument");
        LoopConfig cfg = loop_config_from_json(parse_json(loop_config_json, "loop config"));
        RunResult result = run(env->env, cfg, seed);
        Json reports = Json::array();
        for (const auto& r : result.reports) reports.push_back(report_to_json(r));
        Json out{{"seed", seed},
                 {"reports", std::move(reports)},
                 {"final",
                  Json{{"metrics", metrics_to_json(result.metrics.per_iteration.back())},
                       {"policy", policy_to_json(result.policy)},
                       {"rm", reward_model_to_json(result.rm)}}}};
        *out_report_json = dup_string(out.dump());
        return MTSIM_OK;
    });
}

mtsim_status mtsim_experiment_run(const char* experiment_config_json, const char* method_override,
                                  const char* out_dir_override, int has_seed_override,
                                  uint64_t seed_override, int write_env) {
    return guard([&]() -> mtsim_status {
        if (!experiment_config_json) throw std::invalid_argument("null config");
        ExperimentConfig cfg =
            experiment_config_from_json(parse_json(experiment_config_json, "experiment config"));
        if (method_override) cfg.method = method_from_name(method_override);
        if (out_dir_override) cfg.out_dir = out_dir_override;
        if (has_seed_override) cfg.seeds = {seed_override};
        if (write_env) cfg.write_env = true;
        run_experiment(cfg);
        return MTSIM_OK;
    });
}

mtsim_status mtsim_gradcheck(uint64_t seed, int instances, double corruption, char** out_report_json) {
    return guard([&]() -> mtsim_status {
        GradcheckReport report = run_gradcheck(seed, instances, corruption);
        if (out_report_json) *out_report_json = dup_string(gradcheck_report_to_json(report).dump());
        if (!report.pass) {
            g_last_error = "gradient check failed: max_rel_dpo=" + format_double(report.max_rel_dpo) +
                           " max_rel_bt=" + format_double(report.max_rel_bt);
            return MTSIM_ERR_VERIFY;
        }
        return MTSIM_OK;
    });
}

mtsim_status mtsim_ablate(const char* experiment_config_json, const char* axis,
                          const char* out_dir_override) {
    return guard([&]() -> mtsim_status {
        if (!experiment_config_json || !axis) throw std::invalid_argument("null argument");
        ExperimentConfig cfg =
            experiment_config_from_json(parse_json(experiment_config_json, "experiment config"));
        std::string out_dir = out_dir_override ? out_dir_override : cfg.out_dir;
        run_ablation(cfg, ablation_axis_from_name(axis), out_dir);
        return MTSIM_OK;
    });
}

}  // extern "C"
