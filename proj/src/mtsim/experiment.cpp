#include "experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mtsim {

namespace {

constexpr uint64_t kTransferStream = 201;

void write_file(const fs::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void append_csv_row(std::string& csv, uint64_t seed, const std::string& method, int iteration,
                    const char* metric, double value) {
    csv += std::to_string(seed);
    csv += ',';
    csv += method;
    csv += ',';
    csv += std::to_string(iteration);
    csv += ',';
    csv += metric;
    csv += ',';
    csv += format_double(value);
    csv += '\n';
}

void append_metric_rows(std::string& csv, uint64_t seed, const std::string& method, int iteration,
                        const IterationMetrics& m) {
    append_csv_row(csv, seed, method, iteration, "expected_true_reward", m.expected_true_reward);
    append_csv_row(csv, seed, method, iteration, "kl_to_pistar", m.kl_to_pistar);
    append_csv_row(csv, seed, method, iteration, "true_win_vs_base", m.true_win_vs_base);
    append_csv_row(csv, seed, method, iteration, "rm_accuracy_id", m.rm_accuracy_id);
    append_csv_row(csv, seed, method, iteration, "rm_accuracy_ood", m.rm_accuracy_ood);
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* method_name(Method m) {
    switch (m) {
        case Method::kMutualTaught: return "mutual-taught";
        case Method::kOfflineDpo: return "offline-dpo";
        case Method::kIterDpoFixedRm: return "iter-dpo-fixed-rm";
    }
    throw std::logic_error("method_name: bad enum");
}

Method method_from_name(const std::string& s) {
    if (s == "mutual-taught") return Method::kMutualTaught;
    if (s == "offline-dpo") return Method::kOfflineDpo;
    if (s == "iter-dpo-fixed-rm" || s == "iter-dpo") return Method::kIterDpoFixedRm;
    throw std::invalid_argument("unknown method: " + s);
}

void ExperimentConfig::validate() const {
    env.validate();
    loop.validate();
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: need at least one seed");
    if (out_dir.empty()) throw std::invalid_argument("ExperimentConfig: out_dir must be set");
}

Json experiment_config_to_json(const ExperimentConfig& cfg) {
    return Json{{"env", env_config_to_json(cfg.env)},
                {"loop", loop_config_to_json(cfg.loop)},
                {"method", method_name(cfg.method)},
                {"seeds", cfg.seeds},
                {"out_dir", cfg.out_dir},
                {"write_env", cfg.write_env},
                {"transfer_eval", cfg.transfer_eval}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    ExperimentConfig cfg;
    if (j.contains("env")) cfg.env = env_config_from_json(j.at("env"));
    if (j.contains("loop")) cfg.loop = loop_config_from_json(j.at("loop"));
    if (j.contains("method")) cfg.method = method_from_name(j.at("method").get<std::string>());
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("write_env")) cfg.write_env = j.at("write_env").get<bool>();
    if (j.contains("transfer_eval")) cfg.transfer_eval = j.at("transfer_eval").get<bool>();
    cfg.validate();
    return cfg;
}

int scheduled_iterations(Method method, const LoopConfig& loop) {
    switch (method) {
        case Method::kMutualTaught: return loop.rounds * loop.iterations_per_round;
        case Method::kIterDpoFixedRm: return loop.rounds * (loop.iterations_per_round + 1);
        case Method::kOfflineDpo: return 1;
    }
    throw std::logic_error("scheduled_iterations: bad enum");
}

RunResult dispatch_method(Method method, const Environment& env, const LoopConfig& loop, uint64_t seed) {
    switch (method) {
        case Method::kMutualTaught: return run(env, loop, seed);
        case Method::kIterDpoFixedRm: return run_fixed_rm(env, loop, seed);
        case Method::kOfflineDpo: return run_offline_dpo(env, loop, seed);
    }
    throw std::logic_error("dispatch_method: bad enum");
}

void run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const std::string method = method_name(cfg.method);
    const int scheduled = scheduled_iterations(cfg.method, cfg.loop);

    std::string jsonl;
    std::string csv = "seed,method,iteration,metric,value\n";

    for (uint64_t seed : cfg.seeds) {
        EnvConfig env_cfg = cfg.env;
        env_cfg.seed = seed;
        Environment env = build_environment(env_cfg);
        if (cfg.write_env) {
            std::string name = cfg.seeds.size() == 1 ? "env.json" : "env." + std::to_string(seed) + ".json";
            write_file(fs::path(cfg.out_dir) / name, environment_to_json(env).dump() + "\n");
        }

        RunResult result = dispatch_method(cfg.method, env, cfg.loop, seed);

        std::optional<TransferRecord> transfer;
        if (cfg.transfer_eval) {
            TransferConfig tc;
            tc.dpo = cfg.loop.dpo;
            transfer = transfer_eval(result.rm, env.base_rm, env, tc, derive_seed(seed, {kTransferStream}));
        }

        for (const auto& rep : result.reports) {
            Json line = report_to_json(rep);
            line["seed"] = seed;
            line["method"] = method;
            jsonl += line.dump();
            jsonl += '\n';
        }
        Json summary{{"seed", seed},
                     {"method", method},
                     {"summary",
                      Json{{"iterations_run", result.reports.size()},
                           {"halted", !result.reports.empty() && result.reports.back().halted},
                           {"final", metrics_to_json(result.metrics.per_iteration.back())}}}};
        if (transfer) {
            summary["summary"]["transfer"] =
                Json{{"reward_fresh_base", transfer->reward_fresh_base},
                     {"reward_with_base_rm", transfer->reward_with_base_rm},
                     {"reward_with_iterated_rm", transfer->reward_with_iterated_rm},
                     {"win_with_base_rm", transfer->win_with_base_rm},
                     {"win_with_iterated_rm", transfer->win_with_iterated_rm}};
        }
        jsonl += summary.dump();
        jsonl += '\n';

        // Iteration 0 is the base state; halted runs are padded to the
        // scheduled length so row counts are uniform across seeds.
        append_metric_rows(csv, seed, method, 0, result.metrics.per_iteration[0]);
        for (int it = 1; it <= scheduled; ++it) {
            if (it <= static_cast<int>(result.reports.size())) {
                const auto& rep = result.reports[it - 1];
                append_metric_rows(csv, seed, method, it, rep.metrics);
                append_csv_row(csv, seed, method, it, "win_rate", rep.win_rate);
                append_csv_row(csv, seed, method, it, "selected_step", rep.selected_step);
                append_csv_row(csv, seed, method, it, "halted", rep.halted ? 1.0 : 0.0);
            } else {
                append_metric_rows(csv, seed, method, it, result.metrics.per_iteration.back());
                append_csv_row(csv, seed, method, it, "win_rate", 0.0);
                append_csv_row(csv, seed, method, it, "selected_step", 0.0);
                append_csv_row(csv, seed, method, it, "halted", 1.0);
            }
        }
        if (transfer) {
            append_csv_row(csv, seed, method, scheduled, "transfer_reward_fresh_base",
                           transfer->reward_fresh_base);
            append_csv_row(csv, seed, method, scheduled, "transfer_reward_with_base_rm",
                           transfer->reward_with_base_rm);
            append_csv_row(csv, seed, method, scheduled, "transfer_reward_with_iterated_rm",
                           transfer->reward_with_iterated_rm);
            append_csv_row(csv, seed, method, scheduled, "transfer_win_with_base_rm",
                           transfer->win_with_base_rm);
            append_csv_row(csv, seed, method, scheduled, "transfer_win_with_iterated_rm",
                           transfer->win_with_iterated_rm);
        }
    }

    write_file(fs::path(cfg.out_dir) / "config.echo.json", experiment_config_to_json(cfg).dump(2) + "\n");
    write_file(fs::path(cfg.out_dir) / "iterations.jsonl", jsonl);
    write_file(fs::path(cfg.out_dir) / "summary.csv", csv);
}

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-3, std::abs(a) + std::abs(b)); }

}  // namespace

GradcheckReport run_gradcheck(uint64_t seed, int instances, double corruption) {
    if (instances < 1) throw std::invalid_argument("run_gradcheck: instances must be >= 1");
    GradcheckReport report;
    report.instances = instances;
    const double h = 1e-5;

    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(derive_seed(seed, {301, static_cast<uint64_t>(inst)}));
        int p = 2 + static_cast<int>(rng.uniform_below(5));
        int r = 2 + static_cast<int>(rng.uniform_below(4));
        int n_pairs = 3 + static_cast<int>(rng.uniform_below(8));

        Policy policy{Matrix(p, r)}, reference{Matrix(p, r)};
        for (double& v : policy.logits.data) v = 2.0 * rng.normal();
        for (double& v : reference.logits.data) v = 2.0 * rng.normal();
        std::vector<PreferencePair> pairs;
        for (int k = 0; k < n_pairs; ++k) {
            int x = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(p)));
            int w = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(r)));
            int l = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(r - 1)));
            if (l >= w) ++l;
            pairs.push_back({x, w, l, PairSource::kEStep, std::nullopt});
        }
        double beta = 0.05 * std::exp(rng.uniform01() * std::log(2.0 / 0.05));

        Matrix analytic = dpo_grad(policy, reference, pairs, beta);
        analytic.data[0] += corruption;
        auto mean_loss = [&](const Policy& pol) {
            double s = 0.0;
            for (const auto& q : pairs) s += dpo_loss(pol, reference, q, beta);
            return s / pairs.size();
        };
        for (size_t i = 0; i < analytic.data.size(); ++i) {
            Policy bumped = policy;
            bumped.logits.data[i] += h;
            double up = mean_loss(bumped);
            bumped.logits.data[i] -= 2 * h;
            double down = mean_loss(bumped);
            double numeric = (up - down) / (2 * h);
            report.max_rel_dpo = std::max(report.max_rel_dpo, rel_err(analytic.data[i], numeric));
        }

        // Bradley-Terry side, same instance shapes.
        RewardModel rm{Matrix(p, r), 0.0};
        for (double& v : rm.scores.data) v = 2.0 * rng.normal();
        double lambdas[3] = {0.0, 1e-3, 0.1};
        rm.l2_lambda = lambdas[inst % 3];
        Matrix bt_analytic = bt_grad(rm, pairs);
        bt_analytic.data[0] += corruption;
        for (size_t i = 0; i < bt_analytic.data.size(); ++i) {
            RewardModel bumped = rm;
            bumped.scores.data[i] += h;
            double up = bt_nll(bumped, pairs);
            bumped.scores.data[i] -= 2 * h;
            double down = bt_nll(bumped, pairs);
            double numeric = (up - down) / (2 * h);
            report.max_rel_bt = std::max(report.max_rel_bt, rel_err(bt_analytic.data[i], numeric));
        }
    }

    report.pass = report.max_rel_dpo <= 1e-6 && report.max_rel_bt <= 1e-6;
    return report;
}

Json gradcheck_report_to_json(const GradcheckReport& r) {
    return Json{{"instances", r.instances},
                {"max_rel_dpo", r.max_rel_dpo},
                {"max_rel_bt", r.max_rel_bt},
                {"pass", r.pass}};
}

const char* ablation_axis_name(AblationAxis a) {
    return a == AblationAxis::kFilter ? "filter" : "rm-data";
}

AblationAxis ablation_axis_from_name(const std::string& s) {
    if (s == "filter") return AblationAxis::kFilter;
    if (s == "rm-data" || s == "rm_data") return AblationAxis::kRmData;
    throw std::invalid_argument("unknown ablation axis: " + s);
}

void run_ablation(const ExperimentConfig& base, AblationAxis axis, const std::string& out_dir) {
    base.validate();
    if (base.seeds.size() < 10)
        std::cerr << "warning: ablation with fewer than 10 seeds gives weak sign tests\n";
    fs::create_directories(out_dir);

    std::vector<std::string> variants;
    if (axis == AblationAxis::kFilter)
        variants = {"lqf", "hqs", "dst", "none"};
    else
        variants = {"policy-comparison", "self-training", "mixed"};

    const int scheduled = scheduled_iterations(base.method, base.loop);
    std::string csv =
        "seed,axis,variant,iteration,env_fingerprint,halted,expected_true_reward,kl_to_pistar,"
        "true_win_vs_base,rm_accuracy_id,rm_accuracy_ood\n";

    for (uint64_t seed : base.seeds) {
        EnvConfig env_cfg = base.env;
        env_cfg.seed = seed;
        Environment env = build_environment(env_cfg);
        uint64_t fp = env_fingerprint(env);

        for (const auto& variant : variants) {
            LoopConfig loop = base.loop;
            if (axis == AblationAxis::kFilter)
                loop.filter = filter_from_name(variant);
            else
                loop.rm_data = rm_data_from_name(variant);

            RunResult result = dispatch_method(base.method, env, loop, seed);
            for (int it = 0; it <= scheduled; ++it) {
                bool ran = it <= static_cast<int>(result.reports.size());
                const IterationMetrics& m = ran ? result.metrics.per_iteration[it]
                                                : result.metrics.per_iteration.back();
                bool halted = !ran || (it > 0 && result.reports[it - 1].halted);
                csv += std::to_string(seed) + ',' + ablation_axis_name(axis) + ',' + variant + ',' +
                       std::to_string(it) + ',' + std::to_string(fp) + ',' + (halted ? "1" : "0") + ',' +
                       format_double(m.expected_true_reward) + ',' + format_double(m.kl_to_pistar) + ',' +
                       format_double(m.true_win_vs_base) + ',' + format_double(m.rm_accuracy_id) + ',' +
                       format_double(m.rm_accuracy_ood) + '\n';
            }
        }
    }

    Json echo = experiment_config_to_json(base);
    echo["ablation_axis"] = ablation_axis_name(axis);
    write_file(fs::path(out_dir) / "config.echo.json", echo.dump(2) + "\n");
    write_file(fs::path(out_dir) / "ablation.csv", csv);
}

}  // namespace mtsim
