#include "serialize.hpp"

#include <stdexcept>

namespace mtsim {

namespace {

std::vector<int> int_vec(const Json& j) { return j.get<std::vector<int>>(); }

template <class T>
T field(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

const char* annotation_name(AnnotationMode m) {
    return m == AnnotationMode::kBtNoise ? "bt-noise" : "noise-free";
}
const char* pair_selection_name(PairSelection m) {
    return m == PairSelection::kLengthControlled ? "length-controlled" : "best-vs-worst";
}
const char* filter_name(FilterStrategy f) {
    switch (f) {
        case FilterStrategy::kLqf: return "lqf";
        case FilterStrategy::kHqs: return "hqs";
        case FilterStrategy::kDst: return "dst";
        case FilterStrategy::kNone: return "none";
    }
    throw std::logic_error("filter_name: bad enum");
}
const char* rm_data_name(RmDataMode m) {
    switch (m) {
        case RmDataMode::kPolicyComparison: return "policy-comparison";
        case RmDataMode::kSelfTraining: return "self-training";
        case RmDataMode::kMixed: return "mixed";
    }
    throw std::logic_error("rm_data_name: bad enum");
}
const char* round_init_name(RoundInit r) {
    return r == RoundInit::kContinue ? "continue" : "restart-from-base";
}

AnnotationMode annotation_from_name(const std::string& s) {
    if (s == "bt-noise") return AnnotationMode::kBtNoise;
    if (s == "noise-free") return AnnotationMode::kNoiseFree;
    throw std::invalid_argument("unknown annotation mode: " + s);
}
PairSelection pair_selection_from_name(const std::string& s) {
    if (s == "length-controlled") return PairSelection::kLengthControlled;
    if (s == "best-vs-worst") return PairSelection::kBestVsWorst;
    throw std::invalid_argument("unknown pair selection: " + s);
}
FilterStrategy filter_from_name(const std::string& s) {
    if (s == "lqf") return FilterStrategy::kLqf;
    if (s == "hqs") return FilterStrategy::kHqs;
    if (s == "dst") return FilterStrategy::kDst;
    if (s == "none") return FilterStrategy::kNone;
    throw std::invalid_argument("unknown filter strategy: " + s);
}
RmDataMode rm_data_from_name(const std::string& s) {
    if (s == "policy-comparison") return RmDataMode::kPolicyComparison;
    if (s == "self-training") return RmDataMode::kSelfTraining;
    if (s == "mixed") return RmDataMode::kMixed;
    throw std::invalid_argument("unknown rm data mode: " + s);
}
RoundInit round_init_from_name(const std::string& s) {
    if (s == "continue") return RoundInit::kContinue;
    if (s == "restart-from-base") return RoundInit::kRestartFromBase;
    throw std::invalid_argument("unknown round init: " + s);
}

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (int r = 0; r < m.rows; ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix: expected non-empty array");
    int rows = static_cast<int>(j.size());
    int cols = static_cast<int>(j.at(0).size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j.at(r).size()) != cols) throw std::invalid_argument("matrix: ragged rows");
        for (int c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

Json env_config_to_json(const EnvConfig& cfg) {
    return Json{{"num_prompts", cfg.num_prompts},
                {"num_responses", cfg.num_responses},
                {"reward_scale", cfg.reward_scale},
                {"pistar_temperature", cfg.pistar_temperature},
                {"base_alignment", cfg.base_alignment},
                {"base_noise_std", cfg.base_noise_std},
                {"length_min", cfg.length_min},
                {"length_max", cfg.length_max},
                {"length_reward_correlation", cfg.length_reward_correlation},
                {"init_rm_pairs_per_prompt", cfg.init_rm_pairs_per_prompt},
                {"annotation", annotation_name(cfg.annotation)},
                {"partition_fractions", cfg.partition_fractions},
                {"seed", cfg.seed}};
}

EnvConfig env_config_from_json(const Json& j) {
    EnvConfig cfg;
    cfg.num_prompts = field(j, "num_prompts", cfg.num_prompts);
    cfg.num_responses = field(j, "num_responses", cfg.num_responses);
    cfg.reward_scale = field(j, "reward_scale", cfg.reward_scale);
    cfg.pistar_temperature = field(j, "pistar_temperature", cfg.pistar_temperature);
    cfg.base_alignment = field(j, "base_alignment", cfg.base_alignment);
    cfg.base_noise_std = field(j, "base_noise_std", cfg.base_noise_std);
    cfg.length_min = field(j, "length_min", cfg.length_min);
    cfg.length_max = field(j, "length_max", cfg.length_max);
    cfg.length_reward_correlation = field(j, "length_reward_correlation", cfg.length_reward_correlation);
    cfg.init_rm_pairs_per_prompt = field(j, "init_rm_pairs_per_prompt", cfg.init_rm_pairs_per_prompt);
    if (j.contains("annotation")) cfg.annotation = annotation_from_name(j.at("annotation").get<std::string>());
    if (j.contains("partition_fractions"))
        cfg.partition_fractions = j.at("partition_fractions").get<std::array<double, 4>>();
    cfg.seed = field(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

Json environment_to_json(const Environment& env) {
    Json lengths = Json::array();
    for (int r = 0; r < env.lengths.rows; ++r) {
        Json row = Json::array();
        for (int c = 0; c < env.lengths.cols; ++c) row.push_back(env.lengths(r, c));
        lengths.push_back(std::move(row));
    }
    return Json{{"config", env_config_to_json(env.config)},
                {"rstar", matrix_to_json(env.rstar)},
                {"lengths", std::move(lengths)},
                {"partitions",
                 Json{{"policy_split_1", env.policy_split_1},
                      {"policy_split_2", env.policy_split_2},
                      {"rm_split", env.rm_split},
                      {"validation_split", env.validation_split}}},
                {"base_policy", policy_to_json(env.base_policy)},
                {"base_rm", reward_model_to_json(env.base_rm)}};
}

Environment environment_from_json(const Json& j) {
    Environment env;
    env.config = env_config_from_json(j.at("config"));
    env.rstar = matrix_from_json(j.at("rstar"));
    Matrix lm = matrix_from_json(j.at("lengths"));
    env.lengths = IntGrid(lm.rows, lm.cols);
    for (size_t i = 0; i < lm.data.size(); ++i) env.lengths.data[i] = static_cast<int>(lm.data[i]);
    const Json& parts = j.at("partitions");
    env.policy_split_1 = int_vec(parts.at("policy_split_1"));
    env.policy_split_2 = int_vec(parts.at("policy_split_2"));
    env.rm_split = int_vec(parts.at("rm_split"));
    env.validation_split = int_vec(parts.at("validation_split"));
    env.base_policy = policy_from_json(j.at("base_policy"));
    env.base_rm = reward_model_from_json(j.at("base_rm"));
    env.validate();
    return env;
}

Json policy_to_json(const Policy& p) { return Json{{"logits", matrix_to_json(p.logits)}}; }

Policy policy_from_json(const Json& j) { return Policy{matrix_from_json(j.at("logits"))}; }

Json checkpoint_to_json(const Checkpoint& c) {
    return Json{{"step", c.step}, {"policy", policy_to_json(c.policy)}};
}

Json reward_model_to_json(const RewardModel& rm) {
    return Json{{"scores", matrix_to_json(rm.scores)}, {"l2_lambda", rm.l2_lambda}};
}

RewardModel reward_model_from_json(const Json& j) {
    return RewardModel{matrix_from_json(j.at("scores")), j.at("l2_lambda").get<double>()};
}

Json pair_to_json(const PreferencePair& p) {
    Json j{{"prompt", p.prompt},
           {"chosen", p.chosen},
           {"rejected", p.rejected},
           {"source", pair_source_name(p.source)}};
    if (p.margin) j["margin"] = *p.margin;
    return j;
}

PreferencePair pair_from_json(const Json& j) {
    PreferencePair p;
    p.prompt = j.at("prompt").get<int>();
    p.chosen = j.at("chosen").get<int>();
    p.rejected = j.at("rejected").get<int>();
    p.source = pair_source_from_name(j.at("source").get<std::string>());
    if (j.contains("margin")) p.margin = j.at("margin").get<double>();
    return p;
}

std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += pair_to_json(p).dump();
        out += '\n';
    }
    return out;
}

Json dpo_config_to_json(const DpoConfig& cfg) {
    return Json{{"beta", cfg.beta},
                {"learning_rate", cfg.learning_rate},
                {"steps", cfg.steps},
                {"checkpoint_every", cfg.checkpoint_every},
                {"sample_temperature", cfg.sample_temperature},
                {"samples_per_prompt", cfg.samples_per_prompt},
                {"pair_selection", pair_selection_name(cfg.pair_selection)}};
}

DpoConfig dpo_config_from_json(const Json& j) {
    DpoConfig cfg;
    cfg.beta = field(j, "beta", cfg.beta);
    cfg.learning_rate = field(j, "learning_rate", cfg.learning_rate);
    cfg.steps = field(j, "steps", cfg.steps);
    cfg.checkpoint_every = field(j, "checkpoint_every", cfg.checkpoint_every);
    cfg.sample_temperature = field(j, "sample_temperature", cfg.sample_temperature);
    cfg.samples_per_prompt = field(j, "samples_per_prompt", cfg.samples_per_prompt);
    if (j.contains("pair_selection"))
        cfg.pair_selection = pair_selection_from_name(j.at("pair_selection").get<std::string>());
    cfg.validate();
    return cfg;
}

Json bt_config_to_json(const BtConfig& cfg) {
    return Json{{"learning_rate", cfg.learning_rate}, {"steps", cfg.steps}, {"l2_lambda", cfg.l2_lambda}};
}

BtConfig bt_config_from_json(const Json& j) {
    BtConfig cfg;
    cfg.learning_rate = field(j, "learning_rate", cfg.learning_rate);
    cfg.steps = field(j, "steps", cfg.steps);
    cfg.l2_lambda = field(j, "l2_lambda", cfg.l2_lambda);
    cfg.validate();
    return cfg;
}

Json loop_config_to_json(const LoopConfig& cfg) {
    return Json{{"iterations_per_round", cfg.iterations_per_round},
                {"rounds", cfg.rounds},
                {"tau", cfg.tau},
                {"filter", filter_name(cfg.filter)},
                {"rm_data", rm_data_name(cfg.rm_data)},
                {"round_init", round_init_name(cfg.round_init)},
                {"dpo", dpo_config_to_json(cfg.dpo)},
                {"bt", bt_config_to_json(cfg.bt)}};
}

LoopConfig loop_config_from_json(const Json& j) {
    LoopConfig cfg;
    cfg.iterations_per_round = field(j, "iterations_per_round", cfg.iterations_per_round);
    cfg.rounds = field(j, "rounds", cfg.rounds);
    cfg.tau = field(j, "tau", cfg.tau);
    if (j.contains("filter")) cfg.filter = filter_from_name(j.at("filter").get<std::string>());
    if (j.contains("rm_data")) cfg.rm_data = rm_data_from_name(j.at("rm_data").get<std::string>());
    if (j.contains("round_init")) cfg.round_init = round_init_from_name(j.at("round_init").get<std::string>());
    if (j.contains("dpo")) cfg.dpo = dpo_config_from_json(j.at("dpo"));
    if (j.contains("bt")) cfg.bt = bt_config_from_json(j.at("bt"));
    cfg.validate();
    return cfg;
}

Json metrics_to_json(const IterationMetrics& m) {
    return Json{{"expected_true_reward", m.expected_true_reward},
                {"kl_to_pistar", m.kl_to_pistar},
                {"true_win_vs_base", m.true_win_vs_base},
                {"rm_accuracy_id", m.rm_accuracy_id},
                {"rm_accuracy_ood", m.rm_accuracy_ood}};
}

Json report_to_json(const IterationReport& r) {
    Json j{{"round", r.round},
           {"iteration", r.iteration},
           {"global_index", r.global_index},
           {"selected_step", r.selected_step},
           {"win_rate", r.win_rate},
           {"halted", r.halted},
           {"pairs_built", r.pairs_built},
           {"pairs_kept", r.pairs_kept},
           {"pairs_kept_lqf", r.pairs_kept_lqf},
           {"pairs_kept_hqs", r.pairs_kept_hqs},
           {"epsilon", nullptr},
           {"rm_pairs_total", nullptr},
           {"rm_nll_before", nullptr},
           {"rm_nll_after", nullptr},
           {"metrics", metrics_to_json(r.metrics)}};
    if (r.epsilon) j["epsilon"] = *r.epsilon;
    if (r.rm_pairs_total) j["rm_pairs_total"] = *r.rm_pairs_total;
    if (r.rm_nll_before) j["rm_nll_before"] = *r.rm_nll_before;
    if (r.rm_nll_after) j["rm_nll_after"] = *r.rm_nll_after;
    return j;
}

Json parse_json(std::string_view text, const char* what) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string(what) + ": " + e.what());
    }
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t env_fingerprint(const Environment& env) { return fnv1a64(environment_to_json(env).dump()); }

}  // namespace mtsim
