#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "env.hpp"
#include "eval.hpp"
#include "loop.hpp"

namespace mtsim {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json env_config_to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const Json& j);

Json environment_to_json(const Environment& env);
Environment environment_from_json(const Json& j);

Json policy_to_json(const Policy& p);
Policy policy_from_json(const Json& j);

Json checkpoint_to_json(const Checkpoint& c);

Json reward_model_to_json(const RewardModel& rm);
RewardModel reward_model_from_json(const Json& j);

Json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const Json& j);
std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs);

Json dpo_config_to_json(const DpoConfig& cfg);
DpoConfig dpo_config_from_json(const Json& j);

Json bt_config_to_json(const BtConfig& cfg);
BtConfig bt_config_from_json(const Json& j);

Json loop_config_to_json(const LoopConfig& cfg);
LoopConfig loop_config_from_json(const Json& j);

Json metrics_to_json(const IterationMetrics& m);
Json report_to_json(const IterationReport& r);

// Parses a JSON document, mapping parse failures to std::invalid_argument.
Json parse_json(std::string_view text, const char* what);

uint64_t fnv1a64(std::string_view bytes);
uint64_t env_fingerprint(const Environment& env);

const char* annotation_name(AnnotationMode m);
const char* pair_selection_name(PairSelection m);
const char* filter_name(FilterStrategy f);
const char* rm_data_name(RmDataMode m);
const char* round_init_name(RoundInit r);

AnnotationMode annotation_from_name(const std::string& s);
PairSelection pair_selection_from_name(const std::string& s);
FilterStrategy filter_from_name(const std::string& s);
RmDataMode rm_data_from_name(const std::string& s);
RoundInit round_init_from_name(const std::string& s);

}  // namespace mtsim
