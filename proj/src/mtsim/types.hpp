#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace mtsim {

enum class PairSource { kInit, kEStep, kPolicyComparison, kSelfTraining };

// The unit of all training data: an ordered preference over two responses
// to the same prompt. The margin is filled in lazily by compute_margins.
struct PreferencePair {
    int prompt = 0;
    int chosen = 0;
    int rejected = 0;
    PairSource source = PairSource::kInit;
    std::optional<double> margin;
};

inline const char* pair_source_name(PairSource s) {
    switch (s) {
        case PairSource::kInit: return "init";
        case PairSource::kEStep: return "e-step";
        case PairSource::kPolicyComparison: return "policy-comparison";
        case PairSource::kSelfTraining: return "self-training";
    }
    throw std::logic_error("pair_source_name: bad enum");
}

inline PairSource pair_source_from_name(const std::string& s) {
    if (s == "init") return PairSource::kInit;
    if (s == "e-step") return PairSource::kEStep;
    if (s == "policy-comparison") return PairSource::kPolicyComparison;
    if (s == "self-training") return PairSource::kSelfTraining;
    throw std::invalid_argument("unknown pair source: " + s);
}

}  // namespace mtsim
