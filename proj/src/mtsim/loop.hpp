#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "env.hpp"
#include "eval.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "rng.hpp"

namespace mtsim {

enum class FilterStrategy { kLqf, kHqs, kDst, kNone };
enum class RmDataMode { kPolicyComparison, kSelfTraining, kMixed };
enum class RoundInit { kContinue, kRestartFromBase };

struct LoopConfig {
    int iterations_per_round = 2;  // T: policy updates per round
    int rounds = 1;
    double tau = 0.60;             // validation win-rate threshold for the halt rule
    FilterStrategy filter = FilterStrategy::kLqf;
    RmDataMode rm_data = RmDataMode::kMixed;
    RoundInit round_init = RoundInit::kRestartFromBase;
    DpoConfig dpo;
    BtConfig bt;

    void validate() const;
};

struct IterationReport {
    int round = 0;
    int iteration = 0;        // t within the round
    int global_index = 0;     // 1-based across the whole run
    int selected_step = 0;    // 0 when halted
    double win_rate = 0.0;    // max over checkpoints
    bool halted = false;
    int pairs_built = 0;      // pseudo-pairs before filtering
    int pairs_kept = 0;       // after the configured filter
    int pairs_kept_lqf = 0;   // audit counts, filtering recomputed per strategy
    int pairs_kept_hqs = 0;
    std::optional<double> epsilon;
    std::optional<int> rm_pairs_total;
    std::optional<double> rm_nll_before;
    std::optional<double> rm_nll_after;
    IterationMetrics metrics;
};

struct EStepResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<PreferencePair> pairs;  // retained for self-training reuse
};

struct SelectionResult {
    Policy selected;
    bool halted = false;
    double win_rate = 0.0;  // max over checkpoints
    int step = 0;           // 0 when halted
};

// E-step: build preference pairs from pi_prev ranked by rm_prev, then run the
// DPO trainer with pi_prev as reference. Errors if every prompt degenerates.
EStepResult e_step(const Policy& pi_prev, const RewardModel& rm_prev, std::span<const int> prompts,
                   const DpoConfig& cfg, const Environment& env, Rng& rng);

// Fraction of validation prompts where the candidate's draw strictly beats
// the previous policy's draw under rm_prev (ties and losses count zero).
double checkpoint_win_rate(const Policy& candidate, const Policy& pi_prev, const RewardModel& rm_prev,
                           std::span<const int> validation, double temperature, Rng& rng);

// Pure selection rule: argmax win rate (ties toward the latest checkpoint);
// halts when the max is strictly below tau.
std::pair<int, bool> pick_checkpoint(std::span<const double> win_rates, double tau);

SelectionResult select_model(std::span<const Checkpoint> checkpoints, const Policy& pi_prev,
                             const RewardModel& rm_prev, std::span<const int> validation, double tau,
                             double temperature, Rng& rng);

// One pseudo-pair per prompt: y_t from pi_t as chosen, y_prev from pi_prev as
// rejected; identical draws are dropped.
std::vector<PreferencePair> build_pseudo_pairs(const Policy& pi_t, const Policy& pi_prev,
                                               std::span<const int> prompts, double temperature, Rng& rng);

// Annotates each pair with the rm margin (chosen minus rejected).
std::vector<PreferencePair> compute_margins(std::vector<PreferencePair> pairs, const RewardModel& rm_prev);

// lqf drops margin <= -eps; hqs keeps margin >= +eps; dst relabels toward the
// higher-scored response (ties dropped); none keeps everything.
std::vector<PreferencePair> filter_pairs(std::span<const PreferencePair> pairs, double epsilon,
                                         FilterStrategy strategy);

std::vector<PreferencePair> assemble_rm_data(std::span<const PreferencePair> policy_comparison,
                                             std::span<const PreferencePair> self_training, RmDataMode mode);

// M-step: retrain from the base reward model (never from the previous iterate).
RewardModel m_step(const RewardModel& base_rm, std::span<const PreferencePair> rm_data, const BtConfig& cfg);

struct RunResult {
    Policy policy;
    RewardModel rm;
    std::vector<IterationReport> reports;
    RunMetrics metrics;
};

// Test hook: lets a harness perturb the DPO settings of a single iteration
// (e.g. to induce degradation and exercise the halt rule). Never serialized.
using IterationHook = std::function<void(int round, int iteration, DpoConfig& dpo)>;

RunResult run(const Environment& env, const LoopConfig& cfg, uint64_t seed,
              const IterationHook* hook = nullptr);

// Matched-budget baseline: same schedule with the M-step removed and one
// extra policy iteration per round, all under the frozen base reward model.
RunResult run_fixed_rm(const Environment& env, const LoopConfig& cfg, uint64_t seed,
                       const IterationHook* hook = nullptr);

// Single DPO pass from the base models.
RunResult run_offline_dpo(const Environment& env, const LoopConfig& cfg, uint64_t seed);

}  // namespace mtsim
