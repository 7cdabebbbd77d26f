#pragma once

#include <optional>
#include <span>
#include <vector>

#include "env.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "rng.hpp"

namespace mtsim {

struct IterationMetrics {
    double expected_true_reward = 0.0;
    double kl_to_pistar = 0.0;
    double true_win_vs_base = 0.0;
    double rm_accuracy_id = 0.0;
    double rm_accuracy_ood = 0.0;
};

struct TransferRecord {
    double reward_fresh_base = 0.0;      // untrained fresh policy, for reference
    double reward_with_base_rm = 0.0;
    double reward_with_iterated_rm = 0.0;
    double win_with_base_rm = 0.0;       // exact true win rate vs the fresh base
    double win_with_iterated_rm = 0.0;

    double reward_delta() const { return reward_with_iterated_rm - reward_with_base_rm; }
    double win_delta() const { return win_with_iterated_rm - win_with_base_rm; }
};

struct RunMetrics {
    std::vector<IterationMetrics> per_iteration;  // index 0 = base models
    std::optional<TransferRecord> transfer;
};

// Exact E_{x~prompts} E_{y~pi} [table(x,y)]; no sampling.
double expected_reward(const Policy& policy, const Matrix& reward_table, std::span<const int> prompts);

// Exact pairwise win rate of pi_a over pi_b under the true reward; ties count 1/2.
double true_win_rate_exact(const Policy& pi_a, const Policy& pi_b, const Environment& env,
                           std::span<const int> prompts);

// Win rate restricted to response pairs of equal length (length-controlled
// analog); prompts with no equal-length mass are skipped.
double true_win_rate_equal_length(const Policy& pi_a, const Policy& pi_b, const Environment& env,
                                  std::span<const int> prompts);

// Mean KL(pi(.|x) || pistar(.|x)) over prompts.
double kl_to_pistar(const Policy& policy, const Environment& env, std::span<const int> prompts);

enum class SampleDist { kPolicy, kUniform };

// Sampled pairwise accuracy of `rm` against the true reward. ID pairs come
// from `policy` at `temperature`; OOD pairs are uniform over responses.
// True-reward ties are discarded; an rm tie counts as a miss.
double rm_accuracy(const RewardModel& rm, const Environment& env, std::span<const int> prompts,
                   SampleDist dist, const Policy* policy, double temperature, int num_pairs, Rng& rng);

struct TransferConfig {
    double init_noise_std = 0.3;
    DpoConfig dpo;
};

// Trains a freshly initialized policy once under rm_base and once under
// rm_iterated with identical seeds, and reports how each trained policy
// scores against the true reward. Positive deltas mean the iterated reward
// model generalizes to a policy it never taught.
TransferRecord transfer_eval(const RewardModel& rm_iterated, const RewardModel& rm_base,
                             const Environment& env, const TransferConfig& cfg, uint64_t seed);

}  // namespace mtsim
