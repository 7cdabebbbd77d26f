#pragma once

#include <optional>
#include <span>
#include <vector>

#include "grid.hpp"
#include "reward.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace mtsim {

struct Environment;  // env.hpp; needed for response lengths in pair building

// Tabular softmax policy: row x of `logits` defines pi(.|x).
struct Policy {
    Matrix logits;
};

enum class PairSelection { kLengthControlled, kBestVsWorst };

struct DpoConfig {
    double beta = 0.1;
    double learning_rate = 30.0;
    int steps = 200;
    int checkpoint_every = 50;
    double sample_temperature = 0.8;
    int samples_per_prompt = 5;  // M
    PairSelection pair_selection = PairSelection::kLengthControlled;

    void validate() const;
};

struct Checkpoint {
    Policy policy;
    int step = 0;
};

std::vector<double> policy_probs(const Policy& policy, int prompt, double temperature = 1.0);

int sample_response(const Policy& policy, int prompt, double temperature, Rng& rng);

double log_prob(const Policy& policy, int prompt, int response);

// -ln sigma(beta * [(log pi/ref)(y_w) - (log pi/ref)(y_l)]); ln 2 at policy == reference.
double dpo_loss(const Policy& policy, const Policy& reference, const PreferencePair& pair, double beta);

// Gradient of the mean dpo_loss over `pairs` with respect to every logit.
// Rows of prompts absent from the pair list are zero.
Matrix dpo_grad(const Policy& policy, const Policy& reference, std::span<const PreferencePair> pairs,
                double beta);

// Pair selection rule applied to one prompt's M sampled responses.
// `samples` holds response ids per draw (duplicates allowed); `scores` and
// `lengths` are aligned per draw. Returns (chosen, rejected) response ids or
// nullopt when the prompt degenerates (all draws identical, nothing strictly
// above the mean score, or chosen would equal rejected).
std::optional<std::pair<int, int>> select_estep_pair(std::span<const int> samples,
                                                     std::span<const double> scores,
                                                     std::span<const int> lengths, PairSelection mode);

// Per prompt: sample M responses from `policy`, score them with `rm`, apply
// the selection rule, and emit an e-step tagged pair. Degenerate prompts are
// skipped, so the result may be shorter than `prompts`.
std::vector<PreferencePair> build_estep_pairs(const Policy& policy, const RewardModel& rm,
                                              std::span<const int> prompts, const DpoConfig& cfg,
                                              const Environment& env, Rng& rng);

// Full-batch gradient descent on the mean DPO loss, starting at `reference`.
// Records a checkpoint every checkpoint_every steps and at the final step.
std::vector<Checkpoint> train_dpo(const Policy& reference, std::span<const PreferencePair> pairs,
                                  const DpoConfig& cfg);

}  // namespace mtsim
