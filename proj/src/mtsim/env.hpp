#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "grid.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace mtsim {

enum class AnnotationMode { kBtNoise, kNoiseFree };

struct EnvConfig {
    int num_prompts = 64;        // P
    int num_responses = 32;      // R
    double reward_scale = 1.0;   // std of ground-truth reward entries
    double pistar_temperature = 0.5;
    double base_alignment = 0.5;     // how much base-policy logits follow the true reward
    double base_noise_std = 0.5;
    int length_min = 5;
    int length_max = 50;
    double length_reward_correlation = 0.0;
    int init_rm_pairs_per_prompt = 6;  // N0
    AnnotationMode annotation = AnnotationMode::kBtNoise;
    std::array<double, 4> partition_fractions = {0.3, 0.3, 0.2, 0.2};
    uint64_t seed = 1;

    void validate() const;
};

// The synthetic world. Immutable once built; all randomness in construction
// flows from cfg.seed.
struct Environment {
    Matrix rstar;      // ground-truth reward, the judge oracle
    IntGrid lengths;
    std::vector<int> policy_split_1;   // D_1
    std::vector<int> policy_split_2;   // D_2
    std::vector<int> rm_split;         // D_R
    std::vector<int> validation_split; // D_MS
    Policy base_policy;
    RewardModel base_rm;
    EnvConfig config;

    int num_prompts() const { return rstar.rows; }
    int num_responses() const { return rstar.cols; }
    std::vector<int> all_prompts() const;

    void validate() const;
};

Environment build_environment(const EnvConfig& cfg);

// Latent optimal response distribution: Boltzmann over the true reward row.
std::vector<double> pistar(const Environment& env, int prompt);

// Human-annotator stand-in. Under bt-noise, y_a is labeled chosen with
// probability sigma(rstar gap); under noise-free the higher-rstar response
// wins, ties toward the smaller response id.
PreferencePair annotate(const Environment& env, int prompt, int y_a, int y_b, Rng& rng);

// Fits the base reward model on pairs sampled from the base policy. Responses
// the base policy rarely emits keep near-zero scores: the built-in
// distribution shift. Expects rstar, base_policy, and config to be populated.
RewardModel pretrain_base_rm(const Environment& env, Rng& rng);

// Largest-remainder split sizes for the four partitions.
std::array<int, 4> partition_sizes(int num_prompts, const std::array<double, 4>& fractions);

}  // namespace mtsim
