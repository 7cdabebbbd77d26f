#pragma once

#include <span>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "types.hpp"

namespace mtsim {

// Tabular reward model: one score per (prompt, response). Identifiable only
// up to a per-prompt constant through the Bradley-Terry likelihood; the L2
// term anchors unobserved entries at zero.
struct RewardModel {
    Matrix scores;
    double l2_lambda = 1e-3;
};

struct BtConfig {
    double learning_rate = 2.0;
    int steps = 300;
    double l2_lambda = 1e-3;

    void validate() const;
};

// P(chosen beats rejected) = sigma(r_w - r_l), Eq. of the Bradley-Terry model.
double bt_prob(double r_w, double r_l);

// Mean negative Bradley-Terry log-likelihood plus l2_lambda * ||scores||^2 / (P*R).
double bt_nll(const RewardModel& rm, std::span<const PreferencePair> pairs);

// Exact gradient of bt_nll with respect to every score entry.
Matrix bt_grad(const RewardModel& rm, std::span<const PreferencePair> pairs);

// Full-batch gradient descent on bt_nll starting from `init`. The objective
// is convex in the score table. Aborts if the loss goes non-finite.
RewardModel train_bt(const RewardModel& init, std::span<const PreferencePair> pairs, const BtConfig& cfg);

// Population standard deviation of rm scores over the given samples.
double reward_std(const RewardModel& rm, std::span<const std::pair<int, int>> samples);

}  // namespace mtsim
