#include "eval.hpp"

#include <cmath>
#include <stdexcept>

#include "mathutil.hpp"

namespace mtsim {

double expected_reward(const Policy& policy, const Matrix& reward_table, std::span<const int> prompts) {
    if (prompts.empty()) throw std::invalid_argument("expected_reward: empty prompt set");
    double total = 0.0;
    for (int x : prompts) {
        std::vector<double> probs = policy_probs(policy, x);
        double e = 0.0;
        for (int y = 0; y < reward_table.cols; ++y) e += probs[y] * reward_table(x, y);
        total += e;
    }
    return total / static_cast<double>(prompts.size());
}

double true_win_rate_exact(const Policy& pi_a, const Policy& pi_b, const Environment& env,
                           std::span<const int> prompts) {
    if (prompts.empty()) throw std::invalid_argument("true_win_rate_exact: empty prompt set");
    double total = 0.0;
    for (int x : prompts) {
        std::vector<double> pa = policy_probs(pi_a, x);
        std::vector<double> pb = policy_probs(pi_b, x);
        double w = 0.0;
        for (int y = 0; y < env.num_responses(); ++y) {
            for (int y2 = 0; y2 < env.num_responses(); ++y2) {
                double ra = env.rstar(x, y), rb = env.rstar(x, y2);
                if (ra > rb)
                    w += pa[y] * pb[y2];
                else if (ra == rb)
                    w += 0.5 * pa[y] * pb[y2];
            }
        }
        total += w;
    }
    return total / static_cast<double>(prompts.size());
}

double true_win_rate_equal_length(const Policy& pi_a, const Policy& pi_b, const Environment& env,
                                  std::span<const int> prompts) {
    if (prompts.empty()) throw std::invalid_argument("true_win_rate_equal_length: empty prompt set");
    double total = 0.0;
    int counted = 0;
    for (int x : prompts) {
        std::vector<double> pa = policy_probs(pi_a, x);
        std::vector<double> pb = policy_probs(pi_b, x);
        double w = 0.0, mass = 0.0;
        for (int y = 0; y < env.num_responses(); ++y) {
            for (int y2 = 0; y2 < env.num_responses(); ++y2) {
                if (env.lengths(x, y) != env.lengths(x, y2)) continue;
                double m = pa[y] * pb[y2];
                mass += m;
                double ra = env.rstar(x, y), rb = env.rstar(x, y2);
                if (ra > rb)
                    w += m;
                else if (ra == rb)
                    w += 0.5 * m;
            }
        }
        if (mass > 0.0) {
            total += w / mass;
            ++counted;
        }
    }
    if (counted == 0) return 0.5;
    return total / counted;
}

double kl_to_pistar(const Policy& policy, const Environment& env, std::span<const int> prompts) {
    if (prompts.empty()) throw std::invalid_argument("kl_to_pistar: empty prompt set");
    double total = 0.0;
    for (int x : prompts) {
        auto row = policy.logits.row(x);
        double lse = logsumexp(row);
        std::vector<double> pstar = pistar(env, x);
        double kl = 0.0;
        for (int y = 0; y < env.num_responses(); ++y) {
            double lp = row[y] - lse;
            kl += std::exp(lp) * (lp - std::log(pstar[y]));
        }
        total += kl;
    }
    return std::max(0.0, total / static_cast<double>(prompts.size()));
}

double rm_accuracy(const RewardModel& rm, const Environment& env, std::span<const int> prompts,
                   SampleDist dist, const Policy* policy, double temperature, int num_pairs, Rng& rng) {
    if (num_pairs < 1) throw std::invalid_argument("rm_accuracy: num_pairs must be >= 1");
    if (prompts.empty()) throw std::invalid_argument("rm_accuracy: empty prompt set");
    if (dist == SampleDist::kPolicy && policy == nullptr)
        throw std::invalid_argument("rm_accuracy: policy distribution requires a policy");
    int valid = 0, correct = 0;
    long attempts = 0;
    const long max_attempts = 50L * num_pairs;
    while (valid < num_pairs && attempts < max_attempts) {
        ++attempts;
        int x = prompts[rng.uniform_below(prompts.size())];
        int y1, y2;
        if (dist == SampleDist::kPolicy) {
            y1 = sample_response(*policy, x, temperature, rng);
            y2 = sample_response(*policy, x, temperature, rng);
        } else {
            y1 = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(env.num_responses())));
            y2 = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(env.num_responses())));
        }
        double true_margin = env.rstar(x, y1) - env.rstar(x, y2);
        if (true_margin == 0.0) continue;  // includes y1 == y2
        ++valid;
        double rm_margin = rm.scores(x, y1) - rm.scores(x, y2);
        // Strict sign match; an rm tie is a miss.
        if ((true_margin > 0.0 && rm_margin > 0.0) || (true_margin < 0.0 && rm_margin < 0.0)) ++correct;
    }
    if (valid == 0) return 0.5;
    return static_cast<double>(correct) / static_cast<double>(valid);
}

TransferRecord transfer_eval(const RewardModel& rm_iterated, const RewardModel& rm_base,
                             const Environment& env, const TransferConfig& cfg, uint64_t seed) {
    cfg.dpo.validate();
    Policy fresh;
    fresh.logits = Matrix(env.num_prompts(), env.num_responses());
    Rng rng_init(derive_seed(seed, {1}));
    for (double& v : fresh.logits.data) v = cfg.init_noise_std * rng_init.normal();

    std::vector<int> prompts = env.all_prompts();
    uint64_t pass_seed = derive_seed(seed, {2});

    // One DPO pass per arm with an identical stream, so the only difference
    // between the arms is which reward model ranks the samples.
    auto train_with = [&](const RewardModel& rm) -> Policy {
        Rng rng(pass_seed);
        auto pairs = build_estep_pairs(fresh, rm, prompts, cfg.dpo, env, rng);
        if (pairs.empty()) return fresh;
        auto ckpts = train_dpo(fresh, pairs, cfg.dpo);
        return ckpts.back().policy;
    };
    Policy with_base = train_with(rm_base);
    Policy with_iterated = train_with(rm_iterated);

    TransferRecord rec;
    rec.reward_fresh_base = expected_reward(fresh, env.rstar, prompts);
    rec.reward_with_base_rm = expected_reward(with_base, env.rstar, prompts);
    rec.reward_with_iterated_rm = expected_reward(with_iterated, env.rstar, prompts);
    rec.win_with_base_rm = true_win_rate_exact(with_base, fresh, env, prompts);
    rec.win_with_iterated_rm = true_win_rate_exact(with_iterated, fresh, env, prompts);
    return rec;
}

}  // namespace mtsim
