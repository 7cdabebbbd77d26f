#include "loop.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "mathutil.hpp"

namespace mtsim {

namespace {

// Substream tags, disjoint from the environment's. Frozen.
enum LoopStream : uint64_t { kEStepRng = 101, kSelectRng = 102, kPseudoRng = 103, kEpsRng = 104, kAccRng = 105 };

constexpr int kAccuracyPairs = 4096;

struct RunOptions {
    bool do_m_step = true;
    int policy_iters = 2;
};

IterationMetrics compute_metrics(const Policy& pi, const RewardModel& rm, const Environment& env,
                                 double sample_temperature, uint64_t seed, int round, int t) {
    std::vector<int> prompts = env.all_prompts();
    IterationMetrics m;
    m.expected_true_reward = expected_reward(pi, env.rstar, prompts);
    m.kl_to_pistar = kl_to_pistar(pi, env, prompts);
    m.true_win_vs_base = true_win_rate_exact(pi, env.base_policy, env, prompts);
    Rng rng_id(derive_seed(seed, {kAccRng, static_cast<uint64_t>(round), static_cast<uint64_t>(t), 1}));
    m.rm_accuracy_id =
        rm_accuracy(rm, env, prompts, SampleDist::kPolicy, &pi, sample_temperature, kAccuracyPairs, rng_id);
    Rng rng_ood(derive_seed(seed, {kAccRng, static_cast<uint64_t>(round), static_cast<uint64_t>(t), 2}));
    m.rm_accuracy_ood =
        rm_accuracy(rm, env, prompts, SampleDist::kUniform, nullptr, 1.0, kAccuracyPairs, rng_ood);
    return m;
}

RunResult run_impl(const Environment& env, const LoopConfig& cfg, uint64_t seed, const IterationHook* hook,
                   const RunOptions& opts) {
    cfg.validate();
    std::vector<int> prompts = env.all_prompts();

    Policy pi = env.base_policy;
    RewardModel rm = env.base_rm;
    Policy gen_pi = pi;      // data-generation models; diverge from the
    RewardModel gen_rm = rm; // trained lineage only in restart rounds

    RunResult result;
    result.metrics.per_iteration.push_back(
        compute_metrics(pi, rm, env, cfg.dpo.sample_temperature, seed, 0, 0));

    int global = 0;
    bool stopped = false;
    for (int round = 1; round <= cfg.rounds && !stopped; ++round) {
        if (round > 1) {
            gen_pi = pi;
            gen_rm = rm;
            if (cfg.round_init == RoundInit::kRestartFromBase) {
                pi = env.base_policy;
                rm = env.base_rm;
            }
        }

        std::vector<PreferencePair> self_training;
        for (int t = 1; t <= opts.policy_iters && !stopped; ++t) {
            ++global;
            uint64_t ur = static_cast<uint64_t>(round), ut = static_cast<uint64_t>(t);

            // At t=1 the previous-iteration models are the generation models;
            // afterwards the round's own lineage takes over.
            const Policy& sample_pi = (t == 1) ? gen_pi : pi;
            const RewardModel& judge_rm = (t == 1) ? gen_rm : rm;

            DpoConfig dpo = cfg.dpo;
            if (hook) (*hook)(round, t, dpo);

            Rng rng_e(derive_seed(seed, {kEStepRng, ur, ut}));
            auto pairs = build_estep_pairs(sample_pi, judge_rm, prompts, dpo, env, rng_e);
            if (pairs.empty()) {
                // Every prompt degenerated: the policy has converged past the
                // point where sampling yields comparisons. Nothing to train
                // on, so preserve the model and stop, like a failed tau test.
                IterationReport rep;
                rep.round = round;
                rep.iteration = t;
                rep.global_index = global;
                rep.halted = true;
                rep.metrics = result.metrics.per_iteration.back();
                result.metrics.per_iteration.push_back(rep.metrics);
                result.reports.push_back(rep);
                stopped = true;
                break;
            }
            auto checkpoints = train_dpo(pi, pairs, dpo);

            if (t == 1) {
                self_training = pairs;
                for (auto& p : self_training) p.source = PairSource::kSelfTraining;
            }

            Rng rng_s(derive_seed(seed, {kSelectRng, ur, ut}));
            SelectionResult sel = select_model(checkpoints, pi, judge_rm, prompts, cfg.tau,
                                               cfg.dpo.sample_temperature, rng_s);

            IterationReport rep;
            rep.round = round;
            rep.iteration = t;
            rep.global_index = global;
            rep.win_rate = sel.win_rate;
            rep.halted = sel.halted;
            rep.selected_step = sel.step;

            if (sel.halted) {
                // Previous model preserved; the run ends here.
                rep.metrics = result.metrics.per_iteration.back();
                result.metrics.per_iteration.push_back(rep.metrics);
                result.reports.push_back(rep);
                stopped = true;
                break;
            }

            Policy prev = sample_pi;  // copy before the lineage moves on
            pi = std::move(sel.selected);

            if (opts.do_m_step && t == 1) {
                Rng rng_p(derive_seed(seed, {kPseudoRng, ur}));
                auto pseudo = build_pseudo_pairs(pi, prev, prompts, cfg.dpo.sample_temperature, rng_p);
                rep.pairs_built = static_cast<int>(pseudo.size());

                // Variance-aware threshold: one fresh pre-update draw per prompt.
                Rng rng_eps(derive_seed(seed, {kEpsRng, ur}));
                std::vector<std::pair<int, int>> eps_samples;
                eps_samples.reserve(prompts.size());
                for (int x : prompts)
                    eps_samples.emplace_back(x,
                                             sample_response(prev, x, cfg.dpo.sample_temperature, rng_eps));
                double epsilon = reward_std(judge_rm, eps_samples);
                rep.epsilon = epsilon;

                pseudo = compute_margins(std::move(pseudo), judge_rm);
                auto kept = filter_pairs(pseudo, epsilon, cfg.filter);
                auto kept_lqf = filter_pairs(pseudo, epsilon, FilterStrategy::kLqf);
                auto kept_hqs = filter_pairs(pseudo, epsilon, FilterStrategy::kHqs);
                rep.pairs_kept = static_cast<int>(kept.size());
                rep.pairs_kept_lqf = static_cast<int>(kept_lqf.size());
                rep.pairs_kept_hqs = static_cast<int>(kept_hqs.size());
                for (const auto& p : kept_hqs) {
                    bool in_lqf = *p.margin > -epsilon || (epsilon == 0.0 && *p.margin == 0.0);
                    if (!in_lqf) throw std::logic_error("filter invariant violated: hqs kept outside lqf");
                }

                auto rm_pairs = assemble_rm_data(kept, self_training, cfg.rm_data);
                rep.rm_pairs_total = static_cast<int>(rm_pairs.size());
                RewardModel before = env.base_rm;
                before.l2_lambda = cfg.bt.l2_lambda;
                rep.rm_nll_before = bt_nll(before, rm_pairs);
                rm = m_step(env.base_rm, rm_pairs, cfg.bt);
                rep.rm_nll_after = bt_nll(rm, rm_pairs);
            }

            rep.metrics = compute_metrics(pi, rm, env, cfg.dpo.sample_temperature, seed, round, t);
            result.metrics.per_iteration.push_back(rep.metrics);
            result.reports.push_back(rep);
        }
    }

    result.policy = std::move(pi);
    result.rm = std::move(rm);
    return result;
}

}  // namespace

void LoopConfig::validate() const {
    if (iterations_per_round < 1) throw std::invalid_argument("LoopConfig: iterations_per_round must be >= 1");
    if (rounds < 1) throw std::invalid_argument("LoopConfig: rounds must be >= 1");
    if (!(tau >= 0.5 && tau < 1.0)) throw std::invalid_argument("LoopConfig: tau must be in [0.5, 1)");
    dpo.validate();
    bt.validate();
}

EStepResult e_step(const Policy& pi_prev, const RewardModel& rm_prev, std::span<const int> prompts,
                   const DpoConfig& cfg, const Environment& env, Rng& rng) {
    if (prompts.empty()) throw std::invalid_argument("e_step: empty prompt set");
    EStepResult res;
    res.pairs = build_estep_pairs(pi_prev, rm_prev, prompts, cfg, env, rng);
    if (res.pairs.empty()) throw std::runtime_error("e_step: no pairs (all prompts degenerate)");
    res.checkpoints = train_dpo(pi_prev, res.pairs, cfg);
    return res;
}

double checkpoint_win_rate(const Policy& candidate, const Policy& pi_prev, const RewardModel& rm_prev,
                           std::span<const int> validation, double temperature, Rng& rng) {
    if (validation.empty()) throw std::invalid_argument("checkpoint_win_rate: empty validation set");
    int wins = 0;
    std::vector<double> prev_probs;
    for (int x : validation) {
        int y_k = sample_response(candidate, x, temperature, rng);
        // Over a continuous response space two independent draws never
        // coincide; over a small finite set they frequently would, which
        // says nothing about relative quality. Draw the comparison response
        // conditioned to differ. A one-response world still forces the tie.
        softmax_into(pi_prev.logits.row(x), temperature, prev_probs);
        int y_prev = y_k;
        if (prev_probs.size() > 1) {
            double excluded = prev_probs[y_k];
            prev_probs[y_k] = 0.0;
            double mass = 1.0 - excluded;
            if (mass > 0.0)
                for (double& p : prev_probs) p /= mass;
            else
                prev_probs[y_k == 0 ? 1 : 0] = 1.0;  // point mass on y_k: any other id
            y_prev = rng.categorical(prev_probs);
        }
        if (rm_prev.scores(x, y_k) > rm_prev.scores(x, y_prev)) ++wins;
    }
    return static_cast<double>(wins) / static_cast<double>(validation.size());
}

std::pair<int, bool> pick_checkpoint(std::span<const double> win_rates, double tau) {
    if (win_rates.empty()) throw std::invalid_argument("pick_checkpoint: no checkpoints");
    int best = 0;
    for (int i = 1; i < static_cast<int>(win_rates.size()); ++i)
        if (win_rates[i] >= win_rates[best]) best = i;  // ties toward the latest step
    return {best, win_rates[best] < tau};
}

SelectionResult select_model(std::span<const Checkpoint> checkpoints, const Policy& pi_prev,
                             const RewardModel& rm_prev, std::span<const int> validation, double tau,
                             double temperature, Rng& rng) {
    std::vector<double> wins;
    wins.reserve(checkpoints.size());
    for (const auto& ck : checkpoints)
        wins.push_back(checkpoint_win_rate(ck.policy, pi_prev, rm_prev, validation, temperature, rng));
    auto [best, halted] = pick_checkpoint(wins, tau);
    SelectionResult res;
    res.win_rate = wins[best];
    res.halted = halted;
    if (halted) {
        res.selected = pi_prev;
        res.step = 0;
    } else {
        res.selected = checkpoints[best].policy;
        res.step = checkpoints[best].step;
    }
    return res;
}

std::vector<PreferencePair> build_pseudo_pairs(const Policy& pi_t, const Policy& pi_prev,
                                               std::span<const int> prompts, double temperature, Rng& rng) {
    if (prompts.empty()) throw std::invalid_argument("build_pseudo_pairs: empty prompt set");
    std::vector<PreferencePair> out;
    out.reserve(prompts.size());
    for (int x : prompts) {
        int y_t = sample_response(pi_t, x, temperature, rng);
        int y_prev = sample_response(pi_prev, x, temperature, rng);
        if (y_t == y_prev) continue;
        out.push_back({x, y_t, y_prev, PairSource::kPolicyComparison, std::nullopt});
    }
    return out;
}

std::vector<PreferencePair> compute_margins(std::vector<PreferencePair> pairs, const RewardModel& rm_prev) {
    for (auto& p : pairs) {
        if (p.margin.has_value()) throw std::invalid_argument("compute_margins: margin already set");
        p.margin = rm_prev.scores(p.prompt, p.chosen) - rm_prev.scores(p.prompt, p.rejected);
    }
    return pairs;
}

std::vector<PreferencePair> filter_pairs(std::span<const PreferencePair> pairs, double epsilon,
                                         FilterStrategy strategy) {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("filter_pairs: epsilon must be >= 0");
    std::vector<PreferencePair> out;
    out.reserve(pairs.size());
    if (strategy == FilterStrategy::kNone) {
        out.assign(pairs.begin(), pairs.end());
        return out;
    }
    for (const auto& p : pairs) {
        if (!p.margin.has_value()) throw std::invalid_argument("filter_pairs: margin not set");
        double m = *p.margin;
        switch (strategy) {
            case FilterStrategy::kLqf:
                if (m > -epsilon) out.push_back(p);
                break;
            case FilterStrategy::kHqs:
                if (m >= epsilon) out.push_back(p);
                break;
            case FilterStrategy::kDst: {
                if (m == 0.0) break;  // tie: no label to trust
                PreferencePair q = p;
                if (m < 0.0) {
                    std::swap(q.chosen, q.rejected);
                    q.margin = -m;
                }
                out.push_back(q);
                break;
            }
            case FilterStrategy::kNone:
                break;
        }
    }
    return out;
}

std::vector<PreferencePair> assemble_rm_data(std::span<const PreferencePair> policy_comparison,
                                             std::span<const PreferencePair> self_training,
                                             RmDataMode mode) {
    std::vector<PreferencePair> out;
    switch (mode) {
        case RmDataMode::kPolicyComparison:
            if (policy_comparison.empty())
                throw std::invalid_argument("assemble_rm_data: policy-comparison source is empty");
            out.assign(policy_comparison.begin(), policy_comparison.end());
            break;
        case RmDataMode::kSelfTraining:
            if (self_training.empty())
                throw std::invalid_argument("assemble_rm_data: self-training source is empty");
            out.assign(self_training.begin(), self_training.end());
            break;
        case RmDataMode::kMixed:
            if (policy_comparison.empty() && self_training.empty())
                throw std::invalid_argument("assemble_rm_data: both sources are empty");
            out.assign(policy_comparison.begin(), policy_comparison.end());
            out.insert(out.end(), self_training.begin(), self_training.end());
            break;
    }
    return out;
}

RewardModel m_step(const RewardModel& base_rm, std::span<const PreferencePair> rm_data, const BtConfig& cfg) {
    if (rm_data.empty()) throw std::invalid_argument("m_step: empty rm data");
    return train_bt(base_rm, rm_data, cfg);
}

RunResult run(const Environment& env, const LoopConfig& cfg, uint64_t seed, const IterationHook* hook) {
    return run_impl(env, cfg, seed, hook, {true, cfg.iterations_per_round});
}

RunResult run_fixed_rm(const Environment& env, const LoopConfig& cfg, uint64_t seed,
                       const IterationHook* hook) {
    return run_impl(env, cfg, seed, hook, {false, cfg.iterations_per_round + 1});
}

RunResult run_offline_dpo(const Environment& env, const LoopConfig& cfg, uint64_t seed) {
    LoopConfig single = cfg;
    single.rounds = 1;
    return run_impl(env, single, seed, nullptr, {false, 1});
}

}  // namespace mtsim
