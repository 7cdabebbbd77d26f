#include "policy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "env.hpp"
#include "mathutil.hpp"

namespace mtsim {

void DpoConfig::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("DpoConfig: beta must be > 0");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("DpoConfig: learning_rate must be >= 0");
    if (steps < 1) throw std::invalid_argument("DpoConfig: steps must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("DpoConfig: checkpoint_every must be >= 1");
    if (checkpoint_every > steps) throw std::invalid_argument("DpoConfig: checkpoint_every must be <= steps");
    if (!(sample_temperature > 0.0)) throw std::invalid_argument("DpoConfig: sample_temperature must be > 0");
    if (samples_per_prompt < 2) throw std::invalid_argument("DpoConfig: samples_per_prompt must be >= 2");
}

std::vector<double> policy_probs(const Policy& policy, int prompt, double temperature) {
    return softmax(policy.logits.row(prompt), temperature);
}

int sample_response(const Policy& policy, int prompt, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
    std::vector<double> probs = policy_probs(policy, prompt, temperature);
    return rng.categorical(probs);
}

double log_prob(const Policy& policy, int prompt, int response) {
    auto row = policy.logits.row(prompt);
    return row[response] - logsumexp(row);
}

double dpo_loss(const Policy& policy, const Policy& reference, const PreferencePair& pair, double beta) {
    double z = (log_prob(policy, pair.prompt, pair.chosen) - log_prob(reference, pair.prompt, pair.chosen)) -
               (log_prob(policy, pair.prompt, pair.rejected) - log_prob(reference, pair.prompt, pair.rejected));
    return softplus(-beta * z);
}

Matrix dpo_grad(const Policy& policy, const Policy& reference, std::span<const PreferencePair> pairs,
                double beta) {
    if (pairs.empty()) throw std::invalid_argument("dpo_grad: empty pair list");
    Matrix g(policy.logits.rows, policy.logits.cols, 0.0);
    double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        double z =
            (log_prob(policy, p.prompt, p.chosen) - log_prob(reference, p.prompt, p.chosen)) -
            (log_prob(policy, p.prompt, p.rejected) - log_prob(reference, p.prompt, p.rejected));
        // d/dlogit[x][j] of z is 1{j=w} - 1{j=l}: the softmax terms of the
        // chosen and rejected log-probs cancel within the same row.
        double coeff = beta * sigmoid(-beta * z) * inv_n;
        g(p.prompt, p.chosen) -= coeff;
        g(p.prompt, p.rejected) += coeff;
    }
    return g;
}

std::optional<std::pair<int, int>> select_estep_pair(std::span<const int> samples,
                                                     std::span<const double> scores,
                                                     std::span<const int> lengths, PairSelection mode) {
    size_t n = samples.size();
    if (n < 2 || scores.size() != n || lengths.size() != n)
        throw std::invalid_argument("select_estep_pair: bad sample arrays");

    bool all_same = true;
    for (size_t i = 1; i < n; ++i)
        if (samples[i] != samples[0]) all_same = false;
    if (all_same) return std::nullopt;

    // Lowest score, ties toward the smaller response id.
    size_t lo = 0;
    for (size_t i = 1; i < n; ++i) {
        if (scores[i] < scores[lo] || (scores[i] == scores[lo] && samples[i] < samples[lo])) lo = i;
    }
    int rejected = samples[lo];

    int chosen = -1;
    if (mode == PairSelection::kBestVsWorst) {
        size_t hi = 0;
        for (size_t i = 1; i < n; ++i) {
            if (scores[i] > scores[hi] || (scores[i] == scores[hi] && samples[i] < samples[hi])) hi = i;
        }
        chosen = samples[hi];
    } else {
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= static_cast<double>(n);
        // Shortest response strictly above the mean score; equal lengths break
        // toward the smaller response id. No draw above the mean -> no pair.
        size_t best = n;
        for (size_t i = 0; i < n; ++i) {
            if (!(scores[i] > mean)) continue;
            if (best == n || lengths[i] < lengths[best] ||
                (lengths[i] == lengths[best] && samples[i] < samples[best]))
                best = i;
        }
        if (best == n) return std::nullopt;
        chosen = samples[best];
    }

    if (chosen == rejected) return std::nullopt;
    return std::make_pair(chosen, rejected);
}

std::vector<PreferencePair> build_estep_pairs(const Policy& policy, const RewardModel& rm,
                                              std::span<const int> prompts, const DpoConfig& cfg,
                                              const Environment& env, Rng& rng) {
    cfg.validate();
    std::vector<PreferencePair> out;
    out.reserve(prompts.size());
    int m = cfg.samples_per_prompt;
    std::vector<int> samples(m);
    std::vector<double> scores(m);
    std::vector<int> lengths(m);
    for (int x : prompts) {
        for (int i = 0; i < m; ++i) {
            int y = sample_response(policy, x, cfg.sample_temperature, rng);
            samples[i] = y;
            scores[i] = rm.scores(x, y);
            lengths[i] = env.lengths(x, y);
        }
        auto sel = select_estep_pair(samples, scores, lengths, cfg.pair_selection);
        if (!sel) continue;
        out.push_back({x, sel->first, sel->second, PairSource::kEStep, std::nullopt});
    }
    return out;
}

std::vector<Checkpoint> train_dpo(const Policy& reference, std::span<const PreferencePair> pairs,
                                  const DpoConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train_dpo: empty pair list");
    Policy policy = reference;
    std::vector<Checkpoint> checkpoints;
    for (int step = 1; step <= cfg.steps; ++step) {
        Matrix g = dpo_grad(policy, reference, pairs, cfg.beta);
        for (size_t i = 0; i < policy.logits.data.size(); ++i)
            policy.logits.data[i] -= cfg.learning_rate * g.data[i];

        double loss = 0.0;
        for (const auto& p : pairs) loss += dpo_loss(policy, reference, p, cfg.beta);
        loss /= static_cast<double>(pairs.size());
        if (!std::isfinite(loss))
            throw std::runtime_error("train_dpo: non-finite loss at step " + std::to_string(step));

        if (step % cfg.checkpoint_every == 0 || step == cfg.steps) checkpoints.push_back({policy, step});
    }
    return checkpoints;
}

}  // namespace mtsim
