#include "reward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mathutil.hpp"

namespace mtsim {

void BtConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("BtConfig: learning_rate must be >= 0");
    if (steps < 1) throw std::invalid_argument("BtConfig: steps must be >= 1");
    if (l2_lambda < 0.0) throw std::invalid_argument("BtConfig: l2_lambda must be >= 0");
}

double bt_prob(double r_w, double r_l) {
    if (!std::isfinite(r_w) || !std::isfinite(r_l)) throw std::invalid_argument("bt_prob: non-finite input");
    return sigmoid(r_w - r_l);
}

double bt_nll(const RewardModel& rm, std::span<const PreferencePair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("bt_nll: empty pair list");
    double loss = 0.0;
    for (const auto& p : pairs) {
        double m = rm.scores(p.prompt, p.chosen) - rm.scores(p.prompt, p.rejected);
        loss += softplus(-m);
    }
    loss /= static_cast<double>(pairs.size());
    if (rm.l2_lambda > 0.0) {
        double sq = 0.0;
        for (double s : rm.scores.data) sq += s * s;
        loss += rm.l2_lambda * sq / static_cast<double>(rm.scores.data.size());
    }
    return loss;
}

Matrix bt_grad(const RewardModel& rm, std::span<const PreferencePair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("bt_grad: empty pair list");
    Matrix g(rm.scores.rows, rm.scores.cols, 0.0);
    double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        double m = rm.scores(p.prompt, p.chosen) - rm.scores(p.prompt, p.rejected);
        double coeff = (1.0 - sigmoid(m)) * inv_n;  // d softplus(-m)/dm = -(1 - sigma(m))
        g(p.prompt, p.chosen) -= coeff;
        g(p.prompt, p.rejected) += coeff;
    }
    if (rm.l2_lambda > 0.0) {
        double scale = 2.0 * rm.l2_lambda / static_cast<double>(rm.scores.data.size());
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * rm.scores.data[i];
    }
    return g;
}

RewardModel train_bt(const RewardModel& init, std::span<const PreferencePair> pairs, const BtConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train_bt: empty pair list");
    RewardModel rm = init;
    rm.l2_lambda = cfg.l2_lambda;
    for (int step = 0; step < cfg.steps; ++step) {
        Matrix g = bt_grad(rm, pairs);
        for (size_t i = 0; i < rm.scores.data.size(); ++i) rm.scores.data[i] -= cfg.learning_rate * g.data[i];
        double loss = bt_nll(rm, pairs);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_bt: non-finite loss at step " + std::to_string(step + 1));
    }
    return rm;
}

double reward_std(const RewardModel& rm, std::span<const std::pair<int, int>> samples) {
    if (samples.empty()) throw std::invalid_argument("reward_std: empty sample list");
    double mean = 0.0;
    for (const auto& [x, y] : samples) mean += rm.scores(x, y);
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& [x, y] : samples) {
        double d = rm.scores(x, y) - mean;
        var += d * d;
    }
    var /= static_cast<double>(samples.size());
    return std::sqrt(var);
}

}  // namespace mtsim
