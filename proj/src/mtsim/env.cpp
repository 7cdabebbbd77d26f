#include "env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mathutil.hpp"

namespace mtsim {

namespace {

// Substream tags for environment construction. Frozen: reordering would
// change every generated world.
enum EnvStream : uint64_t { kRstar = 1, kLengths = 2, kPartitions = 3, kBaseNoise = 4, kPretrain = 5 };

// Base reward model trainer settings. EnvConfig deliberately does not expose
// these; N0 is the knob that controls how much the base RM knows.
constexpr double kPretrainLr = 1.0;
constexpr int kPretrainSteps = 400;
constexpr double kPretrainLambda = 1e-3;

}  // namespace

void EnvConfig::validate() const {
    if (num_prompts < 1) throw std::invalid_argument("EnvConfig: num_prompts must be >= 1");
    if (num_responses < 1) throw std::invalid_argument("EnvConfig: num_responses must be >= 1");
    if (!(reward_scale > 0.0)) throw std::invalid_argument("EnvConfig: reward_scale must be > 0");
    if (!(pistar_temperature > 0.0)) throw std::invalid_argument("EnvConfig: pistar_temperature must be > 0");
    if (base_alignment < 0.0) throw std::invalid_argument("EnvConfig: base_alignment must be >= 0");
    if (base_noise_std < 0.0) throw std::invalid_argument("EnvConfig: base_noise_std must be >= 0");
    if (length_min < 1 || length_max < 1 || length_min > length_max)
        throw std::invalid_argument("EnvConfig: need 1 <= length_min <= length_max");
    if (length_reward_correlation < -1.0 || length_reward_correlation > 1.0)
        throw std::invalid_argument("EnvConfig: length_reward_correlation must be in [-1, 1]");
    if (init_rm_pairs_per_prompt < 0)
        throw std::invalid_argument("EnvConfig: init_rm_pairs_per_prompt must be >= 0");
    double sum = 0.0;
    for (double f : partition_fractions) {
        if (f < 0.0) throw std::invalid_argument("EnvConfig: partition fractions must be >= 0");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("EnvConfig: partition fractions must sum to 1");
    for (int sz : partition_sizes(num_prompts, partition_fractions))
        if (sz < 1) throw std::invalid_argument("EnvConfig: every partition must be nonempty after rounding");
}

std::vector<int> Environment::all_prompts() const {
    std::vector<int> out(static_cast<size_t>(num_prompts()));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

void Environment::validate() const {
    if (!rstar.all_finite()) throw std::invalid_argument("Environment: rstar has non-finite entries");
    if (!lengths.same_shape(IntGrid(rstar.rows, rstar.cols)))
        throw std::invalid_argument("Environment: lengths shape mismatch");
    for (int v : lengths.data)
        if (v < config.length_min || v > config.length_max)
            throw std::invalid_argument("Environment: length out of range");
    std::vector<int> seen(static_cast<size_t>(rstar.rows), 0);
    for (const auto* split : {&policy_split_1, &policy_split_2, &rm_split, &validation_split}) {
        for (int x : *split) {
            if (x < 0 || x >= rstar.rows) throw std::invalid_argument("Environment: partition id out of range");
            if (seen[x]++) throw std::invalid_argument("Environment: partitions overlap");
        }
    }
    for (int c : seen)
        if (c != 1) throw std::invalid_argument("Environment: partitions do not cover all prompts");
}

std::array<int, 4> partition_sizes(int num_prompts, const std::array<double, 4>& fractions) {
    std::array<int, 4> sizes{};
    std::array<double, 4> remainders{};
    int assigned = 0;
    for (int i = 0; i < 4; ++i) {
        double exact = num_prompts * fractions[i];
        sizes[i] = static_cast<int>(std::floor(exact));
        remainders[i] = exact - sizes[i];
        assigned += sizes[i];
    }
    int leftover = num_prompts - assigned;
    std::array<int, 4> order = {0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (int k = 0; k < leftover; ++k) sizes[order[k % 4]] += 1;
    return sizes;
}

std::vector<double> pistar(const Environment& env, int prompt) {
    if (prompt < 0 || prompt >= env.num_prompts()) throw std::invalid_argument("pistar: bad prompt id");
    return softmax(env.rstar.row(prompt), env.config.pistar_temperature);
}

PreferencePair annotate(const Environment& env, int prompt, int y_a, int y_b, Rng& rng) {
    if (y_a == y_b) throw std::invalid_argument("annotate: responses must differ");
    double gap = env.rstar(prompt, y_a) - env.rstar(prompt, y_b);
    bool a_chosen;
    if (env.config.annotation == AnnotationMode::kBtNoise) {
        a_chosen = rng.uniform01() < sigmoid(gap);
    } else {
        a_chosen = gap > 0.0 || (gap == 0.0 && y_a < y_b);
    }
    PreferencePair p;
    p.prompt = prompt;
    p.chosen = a_chosen ? y_a : y_b;
    p.rejected = a_chosen ? y_b : y_a;
    p.source = PairSource::kInit;
    return p;
}

RewardModel pretrain_base_rm(const Environment& env, Rng& rng) {
    RewardModel zero{Matrix(env.rstar.rows, env.rstar.cols, 0.0), kPretrainLambda};
    std::vector<PreferencePair> pairs;
    pairs.reserve(static_cast<size_t>(env.rstar.rows) * env.config.init_rm_pairs_per_prompt);
    for (int x = 0; x < env.rstar.rows; ++x) {
        for (int n = 0; n < env.config.init_rm_pairs_per_prompt; ++n) {
            int y_a = sample_response(env.base_policy, x, 1.0, rng);
            int y_b = sample_response(env.base_policy, x, 1.0, rng);
            if (y_a == y_b) continue;  // duplicate draw carries no comparison
            pairs.push_back(annotate(env, x, y_a, y_b, rng));
        }
    }
    if (pairs.empty()) return zero;
    BtConfig cfg{kPretrainLr, kPretrainSteps, kPretrainLambda};
    return train_bt(zero, pairs, cfg);
}

Environment build_environment(const EnvConfig& cfg) {
    cfg.validate();
    Environment env;
    env.config = cfg;
    int p = cfg.num_prompts;
    int r = cfg.num_responses;

    Rng rng_rstar(derive_seed(cfg.seed, {kRstar}));
    env.rstar = Matrix(p, r);
    for (double& v : env.rstar.data) v = cfg.reward_scale * rng_rstar.normal();

    // Lengths: per prompt, draw a pool of lengths and assign them so that the
    // rank order tracks corr * standardized(rstar) + sqrt(1-corr^2) * noise.
    Rng rng_len(derive_seed(cfg.seed, {kLengths}));
    env.lengths = IntGrid(p, r);
    double corr = cfg.length_reward_correlation;
    double noise_w = std::sqrt(std::max(0.0, 1.0 - corr * corr));
    std::vector<int> pool(static_cast<size_t>(r));
    std::vector<double> u(static_cast<size_t>(r));
    std::vector<int> order(static_cast<size_t>(r));
    for (int x = 0; x < p; ++x) {
        auto row = env.rstar.row(x);
        double mean = 0.0, sq = 0.0;
        for (double v : row) mean += v;
        mean /= r;
        for (double v : row) sq += (v - mean) * (v - mean);
        double sd = std::sqrt(sq / r);
        int span = cfg.length_max - cfg.length_min + 1;
        for (int y = 0; y < r; ++y) {
            pool[y] = cfg.length_min + static_cast<int>(rng_len.uniform_below(static_cast<uint64_t>(span)));
            double z = sd > 0.0 ? (row[y] - mean) / sd : 0.0;
            u[y] = corr * z + noise_w * rng_len.normal();
        }
        std::sort(pool.begin(), pool.end());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return u[a] < u[b] || (u[a] == u[b] && a < b); });
        for (int k = 0; k < r; ++k) env.lengths(x, order[k]) = pool[k];
    }

    // Partitions: deterministic shuffle, then slice by largest-remainder sizes.
    Rng rng_part(derive_seed(cfg.seed, {kPartitions}));
    std::vector<int> ids(static_cast<size_t>(p));
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = p - 1; i > 0; --i) {
        int j = static_cast<int>(rng_part.uniform_below(static_cast<uint64_t>(i + 1)));
        std::swap(ids[i], ids[j]);
    }
    auto sizes = partition_sizes(p, cfg.partition_fractions);
    std::vector<int>* splits[4] = {&env.policy_split_1, &env.policy_split_2, &env.rm_split,
                                   &env.validation_split};
    int offset = 0;
    for (int i = 0; i < 4; ++i) {
        if (sizes[i] < 1) throw std::invalid_argument("build_environment: empty partition");
        splits[i]->assign(ids.begin() + offset, ids.begin() + offset + sizes[i]);
        std::sort(splits[i]->begin(), splits[i]->end());
        offset += sizes[i];
    }

    Rng rng_base(derive_seed(cfg.seed, {kBaseNoise}));
    env.base_policy.logits = Matrix(p, r);
    for (size_t i = 0; i < env.base_policy.logits.data.size(); ++i)
        env.base_policy.logits.data[i] =
            cfg.base_alignment * env.rstar.data[i] + cfg.base_noise_std * rng_base.normal();

    Rng rng_pre(derive_seed(cfg.seed, {kPretrain}));
    env.base_rm = pretrain_base_rm(env, rng_pre);

    env.validate();
    return env;
}

}  // namespace mtsim
