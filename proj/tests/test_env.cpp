#include "doctest.h"

#include <cmath>
#include <set>

#include "mtsim/env.hpp"
#include "mtsim/serialize.hpp"
#include "oracles.hpp"

using namespace mtsim;

namespace {

EnvConfig small_cfg(uint64_t seed = 42) {
    EnvConfig cfg;
    cfg.num_prompts = 20;
    cfg.num_responses = 8;
    cfg.init_rm_pairs_per_prompt = 4;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("partition_sizes uses largest-remainder rounding") {
    auto s = partition_sizes(100, {0.3, 0.3, 0.2, 0.2});
    CHECK(s[0] == 30);
    CHECK(s[1] == 30);
    CHECK(s[2] == 20);
    CHECK(s[3] == 20);

    auto t = partition_sizes(10, {0.26, 0.26, 0.26, 0.22});
    CHECK(t[0] + t[1] + t[2] + t[3] == 10);
}

TEST_CASE("partitions are disjoint and cover all prompts over random configs") {
    Rng rng(77);
    for (int i = 0; i < 20; ++i) {
        EnvConfig cfg = small_cfg(1000 + i);
        cfg.num_prompts = 8 + static_cast<int>(rng.uniform_below(40));
        Environment env = build_environment(cfg);
        std::set<int> seen;
        size_t total = 0;
        for (const auto* split :
             {&env.policy_split_1, &env.policy_split_2, &env.rm_split, &env.validation_split}) {
            CHECK(!split->empty());
            total += split->size();
            for (int x : *split) seen.insert(x);
        }
        CHECK(total == static_cast<size_t>(cfg.num_prompts));
        CHECK(seen.size() == static_cast<size_t>(cfg.num_prompts));
    }
}

TEST_CASE("build_environment rejects configs with an empty partition") {
    EnvConfig cfg = small_cfg();
    cfg.num_prompts = 3;  // four nonempty partitions cannot fit
    CHECK_THROWS_AS(build_environment(cfg), std::invalid_argument);

    cfg = small_cfg();
    cfg.partition_fractions = {0.5, 0.5, 0.25, -0.25};
    CHECK_THROWS_AS(build_environment(cfg), std::invalid_argument);

    cfg = small_cfg();
    cfg.partition_fractions = {0.4, 0.4, 0.1, 0.2};  // sums to 1.1
    CHECK_THROWS_AS(build_environment(cfg), std::invalid_argument);
}

TEST_CASE("zero alignment and zero noise give a uniform base policy") {
    EnvConfig cfg = small_cfg();
    cfg.base_alignment = 0.0;
    cfg.base_noise_std = 0.0;
    Environment env = build_environment(cfg);
    for (double v : env.base_policy.logits.data) CHECK(v == 0.0);
}

TEST_CASE("same config and seed build bit-identical environments") {
    EnvConfig cfg = small_cfg(99);
    Environment a = build_environment(cfg);
    Environment b = build_environment(cfg);
    CHECK(environment_to_json(a).dump() == environment_to_json(b).dump());
    CHECK(env_fingerprint(a) == env_fingerprint(b));

    cfg.seed = 100;
    Environment c = build_environment(cfg);
    CHECK(env_fingerprint(a) != env_fingerprint(c));
}

TEST_CASE("environment JSON round-trips") {
    Environment env = build_environment(small_cfg(7));
    Json j = environment_to_json(env);
    Environment back = environment_from_json(j);
    CHECK(environment_to_json(back).dump() == j.dump());
}

TEST_CASE("pistar is a shift-invariant Boltzmann distribution") {
    Environment env = build_environment(small_cfg(5));
    for (int x = 0; x < env.num_prompts(); ++x) {
        auto p = pistar(env, x);
        double sum = 0.0;
        for (double q : p) {
            CHECK(q > 0.0);
            sum += q;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Adding a constant to a reward row leaves pistar unchanged.
    Environment shifted = env;
    for (int y = 0; y < env.num_responses(); ++y) shifted.rstar(3, y) += 4.2;
    auto a = pistar(env, 3);
    auto b = pistar(shifted, 3);
    for (int y = 0; y < env.num_responses(); ++y) CHECK(b[y] == doctest::Approx(a[y]).epsilon(1e-12));
}

TEST_CASE("pistar anchors") {
    Environment env;
    env.config = small_cfg();
    env.config.num_prompts = 1;
    env.config.num_responses = 2;

    SUBCASE("flat reward row gives the uniform distribution") {
        env.config.pistar_temperature = 0.5;
        env.rstar = Matrix(1, 4, 1.25);
        auto p = pistar(env, 0);
        for (double q : p) CHECK(q == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("two-response hand evaluation") {
        env.config.pistar_temperature = 1.0;
        env.rstar = Matrix(1, 2, 0.0);
        env.rstar(0, 1) = std::log(3.0);
        auto p = pistar(env, 0);
        CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-9));
        CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-9));
    }
    SUBCASE("small temperature concentrates on the argmax") {
        env.rstar = Matrix(1, 4, 0.0);
        env.rstar(0, 2) = 1.0;  // unique max, gap 1 to the runner-up
        env.config.pistar_temperature = 1.0 / 20.0;
        auto p = pistar(env, 0);
        CHECK(p[2] >= 0.999);
    }
    SUBCASE("bad prompt id is rejected") {
        env.rstar = Matrix(1, 2, 0.0);
        CHECK_THROWS_AS(pistar(env, 5), std::invalid_argument);
    }
}

TEST_CASE("annotate follows the Bradley-Terry oracle") {
    Environment env;
    env.config = small_cfg();
    env.rstar = Matrix(1, 3, 0.0);
    Rng rng(11);

    SUBCASE("noise-free tie breaks toward the smaller id") {
        env.config.annotation = AnnotationMode::kNoiseFree;
        auto p = annotate(env, 0, 2, 1, rng);
        CHECK(p.chosen == 1);
        CHECK(p.rejected == 2);
        CHECK(p.source == PairSource::kInit);
    }
    SUBCASE("identical responses are rejected") {
        CHECK_THROWS_AS(annotate(env, 0, 1, 1, rng), std::invalid_argument);
    }
    SUBCASE("huge gap saturates") {
        env.config.annotation = AnnotationMode::kBtNoise;
        env.rstar(0, 0) = 50.0;
        int wins = 0;
        for (int i = 0; i < 10000; ++i) wins += annotate(env, 0, 0, 1, rng).chosen == 0;
        CHECK(wins >= 9990);
    }
    SUBCASE("unit gap matches sigma(1) empirically") {
        env.config.annotation = AnnotationMode::kBtNoise;
        env.rstar(0, 0) = 1.0;
        int wins = 0;
        for (int i = 0; i < 10000; ++i) wins += annotate(env, 0, 0, 1, rng).chosen == 0;
        CHECK(std::abs(wins / 10000.0 - 0.7310585786300049) < 0.02);
    }
}

TEST_CASE("pretrain_base_rm: zero pairs gives the all-zero model") {
    EnvConfig cfg = small_cfg();
    cfg.init_rm_pairs_per_prompt = 0;
    Environment env = build_environment(cfg);
    for (double v : env.base_rm.scores.data) CHECK(v == 0.0);
}

TEST_CASE("pretrain_base_rm: unsampled responses keep exactly zero scores") {
    EnvConfig cfg = small_cfg(13);
    cfg.num_prompts = 6;
    cfg.num_responses = 6;
    cfg.base_alignment = 0.0;
    cfg.base_noise_std = 0.0;
    Environment env = build_environment(cfg);
    // Make response 5 unreachable for every prompt, then retrain.
    for (int x = 0; x < 6; ++x) env.base_policy.logits(x, 5) = -1e4;
    Rng rng(21);
    RewardModel rm = pretrain_base_rm(env, rng);
    for (int x = 0; x < 6; ++x) CHECK(std::abs(rm.scores(x, 5)) <= 1e-8);
}

TEST_CASE("pretrain_base_rm recovers the sampled-pair ordering under noise-free labels") {
    EnvConfig cfg = small_cfg(17);
    cfg.num_prompts = 12;
    cfg.num_responses = 6;
    cfg.annotation = AnnotationMode::kNoiseFree;
    cfg.init_rm_pairs_per_prompt = 50;
    Environment env = build_environment(cfg);
    // Count agreement with the true reward over pairs the sampler can reach:
    // with 50 pairs per prompt over 6 responses, effectively all of them.
    int agree = 0, total = 0;
    for (int x = 0; x < cfg.num_prompts; ++x) {
        for (int y = 0; y < cfg.num_responses; ++y) {
            for (int y2 = y + 1; y2 < cfg.num_responses; ++y2) {
                double tm = env.rstar(x, y) - env.rstar(x, y2);
                double rm = env.base_rm.scores(x, y) - env.base_rm.scores(x, y2);
                if (tm == 0.0) continue;
                ++total;
                agree += (tm > 0) == (rm > 0);
            }
        }
    }
    CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("length assignment tracks the requested rank correlation") {
    EnvConfig cfg = small_cfg(23);
    cfg.num_prompts = 30;
    cfg.num_responses = 16;
    cfg.length_min = 1;
    cfg.length_max = 1000;  // wide range keeps ties rare

    cfg.length_reward_correlation = 0.9;
    Environment pos = build_environment(cfg);
    double rho_sum = 0.0;
    for (int x = 0; x < cfg.num_prompts; ++x) {
        std::vector<double> r(pos.rstar.row(x).begin(), pos.rstar.row(x).end());
        std::vector<double> l;
        for (int y = 0; y < cfg.num_responses; ++y) l.push_back(pos.lengths(x, y));
        rho_sum += oracles::spearman(r, l);
    }
    CHECK(rho_sum / cfg.num_prompts > 0.5);

    cfg.length_reward_correlation = 0.0;
    Environment zero = build_environment(cfg);
    rho_sum = 0.0;
    for (int x = 0; x < cfg.num_prompts; ++x) {
        std::vector<double> r(zero.rstar.row(x).begin(), zero.rstar.row(x).end());
        std::vector<double> l;
        for (int y = 0; y < cfg.num_responses; ++y) l.push_back(zero.lengths(x, y));
        rho_sum += oracles::spearman(r, l);
    }
    CHECK(std::abs(rho_sum / cfg.num_prompts) < 0.15);
}

TEST_CASE("distribution-shift witness: base RM is better on-policy than off-policy") {
    EnvConfig cfg;  // library defaults: P=64, R=32, bt-noise
    cfg.seed = 2024;
    Environment env = build_environment(cfg);
    double id = oracles::exact_rm_accuracy(env.base_rm, env, &env.base_policy);
    double ood = oracles::exact_rm_accuracy(env.base_rm, env, nullptr);
    CHECK(id > ood);
}
