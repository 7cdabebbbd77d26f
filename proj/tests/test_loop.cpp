#include "doctest.h"

#include <cmath>

#include "mtsim/env.hpp"
#include "mtsim/loop.hpp"
#include "mtsim/serialize.hpp"
#include "oracles.hpp"

using namespace mtsim;

namespace {

Environment lab_env(uint64_t seed = 7) {
    EnvConfig cfg;
    cfg.num_prompts = 24;
    cfg.num_responses = 10;
    cfg.init_rm_pairs_per_prompt = 4;
    cfg.seed = seed;
    return build_environment(cfg);
}

LoopConfig fast_loop() {
    LoopConfig cfg;
    cfg.dpo.steps = 60;
    cfg.dpo.checkpoint_every = 20;
    cfg.bt.steps = 120;
    return cfg;
}

std::vector<PreferencePair> margin_pairs(const std::vector<double>& margins) {
    std::vector<PreferencePair> out;
    for (size_t i = 0; i < margins.size(); ++i)
        out.push_back({static_cast<int>(i), 0, 1, PairSource::kPolicyComparison, margins[i]});
    return out;
}

}  // namespace

TEST_CASE("pick_checkpoint: argmax with ties toward the latest step") {
    std::vector<double> wins = {0.55, 0.70, 0.65};
    auto [idx, halted] = pick_checkpoint(wins, 0.60);
    CHECK(idx == 1);
    CHECK(!halted);

    std::vector<double> flat = {0.52, 0.52, 0.52};
    auto [fi, fh] = pick_checkpoint(flat, 0.60);
    CHECK(fi == 2);  // tie -> latest
    CHECK(fh);

    std::vector<double> boundary = {0.60};
    auto [bi, bh] = pick_checkpoint(boundary, 0.60);
    CHECK(bi == 0);
    CHECK(!bh);  // halting is strict '<'
}

TEST_CASE("checkpoint_win_rate anchors") {
    SUBCASE("one-response world always ties, giving zero") {
        Environment env;
        env.config.num_prompts = 3;
        env.config.num_responses = 1;
        env.rstar = Matrix(3, 1, 0.0);
        env.lengths = IntGrid(3, 1, 5);
        env.base_policy.logits = Matrix(3, 1, 0.0);
        env.base_rm = RewardModel{Matrix(3, 1, 0.0), 0.0};
        std::vector<int> validation = {0, 1, 2};
        Rng rng(1);
        CHECK(checkpoint_win_rate(env.base_policy, env.base_policy, env.base_rm, validation, 0.8, rng) ==
              0.0);
    }
    SUBCASE("point mass on the strictly higher-scored response wins everywhere") {
        RewardModel rm{Matrix(2, 2, 0.0), 0.0};
        rm.scores(0, 1) = 1.0;
        rm.scores(1, 1) = 1.0;
        Policy hi{Matrix(2, 2, -60.0)};
        hi.logits(0, 1) = 60.0;
        hi.logits(1, 1) = 60.0;
        Policy lo{Matrix(2, 2, -60.0)};
        lo.logits(0, 0) = 60.0;
        lo.logits(1, 0) = 60.0;
        std::vector<int> validation = {0, 1};
        Rng rng(2);
        CHECK(checkpoint_win_rate(hi, lo, rm, validation, 0.8, rng) == 1.0);
    }
    SUBCASE("wins on three of four prompts gives 0.75") {
        RewardModel rm{Matrix(4, 2, 0.0), 0.0};
        for (int x = 0; x < 4; ++x) rm.scores(x, 1) = 1.0;
        Policy cand{Matrix(4, 2, -60.0)};
        Policy prev{Matrix(4, 2, -60.0)};
        for (int x = 0; x < 4; ++x) {
            cand.logits(x, x == 3 ? 0 : 1) = 60.0;  // loses only on prompt 3
            prev.logits(x, 0) = 60.0;
        }
        std::vector<int> validation = {0, 1, 2, 3};
        Rng rng(3);
        CHECK(checkpoint_win_rate(cand, prev, rm, validation, 0.8, rng) == doctest::Approx(0.75));
    }
}

TEST_CASE("select_model returns the previous policy when everything is weak") {
    Environment env = lab_env();
    std::vector<int> validation = env.all_prompts();
    // Candidates identical to the previous policy: wins only by tie-breaks,
    // far below tau.
    std::vector<Checkpoint> ckpts = {{env.base_policy, 20}, {env.base_policy, 40}};
    Rng rng(4);
    SelectionResult sel =
        select_model(ckpts, env.base_policy, env.base_rm, validation, 0.6, 0.8, rng);
    CHECK(sel.halted);
    CHECK(sel.step == 0);
    CHECK(sel.win_rate < 0.6);
    CHECK(policy_to_json(sel.selected).dump() == policy_to_json(env.base_policy).dump());
}

TEST_CASE("e_step improves the favored response and is deterministic") {
    Environment env;
    env.config.num_prompts = 1;
    env.config.num_responses = 2;
    env.config.length_min = 1;
    env.config.length_max = 10;
    env.rstar = Matrix(1, 2, 0.0);
    env.lengths = IntGrid(1, 2, 5);
    env.base_policy.logits = Matrix(1, 2, 0.0);
    env.base_rm = RewardModel{Matrix(1, 2, 0.0), 0.0};
    env.base_rm.scores(0, 1) = 1.0;  // RM favors response 1

    DpoConfig dpo;
    dpo.steps = 200;
    dpo.checkpoint_every = 50;
    std::vector<int> prompts = {0};

    Rng rng_a(5);
    EStepResult a = e_step(env.base_policy, env.base_rm, prompts, dpo, env, rng_a);
    REQUIRE(!a.checkpoints.empty());
    CHECK(policy_probs(a.checkpoints.back().policy, 0)[1] > policy_probs(env.base_policy, 0)[1]);
    for (const auto& p : a.pairs) CHECK(p.source == PairSource::kEStep);

    Rng rng_b(5);
    EStepResult b = e_step(env.base_policy, env.base_rm, prompts, dpo, env, rng_b);
    CHECK(policy_to_json(a.checkpoints.back().policy).dump() ==
          policy_to_json(b.checkpoints.back().policy).dump());

    SUBCASE("zero learning rate keeps every checkpoint at the reference") {
        DpoConfig frozen = dpo;
        frozen.learning_rate = 0.0;
        Rng rng_c(6);
        EStepResult c = e_step(env.base_policy, env.base_rm, prompts, frozen, env, rng_c);
        for (const auto& ck : c.checkpoints)
            CHECK(policy_to_json(ck.policy).dump() == policy_to_json(env.base_policy).dump());
    }
}

TEST_CASE("build_pseudo_pairs drops collisions and tags policy-comparison") {
    Environment env = lab_env(11);
    std::vector<int> prompts = env.all_prompts();

    SUBCASE("identical near-deterministic policies collide everywhere") {
        Policy point{Matrix(env.num_prompts(), env.num_responses(), -60.0)};
        for (int x = 0; x < env.num_prompts(); ++x) point.logits(x, 0) = 60.0;
        Rng rng(7);
        auto pairs = build_pseudo_pairs(point, point, prompts, 0.8, rng);
        CHECK(pairs.empty());
    }
    SUBCASE("disjoint point masses give one pair per prompt") {
        Policy a{Matrix(env.num_prompts(), env.num_responses(), -60.0)};
        Policy b{Matrix(env.num_prompts(), env.num_responses(), -60.0)};
        for (int x = 0; x < env.num_prompts(); ++x) {
            a.logits(x, 1) = 60.0;
            b.logits(x, 2) = 60.0;
        }
        Rng rng(8);
        auto pairs = build_pseudo_pairs(a, b, prompts, 0.8, rng);
        REQUIRE(pairs.size() == prompts.size());
        for (const auto& p : pairs) {
            CHECK(p.chosen == 1);
            CHECK(p.rejected == 2);
            CHECK(p.source == PairSource::kPolicyComparison);
        }
    }
    SUBCASE("deterministic under a fixed seed") {
        Rng r1(9), r2(9);
        auto p1 = build_pseudo_pairs(env.base_policy, env.base_policy, prompts, 0.8, r1);
        auto p2 = build_pseudo_pairs(env.base_policy, env.base_policy, prompts, 0.8, r2);
        CHECK(pairs_to_jsonl(p1) == pairs_to_jsonl(p2));
    }
}

TEST_CASE("compute_margins subtracts scores and rejects double annotation") {
    RewardModel rm{Matrix(2, 3, 0.0), 0.0};
    rm.scores(0, 1) = 2.0;
    rm.scores(0, 2) = 0.5;
    std::vector<PreferencePair> pairs = {{0, 1, 2, PairSource::kPolicyComparison, std::nullopt}};
    auto with = compute_margins(pairs, rm);
    CHECK(*with[0].margin == doctest::Approx(1.5).epsilon(1e-12));
    CHECK_THROWS_AS(compute_margins(with, rm), std::invalid_argument);

    // Antisymmetry under swapping chosen and rejected.
    std::vector<PreferencePair> swapped = {{0, 2, 1, PairSource::kPolicyComparison, std::nullopt}};
    auto sw = compute_margins(swapped, rm);
    CHECK(*sw[0].margin == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("filter_pairs rules and boundaries") {
    auto pairs = margin_pairs({-1.5, -0.5, 0.5, 1.0});
    SUBCASE("lqf drops only confident negatives") {
        auto kept = filter_pairs(pairs, 1.0, FilterStrategy::kLqf);
        REQUIRE(kept.size() == 3);
        CHECK(*kept[0].margin == -0.5);
    }
    SUBCASE("hqs keeps the boundary inclusively") {
        auto kept = filter_pairs(pairs, 1.0, FilterStrategy::kHqs);
        REQUIRE(kept.size() == 1);
        CHECK(*kept[0].margin == 1.0);
    }
    SUBCASE("dst relabels negative margins and drops ties") {
        auto tied = margin_pairs({-0.8, 0.0, 0.3});
        auto kept = filter_pairs(tied, 1.0, FilterStrategy::kDst);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].chosen == 1);  // swapped
        CHECK(kept[0].rejected == 0);
        CHECK(*kept[0].margin == doctest::Approx(0.8));
        CHECK(kept[1].chosen == 0);  // unchanged
        for (const auto& p : kept) CHECK(*p.margin >= 0.0);
    }
    SUBCASE("none passes everything through") {
        CHECK(filter_pairs(pairs, 1.0, FilterStrategy::kNone).size() == pairs.size());
    }
}

TEST_CASE("filter set relations on random margins") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> margins;
        for (int i = 0; i < 40; ++i) margins.push_back(2.0 * rng.normal());
        auto pairs = margin_pairs(margins);
        double eps = 0.1 + rng.uniform01();
        auto lqf = filter_pairs(pairs, eps, FilterStrategy::kLqf);
        auto hqs = filter_pairs(pairs, eps, FilterStrategy::kHqs);
        auto none = filter_pairs(pairs, eps, FilterStrategy::kNone);
        auto dst = filter_pairs(pairs, eps, FilterStrategy::kDst);

        CHECK(none.size() == pairs.size());
        CHECK(hqs.size() <= lqf.size());
        for (const auto& p : lqf) CHECK(*p.margin > -eps);
        for (const auto& p : hqs) {
            CHECK(*p.margin >= eps);
            bool in_lqf = false;
            for (const auto& q : lqf) in_lqf = in_lqf || q.prompt == p.prompt;
            CHECK(in_lqf);
        }
        for (const auto& p : dst) CHECK(*p.margin >= 0.0);
    }
}

TEST_CASE("assemble_rm_data modes") {
    std::vector<PreferencePair> pc(20, {0, 0, 1, PairSource::kPolicyComparison, std::nullopt});
    std::vector<PreferencePair> st(30, {0, 1, 2, PairSource::kSelfTraining, std::nullopt});

    auto mixed = assemble_rm_data(pc, st, RmDataMode::kMixed);
    REQUIRE(mixed.size() == 50);
    int n_pc = 0, n_st = 0;
    for (const auto& p : mixed) {
        n_pc += p.source == PairSource::kPolicyComparison;
        n_st += p.source == PairSource::kSelfTraining;
    }
    CHECK(n_pc == 20);
    CHECK(n_st == 30);

    auto pc_only = assemble_rm_data(pc, st, RmDataMode::kPolicyComparison);
    for (const auto& p : pc_only) CHECK(p.source != PairSource::kSelfTraining);

    auto st_only = assemble_rm_data(pc, st, RmDataMode::kSelfTraining);
    CHECK(st_only.size() == st.size());

    std::vector<PreferencePair> empty;
    CHECK_THROWS_AS(assemble_rm_data(empty, st, RmDataMode::kPolicyComparison), std::invalid_argument);
    CHECK_THROWS_AS(assemble_rm_data(empty, empty, RmDataMode::kMixed), std::invalid_argument);
}

TEST_CASE("m_step trains from the base model and lr=0 returns it unchanged") {
    Environment env = lab_env(13);
    std::vector<PreferencePair> data = {{0, 0, 1, PairSource::kPolicyComparison, std::nullopt},
                                        {1, 2, 3, PairSource::kSelfTraining, std::nullopt}};
    BtConfig frozen{0.0, 100, 1e-3};
    RewardModel out = m_step(env.base_rm, data, frozen);
    for (size_t i = 0; i < out.scores.data.size(); ++i)
        CHECK(out.scores.data[i] == env.base_rm.scores.data[i]);

    // Saturated pairs: the trained model barely moves.
    RewardModel confident = env.base_rm;
    confident.scores(0, 0) = 30.0;
    confident.scores(0, 1) = 0.0;
    std::vector<PreferencePair> sat = {{0, 0, 1, PairSource::kPolicyComparison, std::nullopt}};
    BtConfig cfg{1.0, 100, 0.0};
    RewardModel trained = m_step(confident, sat, cfg);
    double drift = 0.0;
    for (size_t i = 0; i < trained.scores.data.size(); ++i)
        drift = std::max(drift, std::abs(trained.scores.data[i] - confident.scores.data[i]));
    CHECK(drift <= 1e-10);
}

TEST_CASE("m_step on consistent one-prompt preferences orders the winner first") {
    RewardModel base{Matrix(1, 3, 0.0), 1e-3};
    std::vector<PreferencePair> data;
    for (int rep = 0; rep < 5; ++rep) {
        data.push_back({0, 0, 1, PairSource::kPolicyComparison, std::nullopt});
        data.push_back({0, 0, 2, PairSource::kPolicyComparison, std::nullopt});
    }
    BtConfig cfg{1.0, 1500, 1e-3};
    RewardModel out = m_step(base, data, cfg);
    CHECK(out.scores(0, 0) > out.scores(0, 1));
    CHECK(out.scores(0, 0) > out.scores(0, 2));
}

TEST_CASE("run: frozen learning rate halts at iteration one and keeps the base policy") {
    Environment env = lab_env(17);
    LoopConfig cfg = fast_loop();
    cfg.dpo.learning_rate = 0.0;
    RunResult result = run(env, cfg, 555);
    REQUIRE(result.reports.size() == 1);
    CHECK(result.reports[0].halted);
    CHECK(policy_to_json(result.policy).dump() == policy_to_json(env.base_policy).dump());
    // The halted iteration reports the failing win rate, below tau.
    CHECK(result.reports[0].win_rate < cfg.tau);
}

TEST_CASE("run is deterministic: identical reports byte for byte") {
    Environment env = lab_env(19);
    LoopConfig cfg = fast_loop();
    RunResult a = run(env, cfg, 777);
    RunResult b = run(env, cfg, 777);
    REQUIRE(a.reports.size() == b.reports.size());
    for (size_t i = 0; i < a.reports.size(); ++i)
        CHECK(report_to_json(a.reports[i]).dump() == report_to_json(b.reports[i]).dump());
    CHECK(policy_to_json(a.policy).dump() == policy_to_json(b.policy).dump());
    CHECK(reward_model_to_json(a.rm).dump() == reward_model_to_json(b.rm).dump());
}

TEST_CASE("run: selection guard holds whenever an iteration is accepted") {
    Environment env = lab_env(23);
    LoopConfig cfg = fast_loop();
    RunResult result = run(env, cfg, 888);
    for (const auto& rep : result.reports) {
        if (!rep.halted) {
            CHECK(rep.win_rate >= cfg.tau);
            CHECK(rep.selected_step > 0);
        }
        CHECK(rep.pairs_kept <= rep.pairs_built);
        CHECK(rep.pairs_kept_hqs <= rep.pairs_kept_lqf);
        CHECK(rep.win_rate >= 0.0);
        CHECK(rep.win_rate <= 1.0);
    }
}

TEST_CASE("run: m-step re-initializes from base (two-round drift bound)") {
    // With a tiny single-step BT trainer, the reward model must stay within
    // one step of the base model even after two rounds; warm-starting from
    // the previous iterate would accumulate twice the drift.
    Environment env = lab_env(29);
    LoopConfig cfg = fast_loop();
    cfg.rounds = 2;
    cfg.iterations_per_round = 1;
    cfg.round_init = RoundInit::kContinue;
    cfg.bt.steps = 1;
    cfg.bt.learning_rate = 1.0;
    RunResult result = run(env, cfg, 999);
    int m_steps_run = 0;
    for (const auto& rep : result.reports) m_steps_run += rep.rm_nll_after.has_value();
    if (m_steps_run == 2) {
        double max_step = 0.0;
        size_t n = result.rm.scores.data.size();
        for (size_t i = 0; i < n; ++i)
            max_step = std::max(max_step, std::abs(result.rm.scores.data[i] - env.base_rm.scores.data[i]));
        // One gradient step with mean-normalized pair terms plus L2.
        double bound = cfg.bt.learning_rate * (1.0 + 1e-3);
        CHECK(max_step <= bound);
    }
}

TEST_CASE("run: induced degradation at iteration two halts and preserves the selection") {
    Environment env = lab_env(31);
    LoopConfig cfg = fast_loop();
    IterationHook hook = [](int round, int t, DpoConfig& dpo) {
        if (round == 1 && t == 2) dpo.learning_rate = -40.0;  // ascent: actively worsen
    };
    RunResult sabotaged = run(env, cfg, 4242, &hook);
    REQUIRE(sabotaged.reports.size() == 2);
    CHECK(!sabotaged.reports[0].halted);
    CHECK(sabotaged.reports[1].halted);

    LoopConfig first_only = cfg;
    first_only.iterations_per_round = 1;
    RunResult reference = run(env, first_only, 4242);
    CHECK(policy_to_json(sabotaged.policy).dump() == policy_to_json(reference.policy).dump());
}

TEST_CASE("run: EM chain is nondecreasing on the noise-free tiny instance") {
    // One prompt, three responses; the base reward model orders them
    // correctly but timidly. Exact optimization, no filtering.
    Environment env;
    env.config.num_prompts = 1;
    env.config.num_responses = 3;
    env.config.length_min = 1;
    env.config.length_max = 10;
    env.config.annotation = AnnotationMode::kNoiseFree;
    env.rstar = Matrix(1, 3, 0.0);
    env.rstar(0, 1) = 1.0;
    env.rstar(0, 2) = 2.0;
    env.lengths = IntGrid(1, 3, 5);
    env.base_policy.logits = Matrix(1, 3, 0.0);
    env.base_rm = RewardModel{Matrix(1, 3, 0.0), 1e-3};
    env.base_rm.scores(0, 1) = 0.5;
    env.base_rm.scores(0, 2) = 1.0;
    env.policy_split_1 = {0};

    LoopConfig cfg;
    cfg.iterations_per_round = 3;
    cfg.tau = 0.5;
    cfg.filter = FilterStrategy::kNone;
    cfg.rm_data = RmDataMode::kMixed;
    cfg.dpo.steps = 10000;
    cfg.dpo.checkpoint_every = 2500;
    cfg.dpo.learning_rate = 0.5;
    cfg.dpo.beta = 0.1;
    cfg.dpo.samples_per_prompt = 12;
    cfg.dpo.sample_temperature = 8.0;
    cfg.dpo.pair_selection = PairSelection::kBestVsWorst;
    cfg.bt.steps = 10000;
    cfg.bt.learning_rate =  0.5;

    RunResult result = run(env, cfg, 2718);
    REQUIRE(result.metrics.per_iteration.size() >= 2);
    for (size_t i = 1; i < result.metrics.per_iteration.size(); ++i)
        CHECK(result.metrics.per_iteration[i].expected_true_reward >=
              result.metrics.per_iteration[i - 1].expected_true_reward - 1e-6);
}

TEST_CASE("run_fixed_rm never updates the reward model and adds one iteration") {
    Environment env = lab_env(37);
    LoopConfig cfg = fast_loop();
    RunResult result = run_fixed_rm(env, cfg, 31337);
    CHECK(reward_model_to_json(result.rm).dump() == reward_model_to_json(env.base_rm).dump());
    CHECK(result.reports.size() <= static_cast<size_t>(cfg.iterations_per_round) + 1);
    for (const auto& rep : result.reports) CHECK(!rep.rm_nll_after.has_value());
}

TEST_CASE("loop config validation") {
    LoopConfig cfg;
    cfg.tau = 0.4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LoopConfig{};
    cfg.tau = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LoopConfig{};
    cfg.rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
