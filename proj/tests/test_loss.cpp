#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracle_helpers.hpp"
#include "tlt/tlt.hpp"

using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

tlt::TokenWeightPlan one_step_plan(const std::string& id, std::vector<int> tokens,
                                   std::vector<double> weights, bool masked) {
    tlt::TokenWeightPlan plan;
    plan.trajectory_id = id;
    tlt::StepWeightPlan step;
    step.tokens = std::move(tokens);
    step.weights = std::move(weights);
    step.masked = masked;
    plan.steps.push_back(std::move(step));
    return plan;
}

// The golden trajectory: two calls against the three-tool registry, scored by
// a model whose rows were seeded from mt19937_64(12345) in plan-token order.
struct GoldenInstance {
    tlt::Trajectory trajectory;
    tlt::TokenWeightPlan plan;
    tlt::ToyModel model{1};
};

GoldenInstance golden_instance() {
    GoldenInstance g;
    g.trajectory.id = "golden";
    g.trajectory.query = "weather then email";
    tlt::CallStep a;
    a.call = tlt::parse_call("get_weather(city=Oslo)");
    a.feedback.raw_text = "sunny, 21C";
    g.trajectory.steps.push_back(std::move(a));
    tlt::CallStep b;
    b.call = tlt::parse_call("send_email(to=bob)");
    b.feedback.raw_text = "ok";
    g.trajectory.steps.push_back(std::move(b));

    const tlt::ByteTokenizer tok;
    g.plan = tlt::build_weight_plan(g.trajectory, oracle::weather_registry(), tok,
                                    tlt::default_rules());
    g.model = tlt::ToyModel(tok.vocab_size());
    std::mt19937_64 rng(12345);
    tlt::detail::for_each_plan_token(
        g.plan, g.trajectory.id, g.model.context_window(),
        [&](std::size_t, std::size_t, int, const std::string& key) {
            auto& row = g.model.logits_ref(key);
            for (double& v : row) v = oracle::uniform01(rng) * 4.0 - 2.0;
        });
    return g;
}

}  // namespace

TEST_CASE("weighted masked loss on hand-sized plans") {
    tlt::TokenLogProbs lps;
    lps.per_step = {{-1.0, -2.0}};

    SECTION("weights scale each position") {
        const tlt::LossReport r =
            tlt::weighted_masked_loss(lps, one_step_plan("t", {3, 4}, {9.0, 1.0}, false));
        REQUIRE(r.total == 11.0);
        REQUIRE(r.per_step == std::vector<double>{11.0});
        REQUIRE(r.contributing_tokens == 2);
        REQUIRE_FALSE(r.gradient.has_value());
    }

    SECTION("masking the step removes it entirely") {
        const tlt::LossReport r =
            tlt::weighted_masked_loss(lps, one_step_plan("t", {3, 4}, {9.0, 1.0}, true));
        REQUIRE(r.total == 0.0);
        REQUIRE(r.per_step == std::vector<double>{0.0});
        REQUIRE(r.contributing_tokens == 0);
    }

    SECTION("unit weights plus a masked step reduce to the unmasked step's NLL") {
        tlt::TokenLogProbs two;
        two.per_step = {{-0.5, -1.25, -0.125}, {-3.0, -4.0}};
        tlt::TokenWeightPlan plan = one_step_plan("t", {1, 2, 3}, {1.0, 1.0, 1.0}, false);
        tlt::StepWeightPlan masked_step;
        masked_step.tokens = {4, 5};
        masked_step.weights = {1.0, 1.0};
        masked_step.masked = true;
        plan.steps.push_back(std::move(masked_step));

        const tlt::LossReport r = tlt::weighted_masked_loss(two, plan);
        double nll = 0.0;
        for (double lp : two.per_step[0]) nll -= lp;
        REQUIRE(r.total == nll);
        REQUIRE(r.per_step[1] == 0.0);
        REQUIRE(r.total >= 0.0);
    }

    SECTION("misalignment names the first offending step") {
        tlt::TokenWeightPlan plan = one_step_plan("t", {1, 2}, {1.0, 1.0}, false);
        tlt::StepWeightPlan second;
        second.tokens = {7, 8, 9};
        second.weights = {1.0, 1.0, 1.0};
        plan.steps.push_back(std::move(second));

        tlt::TokenLogProbs bad_count;
        bad_count.per_step = {{-1.0, -1.0}};
        REQUIRE_THROWS_AS(tlt::weighted_masked_loss(bad_count, plan), tlt::AlignmentError);

        tlt::TokenLogProbs bad_len;
        bad_len.per_step = {{-1.0, -1.0}, {-1.0, -1.0}};
        REQUIRE_THROWS_WITH(tlt::weighted_masked_loss(bad_len, plan), ContainsSubstring("step 1"));
    }
}

TEST_CASE("reduction identities hold exactly") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 25; ++round) {
        // Random plan with random logprobs, mirrored accumulation order.
        tlt::TokenWeightPlan plan;
        plan.trajectory_id = "r";
        tlt::TokenLogProbs lps;
        const std::size_t steps = 1 + rng() % 3;
        for (std::size_t s = 0; s < steps; ++s) {
            tlt::StepWeightPlan sp;
            std::vector<double> row;
            const std::size_t len = 1 + rng() % 5;
            for (std::size_t m = 0; m < len; ++m) {
                sp.tokens.push_back(static_cast<int>(rng() % 6));
                sp.weights.push_back(1.0 + static_cast<double>(rng() % 9));
                row.push_back(-oracle::uniform01(rng) * 5.0);
            }
            sp.masked = (rng() % 3) == 0;
            plan.steps.push_back(std::move(sp));
            lps.per_step.push_back(std::move(row));
        }

        // weights == 1: pure erroneous-step masking.
        tlt::TokenWeightPlan mask_only = plan;
        for (auto& s : mask_only.steps) std::fill(s.weights.begin(), s.weights.end(), 1.0);
        double expect_mask = 0.0;
        for (std::size_t s = 0; s < plan.steps.size(); ++s) {
            if (plan.steps[s].masked) continue;
            double acc = 0.0;
            for (double lp : lps.per_step[s]) acc -= lp;
            expect_mask += acc;
        }
        REQUIRE(tlt::weighted_masked_loss(lps, mask_only).total == expect_mask);

        // mask == none: pure token weighting.
        tlt::TokenWeightPlan weight_only = plan;
        for (auto& s : weight_only.steps) s.masked = false;
        double expect_weight = 0.0;
        for (std::size_t s = 0; s < plan.steps.size(); ++s) {
            double acc = 0.0;
            for (std::size_t m = 0; m < lps.per_step[s].size(); ++m)
                acc -= plan.steps[s].weights[m] * lps.per_step[s][m];
            expect_weight += acc;
        }
        REQUIRE(tlt::weighted_masked_loss(lps, weight_only).total == expect_weight);

        // both neutral: plain NLL.
        tlt::TokenWeightPlan plain = mask_only;
        for (auto& s : plain.steps) s.masked = false;
        double expect_plain = 0.0;
        for (std::size_t s = 0; s < plan.steps.size(); ++s) {
            double acc = 0.0;
            for (double lp : lps.per_step[s]) acc -= lp;
            expect_plain += acc;
        }
        const tlt::LossReport r = tlt::weighted_masked_loss(lps, plain);
        REQUIRE(r.total == expect_plain);
        REQUIRE(r.total >= 0.0);
    }
}

TEST_CASE("toy model log-probabilities") {
    const tlt::ByteTokenizer tok;

    SECTION("uniform logits give -ln V everywhere") {
        tlt::ToyModel model(tok.vocab_size());
        tlt::Trajectory t;
        t.id = "u";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("ping()");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));

        const tlt::TokenLogProbs lps = tlt::toy_logprobs(model, t, tok);
        REQUIRE(lps.per_step.size() == 1);
        REQUIRE(lps.per_step[0].size() == 6);
        for (double lp : lps.per_step[0]) REQUIRE(lp == -std::log(256.0));
    }

    SECTION("a huge logit on the reference token saturates toward zero") {
        tlt::ToyModel model(tok.vocab_size());
        tlt::Trajectory t;
        t.id = "s";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("f()");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));

        const std::vector<int> tokens = tok.tokenize("f()");
        model.logits_ref(model.context_key("s", {}))[static_cast<std::size_t>(tokens[0])] = 50.0;
        const double lp = tlt::toy_logprobs(model, t, tok).per_step[0][0];
        REQUIRE(lp <= 0.0);
        REQUIRE(lp > -1e-15);
    }

    SECTION("tokens outside the vocabulary are rejected") {
        tlt::ToyModel tiny(5);
        tlt::Trajectory t;
        t.id = "v";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("f()");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));
        REQUIRE_THROWS_WITH(tlt::toy_logprobs(tiny, t, tok),
                            ContainsSubstring("outside vocabulary"));
    }

    SECTION("softmax rows normalize to one") {
        tlt::ToyModel model(17);
        auto& row = model.logits_ref("k|");
        std::mt19937_64 rng(3);
        for (double& v : row) v = oracle::uniform01(rng) * 20.0 - 10.0;
        double sum = 0.0;
        for (double p : model.probs("k|")) sum += p;
        REQUIRE(sum == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("seeded random model regression lock") {
    const GoldenInstance g = golden_instance();
    const tlt::TokenLogProbs lps = tlt::toy_logprobs(g.model, g.trajectory, tlt::ByteTokenizer());
    const tlt::LossReport r = tlt::weighted_masked_loss(lps, g.plan);

    REQUIRE(r.total == 285.59773043302005);
    REQUIRE(r.per_step[0] == 135.20967550280565);
    REQUIRE(r.per_step[1] == 150.38805493021442);
    REQUIRE(r.contributing_tokens == 40);
    REQUIRE(lps.per_step[0][0] == -5.530398621224526);
    REQUIRE(lps.per_step[1][5] == -7.5699415633467826);
    REQUIRE(tlt::toy_loss(g.model, g.trajectory, g.plan) == 285.59773043302005);

    const tlt::LossReport rep = tlt::toy_loss_report(g.model, g.trajectory, g.plan, true);
    REQUIRE(rep.total == r.total);
    REQUIRE(rep.gradient.has_value());
    REQUIRE(*rep.gradient == tlt::analytic_gradient(g.model, g.trajectory, g.plan));
}

TEST_CASE("analytic gradient structure") {
    SECTION("masked steps leave no rows behind") {
        oracle::ToyInstance inst = oracle::random_toy_instance(11, false);
        REQUIRE(inst.plan.steps.size() >= 1);
        inst.plan.steps[0].masked = true;

        // Context keys reachable only through step 0.
        std::set<std::string> masked_keys, live_keys;
        tlt::detail::for_each_plan_token(
            inst.plan, inst.trajectory.id, inst.model.context_window(),
            [&](std::size_t s, std::size_t, int, const std::string& key) {
                (s == 0 ? masked_keys : live_keys).insert(key);
            });

        const tlt::GradientTable grad =
            tlt::analytic_gradient(inst.model, inst.trajectory, inst.plan);
        for (const auto& key : masked_keys) {
            if (live_keys.count(key)) continue;
            REQUIRE(grad.find(key) == grad.end());
        }
        for (const auto& key : live_keys) REQUIRE(grad.find(key) != grad.end());
    }

    SECTION("doubling a weight doubles that token's contribution") {
        oracle::ToyInstance inst = oracle::random_toy_instance(12, false);
        tlt::TokenWeightPlan doubled = inst.plan;
        doubled.steps[0].weights[1] *= 2.0;

        const tlt::GradientTable base =
            tlt::analytic_gradient(inst.model, inst.trajectory, inst.plan);
        const tlt::GradientTable more =
            tlt::analytic_gradient(inst.model, inst.trajectory, doubled);

        // Isolate the token's standalone term: w * (softmax - onehot) at its key.
        std::string key;
        int token = -1;
        tlt::detail::for_each_plan_token(
            inst.plan, inst.trajectory.id, inst.model.context_window(),
            [&](std::size_t s, std::size_t m, int tok_id, const std::string& k) {
                if (s == 0 && m == 1) {
                    key = k;
                    token = tok_id;
                }
            });
        const double w = inst.plan.steps[0].weights[1];
        const std::vector<double> p = inst.model.probs(key);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double standalone =
                w * p[j] - (static_cast<int>(j) == token ? w : 0.0);
            REQUIRE(more.at(key)[j] - base.at(key)[j] == Approx(standalone).margin(1e-12));
        }
        // Rows of other contexts are untouched (unique-key instances).
        for (const auto& [k, row] : base)
            if (k != key) REQUIRE(more.at(k) == row);
    }

    SECTION("gradient calls are deterministic and self-consistent") {
        const oracle::ToyInstance inst = oracle::random_toy_instance(13);
        const tlt::GradientTable a =
            tlt::analytic_gradient(inst.model, inst.trajectory, inst.plan);
        const tlt::GradientTable b =
            tlt::analytic_gradient(inst.model, inst.trajectory, inst.plan);
        REQUIRE(a == b);
        double worst = 0.0;
        for (const auto& [key, row] : a)
            for (std::size_t j = 0; j < row.size(); ++j)
                worst = std::max(worst, std::fabs(row[j] - b.at(key)[j]));
        REQUIRE(worst == 0.0);
    }

    SECTION("plan and trajectory must agree") {
        const oracle::ToyInstance inst = oracle::random_toy_instance(14);
        tlt::Trajectory other = inst.trajectory;
        other.id = "different";
        REQUIRE_THROWS_AS(tlt::analytic_gradient(inst.model, other, inst.plan),
                          tlt::AlignmentError);
        tlt::Trajectory short_t = inst.trajectory;
        short_t.steps.emplace_back();
        REQUIRE_THROWS_AS(tlt::toy_loss(inst.model, short_t, inst.plan), tlt::AlignmentError);
    }
}

TEST_CASE("finite differences agree with the analytic gradient") {
    SECTION("masked contexts agree exactly at zero") {
        oracle::ToyInstance inst = oracle::random_toy_instance(15, false);
        inst.plan.steps[0].masked = true;
        std::set<std::string> masked_only, live;
        tlt::detail::for_each_plan_token(
            inst.plan, inst.trajectory.id, inst.model.context_window(),
            [&](std::size_t s, std::size_t, int, const std::string& key) {
                (s == 0 ? masked_only : live).insert(key);
            });
        tlt::GradientTable zeros;
        for (const auto& key : masked_only)
            if (!live.count(key))
                zeros[key] = std::vector<double>(inst.model.vocab_size(), 0.0);
        REQUIRE_FALSE(zeros.empty());
        REQUIRE(tlt::finite_diff_check_against(inst.model, inst.trajectory, inst.plan, zeros) ==
                0.0);
    }

    SECTION("the check rejects a non-positive step") {
        const oracle::ToyInstance inst = oracle::random_toy_instance(16);
        REQUIRE_THROWS_AS(
            tlt::finite_diff_check(inst.model, inst.trajectory, inst.plan, 0.0),
            tlt::ConfigError);
    }

    SECTION("one hundred seeded instances stay under 1e-6") {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const oracle::ToyInstance inst = oracle::random_toy_instance(seed);
            worst = std::max(worst,
                             tlt::finite_diff_check(inst.model, inst.trajectory, inst.plan));
        }
        INFO("worst relative error " << worst);
        REQUIRE(worst < 1e-6);
    }

    SECTION("a corrupted gradient is caught") {
        const oracle::ToyInstance inst = oracle::random_toy_instance(17, false);
        tlt::GradientTable grad =
            tlt::analytic_gradient(inst.model, inst.trajectory, inst.plan);
        grad.begin()->second[0] += 0.5;
        REQUIRE(tlt::finite_diff_check_against(inst.model, inst.trajectory, inst.plan, grad) >
                1e-2);
    }
}

TEST_CASE("gradient descent steps") {
    SECTION("one step on an unmasked trajectory strictly decreases the loss") {
        oracle::ToyInstance inst = oracle::random_toy_instance(18, false);
        const double before = tlt::toy_loss(inst.model, inst.trajectory, inst.plan);
        const double reported =
            tlt::sft_step(inst.model, {inst.trajectory}, {inst.plan}, 1e-2);
        REQUIRE(reported == before);
        const double after = tlt::toy_loss(inst.model, inst.trajectory, inst.plan);
        REQUIRE(after < before);
    }

    SECTION("loss is non-increasing across ten small steps") {
        oracle::ToyInstance inst = oracle::random_toy_instance(19, false);
        double prev = tlt::toy_loss(inst.model, inst.trajectory, inst.plan);
        for (int i = 0; i < 10; ++i) {
            tlt::sft_step(inst.model, {inst.trajectory}, {inst.plan}, 1e-2);
            const double now = tlt::toy_loss(inst.model, inst.trajectory, inst.plan);
            REQUIRE(now <= prev);
            prev = now;
        }
    }

    SECTION("an entirely masked batch cannot move any parameter") {
        oracle::ToyInstance inst = oracle::random_toy_instance(20, false);
        for (auto& s : inst.plan.steps) s.masked = true;
        // Materialize every context row so the comparison sees real bits.
        tlt::detail::for_each_plan_token(
            inst.plan, inst.trajectory.id, inst.model.context_window(),
            [&](std::size_t, std::size_t, int, const std::string& key) {
                inst.model.logits_ref(key);
            });
        const auto before = inst.model.params();
        const double loss = tlt::sft_step(inst.model, {inst.trajectory}, {inst.plan}, 1e-2);
        REQUIRE(loss == 0.0);
        REQUIRE(inst.model.params() == before);
    }

    SECTION("masked rows survive a mixed batch bit-for-bit") {
        oracle::ToyInstance inst = oracle::random_toy_instance(21, false);
        REQUIRE(inst.plan.steps.size() >= 1);
        inst.plan.steps[0].masked = true;
        std::set<std::string> masked_only, live;
        tlt::detail::for_each_plan_token(
            inst.plan, inst.trajectory.id, inst.model.context_window(),
            [&](std::size_t s, std::size_t, int, const std::string& key) {
                (s == 0 ? masked_only : live).insert(key);
            });
        const auto before = inst.model.params();
        tlt::sft_step(inst.model, {inst.trajectory}, {inst.plan}, 1e-2);
        for (const auto& key : masked_only) {
            if (live.count(key)) continue;
            REQUIRE(inst.model.params().at(key) == before.at(key));
        }
    }

    SECTION("batch and plan counts must match, learning rate must be positive") {
        oracle::ToyInstance inst = oracle::random_toy_instance(22);
        REQUIRE_THROWS_AS(tlt::sft_step(inst.model, {inst.trajectory}, {}, 1e-2),
                          tlt::AlignmentError);
        REQUIRE_THROWS_AS(tlt::sft_step(inst.model, {inst.trajectory}, {inst.plan}, 0.0),
                          tlt::ConfigError);
    }
}

TEST_CASE("a weight-9 token learns faster than a weight-1 token") {
    // One step, two tokens in distinct contexts, identical uniform start.
    tlt::TokenWeightPlan plan = one_step_plan("race", {1, 2}, {9.0, 1.0}, false);
    tlt::Trajectory t;
    t.id = "race";
    t.query = "q";
    t.steps.resize(1);

    tlt::ToyModel model(6);
    const std::string key_w = tlt::ToyModel::make_key("race", {}, 4);
    const std::string key_p = tlt::ToyModel::make_key("race", {1}, 4);

    double prev_gap = 0.0;
    for (int i = 0; i < 10; ++i) {
        tlt::sft_step(model, {t}, {plan}, 1e-2);
        const double p_weighted = model.probs(key_w)[1];
        const double p_plain = model.probs(key_p)[2];
        REQUIRE(p_weighted > p_plain);
        const double gap = p_weighted - p_plain;
        REQUIRE(gap > prev_gap);
        prev_gap = gap;
    }
}

TEST_CASE("toy model serialization and parameter plumbing") {
    SECTION("JSON round trip preserves every row") {
        const GoldenInstance g = golden_instance();
        const tlt::ToyModel back = tlt::ToyModel::from_json(g.model.to_json(), "rt");
        REQUIRE(back.vocab_size() == g.model.vocab_size());
        REQUIRE(back.context_window() == g.model.context_window());
        REQUIRE(back.params() == g.model.params());
    }

    SECTION("checkpoint errors") {
        REQUIRE_THROWS_AS(tlt::ToyModel::from_json(tlt::json::object(), "x"), tlt::ParseError);
        REQUIRE_THROWS_WITH(
            tlt::ToyModel::from_json(
                tlt::json::parse(R"({"vocab_size": 3, "context_window": 4,
                                     "logits": {"k": [0.0, 0.0]}})"),
                "x"),
            ContainsSubstring("expected 3"));
        REQUIRE_THROWS_AS(tlt::ToyModel(0), tlt::ConfigError);
    }

    SECTION("absent keys read as uniform and are not materialized") {
        tlt::ToyModel model(4);
        REQUIRE(model.logits_of("nowhere|") == std::vector<double>(4, 0.0));
        REQUIRE(model.params().empty());
    }

    SECTION("gradient rows must match the vocabulary") {
        tlt::ToyModel model(4);
        tlt::GradientTable bad;
        bad["k"] = {1.0, 2.0};
        REQUIRE_THROWS_AS(model.apply_gradient(bad, 0.1), tlt::AlignmentError);
    }
}
