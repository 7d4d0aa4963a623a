#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracle_helpers.hpp"
#include "tlt/tlt.hpp"

using Catch::Matchers::ContainsSubstring;

namespace {

std::set<std::size_t> range_set(std::size_t begin, std::size_t end) {
    std::set<std::size_t> out;
    for (std::size_t i = begin; i < end; ++i) out.insert(i);
    return out;
}

}  // namespace

TEST_CASE("trie over the three-tool registry") {
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ByteTokenizer tok;
    const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);

    REQUIRE(trie.root().tools.size() == 3);

    // The node after "get_w" still carries both get_* tools.
    const int get_w = trie.walk(tok.tokenize("get_w"));
    REQUIRE(get_w >= 0);
    REQUIRE(trie.node(get_w).tools == std::vector<std::string>{"get_weather", "get_wiki"});

    // One byte further the ambiguity is resolved.
    const int get_we = trie.walk(tok.tokenize("get_we"));
    REQUIRE(trie.node(get_we).tools == std::vector<std::string>{"get_weather"});

    // Every registered name traces to a terminal node.
    for (const auto& tool : reg.tools) {
        const int end = trie.walk(tok.tokenize(tool.name));
        REQUIRE(end >= 0);
        REQUIRE(trie.node(end).terminal);
        REQUIRE(trie.node(end).terminal_tool == tool.name);
    }
    REQUIRE(trie.walk(tok.tokenize("get_x")) == -1);
}

TEST_CASE("key token splits in the three-tool registry") {
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ByteTokenizer tok;
    const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);

    SECTION("send_email shares nothing, so only position 0 is key and the weight caps") {
        const tlt::KeyTokenSplit s = tlt::key_token_split(trie, "send_email", tok, 9.0);
        REQUIRE(s.key_positions == std::set<std::size_t>{0});
        REQUIRE(s.non_key_positions == range_set(1, 10));
        REQUIRE(s.weight == 9.0);
    }

    SECTION("get_weather stays ambiguous through its shared get_w prefix") {
        const tlt::KeyTokenSplit s = tlt::key_token_split(trie, "get_weather", tok, 9.0);
        REQUIRE(s.key_positions == range_set(0, 6));
        REQUIRE(s.non_key_positions == range_set(6, 11));
        // |NK|/|K| = 5/6 clips up to the floor.
        REQUIRE(s.weight == 1.0);
    }

    SECTION("get_wiki mirrors the shared prefix") {
        const tlt::KeyTokenSplit s = tlt::key_token_split(trie, "get_wiki", tok, 9.0);
        REQUIRE(s.key_positions == range_set(0, 6));
        REQUIRE(s.non_key_positions == range_set(6, 8));
        REQUIRE(s.weight == 1.0);
    }

    SECTION("partition covers every position exactly once") {
        for (const auto& tool : reg.tools) {
            const tlt::KeyTokenSplit s = tlt::key_token_split(trie, tool.name, tok, 9.0);
            const std::size_t len = tok.tokenize(tool.name).size();
            std::set<std::size_t> all = s.key_positions;
            all.insert(s.non_key_positions.begin(), s.non_key_positions.end());
            REQUIRE(all == range_set(0, len));
            REQUIRE(s.key_positions.count(0) == 1);
            std::set<std::size_t> overlap;
            std::set_intersection(s.key_positions.begin(), s.key_positions.end(),
                                  s.non_key_positions.begin(), s.non_key_positions.end(),
                                  std::inserter(overlap, overlap.begin()));
            REQUIRE(overlap.empty());
        }
    }

    SECTION("w_max caps and floors") {
        REQUIRE(tlt::key_token_split(trie, "send_email", tok, 4.0).weight == 4.0);
        REQUIRE(tlt::key_token_split(trie, "send_email", tok, 1.0).weight == 1.0);
        REQUIRE_THROWS_AS(tlt::key_token_split(trie, "send_email", tok, 0.5), tlt::ConfigError);
    }

    SECTION("unknown tool") {
        REQUIRE_THROWS_WITH(tlt::key_token_split(trie, "get_wine", tok, 9.0),
                            ContainsSubstring("not in the trie"));
    }
}

TEST_CASE("single-tool registry gives a linear unambiguous trie") {
    const tlt::ToolRegistry reg = tlt::parse_registry(R"({"tools": [{"name": "solo"}]})");
    const tlt::ByteTokenizer tok;
    const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);
    REQUIRE(trie.node_count() == 5);  // root + one node per byte
    for (std::size_t i = 0; i < trie.node_count(); ++i)
        REQUIRE(trie.node(static_cast<int>(i)).tools.size() == 1);

    const tlt::KeyTokenSplit s = tlt::key_token_split(trie, "solo", tok, 9.0);
    REQUIRE(s.key_positions == std::set<std::size_t>{0});
    REQUIRE(s.weight == 3.0);  // |NK|/|K| = 3/1
}

TEST_CASE("a name that prefixes another stays representable") {
    const tlt::ToolRegistry reg = tlt::parse_registry(R"({"tools": [{"name": "a"}, {"name": "ab"}]})");
    const tlt::ByteTokenizer tok;
    const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);

    const int after_a = trie.walk(tok.tokenize("a"));
    REQUIRE(trie.node(after_a).terminal);
    REQUIRE(trie.node(after_a).terminal_tool == "a");
    REQUIRE(trie.node(after_a).tools == std::vector<std::string>{"a", "ab"});

    const tlt::KeyTokenSplit for_a = tlt::key_token_split(trie, "a", tok, 9.0);
    REQUIRE(for_a.key_positions == std::set<std::size_t>{0});
    REQUIRE(for_a.weight == 1.0);

    // "ab"'s second position is still ambiguous: the node before it carries both names.
    const tlt::KeyTokenSplit for_ab = tlt::key_token_split(trie, "ab", tok, 9.0);
    REQUIRE(for_ab.key_positions == std::set<std::size_t>{0, 1});
    REQUIRE(for_ab.non_key_positions.empty());
    REQUIRE(for_ab.weight == 1.0);
}

TEST_CASE("identical token sequences are rejected") {
    tlt::ToolTrie trie;
    trie.insert("first", {1, 2, 3});
    REQUIRE_THROWS_WITH(trie.insert("second", {1, 2, 3}),
                        ContainsSubstring("tokenize to the same sequence"));
}

TEST_CASE("trie keys equal the pairwise prefix scan on fuzzed registries") {
    std::mt19937_64 rng(21);
    const tlt::ByteTokenizer tok;
    for (int round = 0; round < 200; ++round) {
        const tlt::ToolRegistry reg = oracle::random_registry(rng);
        const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);
        std::vector<std::vector<int>> names;
        for (const auto& tool : reg.tools) names.push_back(tok.tokenize(tool.name));
        for (std::size_t i = 0; i < reg.tools.size(); ++i) {
            const tlt::KeyTokenSplit s = tlt::key_token_split(trie, reg.tools[i].name, tok, 9.0);
            INFO("registry round " << round << " tool " << reg.tools[i].name);
            REQUIRE(s.key_positions == oracle::key_positions_pairwise(names, i));
            REQUIRE(s.weight == oracle::weight_pairwise(names, i, 9.0));
            REQUIRE(s.weight >= 1.0);
            REQUIRE(s.weight <= 9.0);
            if (s.non_key_positions.size() <= s.key_positions.size())
                REQUIRE(s.weight == 1.0);
        }
    }
}

TEST_CASE("adding a tool never removes key positions") {
    std::mt19937_64 rng(22);
    const tlt::ByteTokenizer tok;
    for (int round = 0; round < 100; ++round) {
        tlt::ToolRegistry reg = oracle::random_registry(rng);
        if (reg.tools.size() == 6) reg.tools.pop_back();
        const tlt::ToolTrie before = tlt::build_tool_trie(reg, tok);
        std::map<std::string, std::set<std::size_t>> old_keys;
        for (const auto& tool : reg.tools)
            old_keys[tool.name] = tlt::key_token_split(before, tool.name, tok, 9.0).key_positions;

        // Grow the registry by one fresh name.
        tlt::ToolSpec extra;
        extra.name = "cab";
        while (reg.contains(extra.name)) extra.name += "a";
        reg.tools.push_back(extra);
        const tlt::ToolTrie after = tlt::build_tool_trie(reg, tok);
        for (const auto& [name, keys] : old_keys) {
            const auto grown = tlt::key_token_split(after, name, tok, 9.0).key_positions;
            REQUIRE(std::includes(grown.begin(), grown.end(), keys.begin(), keys.end()));
        }
    }
}

TEST_CASE("weight plans combine masking and name weighting") {
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ByteTokenizer tok;
    const tlt::ClassifierRules& rules = tlt::default_rules();

    tlt::Trajectory t;
    t.id = "plan";
    t.query = "q";
    {
        tlt::CallStep ok;
        ok.call = tlt::parse_call("send_email(to=a, body=b)");
        ok.feedback.raw_text = "ok";
        t.steps.push_back(std::move(ok));
        tlt::CallStep bad;
        bad.call = tlt::parse_call("get_weather()");
        bad.feedback.raw_text = "get_weather() missing 1 required positional argument: city";
        t.steps.push_back(std::move(bad));
    }

    const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, rules);
    REQUIRE(plan.trajectory_id == "plan");
    REQUIRE(plan.steps.size() == 2);

    // Step 0: unmasked; the name starts the text, so position 0 carries 9.
    const tlt::StepWeightPlan& s0 = plan.steps[0];
    REQUIRE_FALSE(s0.masked);
    REQUIRE_FALSE(s0.unknown_tool);
    REQUIRE(s0.category == tlt::ErrorCategory::AllRight);
    REQUIRE(s0.weights[0] == 9.0);
    for (std::size_t m = 1; m < s0.weights.size(); ++m) REQUIRE(s0.weights[m] == 1.0);
    REQUIRE(s0.effective_weight(0) == 9.0);

    // Step 1: masked by its feedback; weights still recorded, effect zero.
    const tlt::StepWeightPlan& s1 = plan.steps[1];
    REQUIRE(s1.masked);
    REQUIRE(s1.category == tlt::ErrorCategory::ParameterMissing);
    for (std::size_t m = 0; m < s1.tokens.size(); ++m) REQUIRE(s1.effective_weight(m) == 0.0);
    // get_weather's key span keeps weight 1 anyway (5/6 clips up).
    for (double w : s1.weights) REQUIRE(w == 1.0);
}

TEST_CASE("weight plan flags and degenerate configurations") {
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ByteTokenizer tok;
    const tlt::ClassifierRules& rules = tlt::default_rules();

    SECTION("unknown tool is flagged, unweighted, and not masked") {
        tlt::Trajectory t;
        t.id = "u";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("google_search(query=x)");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));
        const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, rules);
        REQUIRE(plan.steps[0].unknown_tool);
        REQUIRE_FALSE(plan.steps[0].masked);
        for (double w : plan.steps[0].weights) REQUIRE(w == 1.0);
    }

    SECTION("unparseable call is flagged the same way") {
        tlt::Trajectory t;
        t.id = "u2";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("let me think about this");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));
        const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, rules);
        REQUIRE(plan.steps[0].unknown_tool);
        for (double w : plan.steps[0].weights) REQUIRE(w == 1.0);
    }

    SECTION("w_max = 1 collapses every weight to 1") {
        tlt::Trajectory t;
        t.id = "w1";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call("send_email(to=a)");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));
        tlt::WeightPlanConfig cfg;
        cfg.w_max = 1.0;
        const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, rules, cfg);
        for (double w : plan.steps[0].weights) REQUIRE(w == 1.0);
    }

    SECTION("structured form weights the name span inside the JSON") {
        tlt::Trajectory t;
        t.id = "s";
        t.query = "q";
        tlt::CallStep step;
        step.call = tlt::parse_call(R"({"name": "send_email", "arguments": {"to": "a"}})");
        step.feedback.raw_text = "ok";
        t.steps.push_back(std::move(step));
        const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, rules);
        const std::size_t name_at = t.steps[0].call.raw_text.find("send_email");
        REQUIRE(plan.steps[0].weights[name_at] == 9.0);
        double total = 0.0;
        for (double w : plan.steps[0].weights) total += w;
        // Exactly one position carries the 9; everything else is 1.
        REQUIRE(total == static_cast<double>(plan.steps[0].weights.size()) + 8.0);
    }

    SECTION("invalid w_max is rejected") {
        tlt::Trajectory t;
        t.id = "bad";
        t.query = "q";
        tlt::WeightPlanConfig cfg;
        cfg.w_max = 0.0;
        REQUIRE_THROWS_AS(tlt::build_weight_plan(t, reg, tok, rules, cfg), tlt::ConfigError);
    }
}

TEST_CASE("weight plan JSON round trip") {
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ByteTokenizer tok;
    tlt::Trajectory t;
    t.id = "rt";
    t.query = "q";
    tlt::CallStep a;
    a.call = tlt::parse_call("send_email(to=a)");
    a.feedback.raw_text = "ok";
    t.steps.push_back(std::move(a));
    tlt::CallStep b;
    b.call = tlt::parse_call("oops");
    b.feedback.raw_text = "{\"error\": \"Response error.\"}";
    t.steps.push_back(std::move(b));

    const tlt::TokenWeightPlan plan = tlt::build_weight_plan(t, reg, tok, tlt::default_rules());
    const tlt::TokenWeightPlan back =
        tlt::weight_plan_from_json(tlt::weight_plan_to_json(plan), "rt");
    REQUIRE(back.trajectory_id == plan.trajectory_id);
    REQUIRE(back.steps.size() == plan.steps.size());
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        REQUIRE(back.steps[s].tokens == plan.steps[s].tokens);
        REQUIRE(back.steps[s].weights == plan.steps[s].weights);
        REQUIRE(back.steps[s].masked == plan.steps[s].masked);
        REQUIRE(back.steps[s].unknown_tool == plan.steps[s].unknown_tool);
        REQUIRE(back.steps[s].category == plan.steps[s].category);
    }

    REQUIRE_THROWS_AS(tlt::weight_plan_from_json(tlt::json::parse(
                          R"({"id": "x", "steps": [{"tokens": [1, 2], "weights": [1.0], "masked": false}]})"),
                      "rt"),
                      tlt::ParseError);
}

TEST_CASE("vocabulary tokenizer splits and policies still align") {
    // Subword vocabulary covering the shared prefix as one token.
    const tlt::VocabTokenizer tok({"get_w", "eather", "iki", "send_email"});
    const tlt::ToolRegistry reg = oracle::weather_registry();
    const tlt::ToolTrie trie = tlt::build_tool_trie(reg, tok);

    // get_weather = [get_w][eather]; position 1's prefix node carries both get_* tools.
    const tlt::KeyTokenSplit weather = tlt::key_token_split(trie, "get_weather", tok, 9.0);
    REQUIRE(tok.tokenize("get_weather").size() == 2);
    REQUIRE(weather.key_positions == std::set<std::size_t>{0, 1});
    REQUIRE(weather.weight == 1.0);

    // send_email is a single token: K = {0}, nothing non-key.
    const tlt::KeyTokenSplit email = tlt::key_token_split(trie, "send_email", tok, 9.0);
    REQUIRE(tok.tokenize("send_email").size() == 1);
    REQUIRE(email.key_positions == std::set<std::size_t>{0});
    REQUIRE(email.non_key_positions.empty());
    REQUIRE(email.weight == 1.0);

    REQUIRE(tok.detokenize(tok.tokenize("get_weather(city=Oslo)")) == "get_weather(city=Oslo)");
}
