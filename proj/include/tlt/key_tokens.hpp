#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlt/classifier.hpp"
#include "tlt/errors.hpp"
#include "tlt/tokenizer.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Prefix trie over the tokenized tool names of one registry. Each node
// records every tool whose tokenization passes through it; the root
// therefore carries the whole registry. A token position of a name is
// "still ambiguous" exactly while the node reached so far carries two
// or more tools.
class ToolTrie {
public:
    struct Node {
        std::map<int, int> children;           // token id -> node index
        std::vector<std::string> tools;        // names passing through, sorted
        std::string terminal_tool;             // set when a name ends here
        bool terminal = false;
    };

    ToolTrie() { nodes_.emplace_back(); }

    const Node& node(int idx) const { return nodes_[static_cast<std::size_t>(idx)]; }
    const Node& root() const { return nodes_[0]; }
    std::size_t node_count() const { return nodes_.size(); }

    // Index of the node reached after consuming `tokens`, or -1.
    int walk(const std::vector<int>& tokens) const {
        int cur = 0;
        for (int id : tokens) {
            auto it = nodes_[static_cast<std::size_t>(cur)].children.find(id);
            if (it == nodes_[static_cast<std::size_t>(cur)].children.end()) return -1;
            cur = it->second;
        }
        return cur;
    }

    void insert(const std::string& tool, const std::vector<int>& tokens) {
        int cur = 0;
        add_tool(0, tool);
        for (int id : tokens) {
            auto it = nodes_[static_cast<std::size_t>(cur)].children.find(id);
            if (it == nodes_[static_cast<std::size_t>(cur)].children.end()) {
                nodes_.emplace_back();
                int next = static_cast<int>(nodes_.size()) - 1;
                nodes_[static_cast<std::size_t>(cur)].children[id] = next;
                cur = next;
            } else {
                cur = it->second;
            }
            add_tool(cur, tool);
        }
        Node& end = nodes_[static_cast<std::size_t>(cur)];
        if (end.terminal)
            throw ConfigError("tools '" + end.terminal_tool + "' and '" + tool +
                              "' tokenize to the same sequence");
        end.terminal = true;
        end.terminal_tool = tool;
    }

private:
    void add_tool(int idx, const std::string& tool) {
        auto& v = nodes_[static_cast<std::size_t>(idx)].tools;
        auto it = std::lower_bound(v.begin(), v.end(), tool);
        if (it == v.end() || *it != tool) v.insert(it, tool);
    }

    std::vector<Node> nodes_;
};

inline ToolTrie build_tool_trie(const ToolRegistry& registry, const Tokenizer& tokenizer) {
    if (registry.tools.empty()) throw ConfigError("registry must contain at least one tool");
    ToolTrie trie;
    for (const auto& tool : registry.tools) trie.insert(tool.name, tokenizer.tokenize(tool.name));
    return trie;
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// Key/non-key partition of one tool name's token positions, plus the
// weight shared by its key tokens: CLIP(|NK|/|K|, 1, w_max).
struct KeyTokenSplit {
    std::string tool_name;
    std::set<std::size_t> key_positions;      // K, always holds position 0
    std::set<std::size_t> non_key_positions;  // NK
    double weight = 1.0;
};

// Position 0 is always key; position m >= 1 is key iff the token prefix
// before it is shared with at least one other tool (trie node carries >= 2).
inline KeyTokenSplit key_token_split(const ToolTrie& trie, const std::string& tool_name,
                                     const Tokenizer& tokenizer, double w_max) {
    if (w_max < 1.0) throw ConfigError("w_max must be >= 1");
    const std::vector<int> tokens = tokenizer.tokenize(tool_name);
    KeyTokenSplit split;
    split.tool_name = tool_name;

    int cur = 0;
    bool known = true;
    for (std::size_t m = 0; m < tokens.size(); ++m) {
        const auto& node = trie.node(cur);
        bool key = (m == 0) || node.tools.size() >= 2;
        if (key)
            split.key_positions.insert(m);
        else
            split.non_key_positions.insert(m);
        auto it = node.children.find(tokens[m]);
        if (it == node.children.end()) {
            known = false;
            break;
        }
        cur = it->second;
    }
    if (!known || !trie.node(cur).terminal || trie.node(cur).terminal_tool != tool_name)
        throw ConfigError("tool '" + tool_name + "' is not in the trie");

    const double ratio = static_cast<double>(split.non_key_positions.size()) /
                         static_cast<double>(split.key_positions.size());
    split.weight = clip(ratio, 1.0, w_max);
    return split;
}

// Per-token training weights for one trajectory step. `weights` holds the
// pre-mask values; a masked step contributes zero regardless of them.
struct StepWeightPlan {
    std::vector<int> tokens;
    std::vector<double> weights;
    bool masked = false;
    bool unknown_tool = false;
    ErrorCategory category = ErrorCategory::AllRight;

    double effective_weight(std::size_t m) const { return masked ? 0.0 : weights[m]; }
};

struct TokenWeightPlan {
    std::string trajectory_id;
    std::vector<StepWeightPlan> steps;
};

struct WeightPlanConfig {
    double w_max = 9.0;
    std::set<ErrorCategory> mask_categories = default_mask_categories();
};

namespace detail {

// Token ids of each step's call text; the shared tokenization every
// per-token structure (weights, log-probs) aligns to.
inline std::vector<std::vector<int>> step_tokens(const Trajectory& t, const Tokenizer& tokenizer) {
    std::vector<std::vector<int>> out;
    out.reserve(t.steps.size());
    for (const auto& step : t.steps) out.push_back(tokenizer.tokenize(step.call.raw_text));
    return out;
}

// Token index range [first, last) covering byte range [begin, end) of the
// text that produced `tokens`. Requires an invertible tokenizer, which both
// provided implementations are.
inline std::pair<std::size_t, std::size_t> token_span_for_bytes(const std::vector<int>& tokens,
                                                                const Tokenizer& tokenizer,
                                                                std::size_t begin,
                                                                std::size_t end) {
    std::size_t first = tokens.size(), last = tokens.size();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t len = tokenizer.detokenize({tokens[i]}).size();
        const std::size_t tok_begin = offset, tok_end = offset + len;
        if (tok_begin < end && tok_end > begin) {
            if (first == tokens.size()) first = i;
            last = i + 1;
        }
        offset = tok_end;
    }
    return {first, last};
}

}  // namespace detail

// Combines the two SFT-side mechanisms for one trajectory: steps whose
// feedback classifies into a masked category are excluded from the loss,
// and the key tokens of each call's tool-name span carry the split weight.
// A call whose tool is missing from the registry (or does not parse) is
// flagged and left at weight 1; masking remains feedback-driven, and the
// reward engine owns hallucination semantics.
inline TokenWeightPlan build_weight_plan(const Trajectory& t, const ToolRegistry& registry,
                                         const Tokenizer& tokenizer, const ClassifierRules& rules,
                                         const WeightPlanConfig& config = {}) {
    if (config.w_max < 1.0) throw ConfigError("w_max must be >= 1");
    const ToolTrie trie = build_tool_trie(registry, tokenizer);
    const ErroneousCallSet masked = find_erroneous_calls(t, rules, config.mask_categories);

    TokenWeightPlan plan;
    plan.trajectory_id = t.id;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const CallStep& step = t.steps[i];
        StepWeightPlan sp;
        sp.tokens = tokenizer.tokenize(step.call.raw_text);
        sp.weights.assign(sp.tokens.size(), 1.0);
        sp.category = classify_feedback(step.feedback.raw_text, rules);
        sp.masked = masked.contains(i);

        const bool known =
            step.call.parsed && registry.contains(step.call.parsed->tool_name);
        if (!known) {
            sp.unknown_tool = true;
            plan.steps.push_back(std::move(sp));
            continue;
        }

        const std::string& name = step.call.parsed->tool_name;
        const KeyTokenSplit split = key_token_split(trie, name, tokenizer, config.w_max);

        const std::size_t byte_begin = step.call.raw_text.find(name);
        if (byte_begin == std::string::npos) {
            // Structured calls may escape the name; leave weights flat.
            plan.steps.push_back(std::move(sp));
            continue;
        }
        auto [first, last] = detail::token_span_for_bytes(sp.tokens, tokenizer, byte_begin,
                                                          byte_begin + name.size());
        const std::vector<int> name_tokens = tokenizer.tokenize(name);
        const bool aligned =
            last - first == name_tokens.size() &&
            std::equal(name_tokens.begin(), name_tokens.end(), sp.tokens.begin() + first);
        if (aligned) {
            for (std::size_t pos : split.key_positions) sp.weights[first + pos] = split.weight;
        } else {
            // Subword boundary straddles the name span; weight the first
            // covering token (the always-key position) and leave the rest.
            if (first < sp.tokens.size()) sp.weights[first] = split.weight;
        }
        plan.steps.push_back(std::move(sp));
    }
    return plan;
}

inline json weight_plan_to_json(const TokenWeightPlan& plan) {
    json steps = json::array();
    for (const auto& s : plan.steps) {
        steps.push_back({{"tokens", s.tokens},
                         {"weights", s.weights},
                         {"masked", s.masked},
                         {"unknown_tool", s.unknown_tool},
                         {"category", category_name(s.category)}});
    }
    return json{{"id", plan.trajectory_id}, {"steps", steps}};
}

inline TokenWeightPlan weight_plan_from_json(const json& doc, const std::string& where) {
    if (!doc.is_object() || !doc.contains("id") || !doc.contains("steps") ||
        !doc["steps"].is_array())
        throw ParseError(where + ": plan must be an object with \"id\" and \"steps\"");
    TokenWeightPlan plan;
    plan.trajectory_id = doc["id"].get<std::string>();
    for (std::size_t i = 0; i < doc["steps"].size(); ++i) {
        const auto& js = doc["steps"][i];
        const std::string swhere = where + ".steps[" + std::to_string(i) + "]";
        if (!js.is_object() || !js.contains("tokens") || !js.contains("weights") ||
            !js.contains("masked"))
            throw ParseError(swhere + ": \"tokens\", \"weights\", \"masked\" required");
        StepWeightPlan sp;
        sp.tokens = js["tokens"].get<std::vector<int>>();
        sp.weights = js["weights"].get<std::vector<double>>();
        sp.masked = js["masked"].get<bool>();
        if (js.contains("unknown_tool")) sp.unknown_tool = js["unknown_tool"].get<bool>();
        if (js.contains("category"))
            sp.category = category_from_name(js["category"].get<std::string>());
        if (sp.tokens.size() != sp.weights.size())
            throw ParseError(swhere + ": tokens and weights must have equal length");
        plan.steps.push_back(std::move(sp));
    }
    return plan;
}

}  // namespace tlt
