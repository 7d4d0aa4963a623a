#pragma once

#include <cctype>
#include <cstdlib>
#include <map>
#include <set>
#include <string>

#include "tlt/errors.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Reference call a prediction is scored against. Arg values are canonical
// strings; validity is judged against the registry, not re-parsed.
struct GoldCall {
    std::string tool_name;
    std::map<std::string, std::string> args;

    bool operator==(const GoldCall&) const = default;
};

inline void validate_gold(const GoldCall& gold, const ToolRegistry& registry) {
    const ToolSpec* spec = registry.find(gold.tool_name);
    if (!spec) throw ConfigError("gold tool '" + gold.tool_name + "' is not in the registry");
    for (const auto& [name, value] : gold.args) {
        (void)value;
        if (!spec->has_param(name))
            throw ConfigError("gold argument '" + name + "' is not a parameter of tool '" +
                              gold.tool_name + "'");
    }
    for (const auto& required : spec->required_names()) {
        if (gold.args.find(required) == gold.args.end())
            throw ConfigError("gold call for tool '" + gold.tool_name +
                              "' omits required parameter '" + required + "'");
    }
}

inline GoldCall gold_from_json(const json& doc, const std::string& where) {
    if (!doc.is_object() || !doc.contains("tool_name") || !doc["tool_name"].is_string())
        throw ParseError(where + ": gold call must be an object with a string \"tool_name\"");
    GoldCall gold;
    gold.tool_name = doc["tool_name"].get<std::string>();
    if (doc.contains("args")) {
        if (!doc["args"].is_object()) throw ParseError(where + ": \"args\" must be an object");
        for (const auto& [name, value] : doc["args"].items())
            gold.args[name] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    return gold;
}

inline json gold_to_json(const GoldCall& gold) {
    json args = json::object();
    for (const auto& [name, value] : gold.args) args[name] = value;
    return json{{"tool_name", gold.tool_name}, {"args", args}};
}

enum class CallOutcome {
    Unparseable,
    ToolHallucination,
    WrongTool,
    ParamIssues,
    ContentIssues,
    Correct,
};

inline const char* outcome_name(CallOutcome outcome) {
    switch (outcome) {
        case CallOutcome::Unparseable: return "unparseable";
        case CallOutcome::ToolHallucination: return "tool_hallucination";
        case CallOutcome::WrongTool: return "wrong_tool";
        case CallOutcome::ParamIssues: return "param_issues";
        case CallOutcome::ContentIssues: return "content_issues";
        case CallOutcome::Correct: return "correct";
    }
    return "unparseable";
}

struct RewardBreakdown {
    CallOutcome outcome = CallOutcome::Unparseable;
    bool param_hallucination = false;
    bool param_redundant = false;
    bool param_missing = false;
    double r_p = 0.0;
    double reward = 0.0;

    json to_json() const {
        return json{{"outcome", outcome_name(outcome)},
                    {"flags",
                     {{"param_hallucination", param_hallucination},
                      {"param_redundant", param_redundant},
                      {"param_missing", param_missing}}},
                    {"r_p", r_p},
                    {"reward", reward}};
    }
};

// Value comparison knobs for the content check. Trimming always applies;
// numeric coercion treats "3" and "3.0" as equal.
struct CanonConfig {
    bool case_insensitive = false;
    bool numeric_coercion = true;
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool parse_full_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + s.size();
}

}  // namespace detail

inline bool canonical_value_eq(const std::string& a, const std::string& b,
                               const CanonConfig& config = {}) {
    std::string ca = detail::trim_copy(a);
    std::string cb = detail::trim_copy(b);
    if (config.numeric_coercion) {
        double da = 0.0, db = 0.0;
        if (detail::parse_full_double(ca, da) && detail::parse_full_double(cb, db))
            return da == db;
    }
    if (config.case_insensitive) {
        for (char& c : ca) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        for (char& c : cb) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return ca == cb;
}

// Reward constants. The parameter penalties combine additively; their worst
// sum (-1.8) stays above the parse/hallucination floor without clamping.
inline constexpr double kRewardUnparseable = -2.0;
inline constexpr double kRewardToolHallucination = -2.0;
inline constexpr double kRewardWrongTool = -1.5;
inline constexpr double kPenaltyParamHallucination = -0.8;
inline constexpr double kPenaltyParamRedundant = -0.5;
inline constexpr double kPenaltyParamMissing = -0.5;
inline constexpr double kRewardContentIssues = -0.25;
inline constexpr double kRewardCorrect = 1.0;

// Decision cascade for one prediction. Exactly one outcome; parameter flags
// only materialize once tool identity is settled.
inline RewardBreakdown compare_call(const ToolCall& pred, const GoldCall& gold,
                                    const ToolRegistry& registry, const CanonConfig& canon = {}) {
    validate_gold(gold, registry);
    RewardBreakdown out;

    if (!pred.parsed) {
        out.outcome = CallOutcome::Unparseable;
        out.reward = kRewardUnparseable;
        return out;
    }
    const ParsedCall& call = *pred.parsed;

    const ToolSpec* spec = registry.find(call.tool_name);
    if (!spec) {
        out.outcome = CallOutcome::ToolHallucination;
        out.reward = kRewardToolHallucination;
        return out;
    }

    if (call.tool_name != gold.tool_name) {
        out.outcome = CallOutcome::WrongTool;
        out.reward = kRewardWrongTool;
        return out;
    }

    std::set<std::string> pred_names;
    for (const auto& [name, value] : call.args) {
        (void)value;
        pred_names.insert(name);
    }
    for (const auto& name : pred_names) {
        if (!spec->has_param(name))
            out.param_hallucination = true;
        else if (gold.args.find(name) == gold.args.end())
            out.param_redundant = true;
    }
    for (const auto& [name, value] : gold.args) {
        (void)value;
        if (pred_names.find(name) == pred_names.end()) out.param_missing = true;
    }
    if (out.param_hallucination || out.param_redundant || out.param_missing) {
        out.outcome = CallOutcome::ParamIssues;
        out.r_p = (out.param_hallucination ? kPenaltyParamHallucination : 0.0) +
                  (out.param_redundant ? kPenaltyParamRedundant : 0.0) +
                  (out.param_missing ? kPenaltyParamMissing : 0.0);
        out.reward = out.r_p;
        return out;
    }

    for (const auto& [name, value] : gold.args) {
        const std::string* got = find_arg(call.args, name);
        if (!got || !canonical_value_eq(*got, value, canon)) {
            out.outcome = CallOutcome::ContentIssues;
            out.reward = kRewardContentIssues;
            return out;
        }
    }

    out.outcome = CallOutcome::Correct;
    out.reward = kRewardCorrect;
    return out;
}

inline double reward(const std::string& pred_text, const GoldCall& gold,
                     const ToolRegistry& registry, const CanonConfig& canon = {}) {
    return compare_call(parse_call(pred_text), gold, registry, canon).reward;
}

}  // namespace tlt
