#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlt/errors.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Exhaustive, mutually exclusive feedback taxonomy.
enum class ErrorCategory {
    AllRight,
    ToolInstability,
    ToolCallFailure,
    ToolHallucination,
    ParameterHallucination,
    ParameterMissing,
    Others,
};

inline constexpr std::array<ErrorCategory, 7> kAllCategories = {
    ErrorCategory::AllRight,          ErrorCategory::ToolInstability,
    ErrorCategory::ToolCallFailure,   ErrorCategory::ToolHallucination,
    ErrorCategory::ParameterHallucination, ErrorCategory::ParameterMissing,
    ErrorCategory::Others,
};

inline std::string category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::AllRight: return "AllRight";
        case ErrorCategory::ToolInstability: return "ToolInstability";
        case ErrorCategory::ToolCallFailure: return "ToolCallFailure";
        case ErrorCategory::ToolHallucination: return "ToolHallucination";
        case ErrorCategory::ParameterHallucination: return "ParameterHallucination";
        case ErrorCategory::ParameterMissing: return "ParameterMissing";
        case ErrorCategory::Others: return "Others";
    }
    return "Others";
}

inline ErrorCategory category_from_name(const std::string& s) {
    for (ErrorCategory c : kAllCategories)
        if (category_name(c) == s) return c;
    throw ParseError("unknown error category '" + s + "'");
}

// All six non-AllRight categories; the default mask set for gradient blocking.
inline std::set<ErrorCategory> default_mask_categories() {
    return {ErrorCategory::ToolInstability,        ErrorCategory::ToolCallFailure,
            ErrorCategory::ToolHallucination,      ErrorCategory::ParameterHallucination,
            ErrorCategory::ParameterMissing,       ErrorCategory::Others};
}

struct ClassifierRule {
    std::string pattern;
    ErrorCategory category = ErrorCategory::Others;
    std::regex compiled;
};

// Ordered regex table; first matching rule wins. When no rule fires,
// error-shaped payloads fall to Others and anything else non-empty is
// AllRight (tool outputs are arbitrary text).
struct ClassifierRules {
    std::vector<ClassifierRule> rules;

    static ClassifierRules from_json(const json& doc) {
        if (!doc.is_array()) throw ParseError("rules: top-level array required");
        ClassifierRules out;
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const auto& jr = doc[i];
            const std::string where = "rules[" + std::to_string(i) + "]";
            if (!jr.is_object() || !jr.contains("pattern") || !jr["pattern"].is_string() ||
                !jr.contains("category") || !jr["category"].is_string())
                throw ParseError(where + ": object with string \"pattern\" and \"category\" required");
            ClassifierRule rule;
            rule.pattern = jr["pattern"].get<std::string>();
            rule.category = category_from_name(jr["category"].get<std::string>());
            try {
                rule.compiled = std::regex(rule.pattern);
            } catch (const std::regex_error& e) {
                throw ParseError(where + ": bad regex: " + e.what());
            }
            out.rules.push_back(std::move(rule));
        }
        return out;
    }

    json to_json() const {
        json out = json::array();
        for (const auto& r : rules)
            out.push_back({{"pattern", r.pattern}, {"category", category_name(r.category)}});
        return out;
    }
};

inline ClassifierRules read_rules_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rules file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("rules: ") + e.what());
    }
    return ClassifierRules::from_json(doc);
}

// Built-in table, identical to data/default_rules.json.
inline const ClassifierRules& default_rules() {
    static const ClassifierRules rules = ClassifierRules::from_json(json::parse(R"rules([
  {"pattern": "Max retries exceeded",                                         "category": "ToolInstability"},
  {"pattern": "Invalid API call",                                             "category": "ToolInstability"},
  {"pattern": "[0-9]{3} (Client|Server) Error",                               "category": "ToolInstability"},
  {"pattern": "Connection (refused|reset|aborted|timed out)",                 "category": "ToolInstability"},
  {"pattern": "Read timed out",                                               "category": "ToolInstability"},
  {"pattern": "name '?[A-Za-z_][A-Za-z0-9_]*'? (is|if) not defined",          "category": "ToolHallucination"},
  {"pattern": "got an unexpected keyword argument",                           "category": "ParameterHallucination"},
  {"pattern": "missing [0-9]+ required positional arguments?",                "category": "ParameterMissing"},
  {"pattern": "missing required (parameter|argument)",                        "category": "ParameterMissing"},
  {"pattern": "not supported between instances",                              "category": "ToolCallFailure"},
  {"pattern": "not JSON serializable",                                        "category": "ToolCallFailure"},
  {"pattern": "Traceback \\(most recent call last\\)",                        "category": "ToolCallFailure"},
  {"pattern": "Response error",                                               "category": "ToolCallFailure"}
])rules"));
    return rules;
}

namespace detail {

// A payload is error-shaped when it is a JSON object carrying a top-level
// "error" member. Successful outputs may be arbitrary text, so nothing
// short of that marker demotes feedback from AllRight.
inline bool error_shaped(const std::string& text) {
    json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
    return doc.is_object() && doc.contains("error");
}

}  // namespace detail

// Total and deterministic: every feedback string maps to exactly one category.
inline ErrorCategory classify_feedback(const std::string& text, const ClassifierRules& rules) {
    for (const auto& rule : rules.rules)
        if (std::regex_search(text, rule.compiled)) return rule.category;
    if (detail::error_shaped(text)) return ErrorCategory::Others;
    if (detail::trim(text).empty()) return ErrorCategory::Others;  // silent tool, not a success
    return ErrorCategory::AllRight;
}

// The step indices of one trajectory whose feedback marks the call erroneous.
struct ErroneousCallSet {
    std::string trajectory_id;
    std::set<std::size_t> indices;
    std::map<std::size_t, ErrorCategory> categories;

    bool contains(std::size_t i) const { return indices.count(i) > 0; }
};

inline ErroneousCallSet find_erroneous_calls(const Trajectory& t, const ClassifierRules& rules,
                                             const std::set<ErrorCategory>& mask_categories) {
    ErroneousCallSet out;
    out.trajectory_id = t.id;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        ErrorCategory c = classify_feedback(t.steps[i].feedback.raw_text, rules);
        if (mask_categories.count(c)) {
            out.indices.insert(i);
            out.categories[i] = c;
        }
    }
    return out;
}

inline ErroneousCallSet find_erroneous_calls(const Trajectory& t, const ClassifierRules& rules) {
    return find_erroneous_calls(t, rules, default_mask_categories());
}

struct CorpusStats {
    std::map<ErrorCategory, std::size_t> histogram;
    std::size_t total_steps = 0;
    std::size_t total_trajectories = 0;
    std::size_t trajectories_with_error = 0;
    // Absent for an empty corpus.
    std::optional<double> trajectory_error_fraction;

    json to_json() const {
        json hist = json::object();
        for (ErrorCategory c : kAllCategories) {
            auto it = histogram.find(c);
            hist[category_name(c)] = it == histogram.end() ? 0 : it->second;
        }
        json out{{"histogram", hist},
                 {"total_steps", total_steps},
                 {"total_trajectories", total_trajectories},
                 {"trajectories_with_error", trajectories_with_error}};
        out["trajectory_error_fraction"] =
            trajectory_error_fraction ? json(*trajectory_error_fraction) : json(nullptr);
        return out;
    }
};

inline CorpusStats corpus_error_stats(const std::vector<Trajectory>& corpus,
                                      const ClassifierRules& rules) {
    CorpusStats stats;
    for (ErrorCategory c : kAllCategories) stats.histogram[c] = 0;
    stats.total_trajectories = corpus.size();
    for (const auto& t : corpus) {
        bool any_error = false;
        for (const auto& step : t.steps) {
            ErrorCategory c = classify_feedback(step.feedback.raw_text, rules);
            ++stats.histogram[c];
            ++stats.total_steps;
            if (c != ErrorCategory::AllRight) any_error = true;
        }
        if (any_error) ++stats.trajectories_with_error;
    }
    if (!corpus.empty())
        stats.trajectory_error_fraction =
            static_cast<double>(stats.trajectories_with_error) / static_cast<double>(corpus.size());
    return stats;
}

}  // namespace tlt
