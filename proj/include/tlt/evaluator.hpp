#pragma once

#include <string>
#include <vector>

#include "tlt/classifier.hpp"
#include "tlt/errors.hpp"
#include "tlt/reward.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// A trajectory only counts as answered in time within this many turns.
inline constexpr std::size_t kMaxValidTurns = 9;

// Single-turn accuracy at three nested strictness levels: right tool (TS),
// right tool and parameter-name set (PI), and right values too (CF). Each
// level strictly strengthens the previous, so cf <= pi <= ts always.
struct SingleTurnReport {
    std::size_t total = 0;
    std::size_t ts_count = 0;
    std::size_t pi_count = 0;
    std::size_t cf_count = 0;
    double ts = 0.0;
    double pi = 0.0;
    double cf = 0.0;

    json to_json() const {
        return json{{"ts", ts},
                    {"pi", pi},
                    {"cf", cf},
                    {"counts",
                     {{"total", total},
                      {"tool_selection", ts_count},
                      {"param_identification", pi_count},
                      {"content_filling", cf_count}}}};
    }
};

inline SingleTurnReport eval_single_turn(const std::vector<ToolCall>& preds,
                                         const std::vector<GoldCall>& golds,
                                         const ToolRegistry& registry,
                                         const CanonConfig& canon = {}) {
    if (preds.size() != golds.size())
        throw AlignmentError("got " + std::to_string(preds.size()) + " predictions but " +
                             std::to_string(golds.size()) + " gold calls");
    if (preds.empty()) throw ConfigError("evaluation requires at least one prediction");

    SingleTurnReport report;
    report.total = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const RewardBreakdown b = compare_call(preds[i], golds[i], registry, canon);
        // Outcome encodes the nesting: ParamIssues and better means the tool
        // was right; ContentIssues and better means the names were right too.
        if (b.outcome == CallOutcome::ParamIssues || b.outcome == CallOutcome::ContentIssues ||
            b.outcome == CallOutcome::Correct)
            ++report.ts_count;
        if (b.outcome == CallOutcome::ContentIssues || b.outcome == CallOutcome::Correct)
            ++report.pi_count;
        if (b.outcome == CallOutcome::Correct) ++report.cf_count;
    }
    const double n = static_cast<double>(report.total);
    report.ts = 100.0 * static_cast<double>(report.ts_count) / n;
    report.pi = 100.0 * static_cast<double>(report.pi_count) / n;
    report.cf = 100.0 * static_cast<double>(report.cf_count) / n;
    return report;
}

// Multi-turn rates over a feedback-classified corpus. DE covers the
// documentation-misreading categories (tool or parameter hallucination,
// missing parameter); CE covers every other error category; together they
// partition the erroneous calls. VA is the share of trajectories answered
// within kMaxValidTurns turns.
struct TrajectoryEvalDetail {
    std::string id;
    std::size_t calls = 0;
    std::size_t de_calls = 0;
    std::size_t ce_calls = 0;
    bool valid_answer = false;
};

struct MultiTurnReport {
    double de = 0.0;
    double ce = 0.0;
    double va = 0.0;
    std::size_t total_calls = 0;
    std::size_t de_count = 0;
    std::size_t ce_count = 0;
    std::size_t total_trajectories = 0;
    std::size_t valid_answer_count = 0;
    std::vector<TrajectoryEvalDetail> detail;

    json to_json() const {
        json per = json::array();
        for (const auto& d : detail)
            per.push_back({{"id", d.id},
                           {"calls", d.calls},
                           {"de_calls", d.de_calls},
                           {"ce_calls", d.ce_calls},
                           {"valid_answer", d.valid_answer}});
        return json{{"de", de},
                    {"ce", ce},
                    {"va", va},
                    {"counts",
                     {{"calls", total_calls},
                      {"de_calls", de_count},
                      {"ce_calls", ce_count},
                      {"trajectories", total_trajectories},
                      {"valid_answers", valid_answer_count}}},
                    {"per_trajectory", per}};
    }
};

inline bool is_doc_error(ErrorCategory c) {
    return c == ErrorCategory::ToolHallucination || c == ErrorCategory::ParameterHallucination ||
           c == ErrorCategory::ParameterMissing;
}

inline MultiTurnReport eval_multi_turn(const std::vector<Trajectory>& corpus,
                                       const ClassifierRules& rules) {
    if (corpus.empty()) throw ConfigError("evaluation requires a non-empty corpus");

    MultiTurnReport report;
    report.total_trajectories = corpus.size();
    for (const auto& t : corpus) {
        TrajectoryEvalDetail d;
        d.id = t.id;
        d.calls = t.steps.size();
        for (const auto& step : t.steps) {
            const ErrorCategory c = classify_feedback(step.feedback.raw_text, rules);
            if (c == ErrorCategory::AllRight) continue;
            if (is_doc_error(c))
                ++d.de_calls;
            else
                ++d.ce_calls;
        }
        d.valid_answer = t.final_answer.has_value() && t.turn_count() <= kMaxValidTurns;
        report.total_calls += d.calls;
        report.de_count += d.de_calls;
        report.ce_count += d.ce_calls;
        if (d.valid_answer) ++report.valid_answer_count;
        report.detail.push_back(std::move(d));
    }
    if (report.total_calls > 0) {
        report.de = 100.0 * static_cast<double>(report.de_count) /
                    static_cast<double>(report.total_calls);
        report.ce = 100.0 * static_cast<double>(report.ce_count) /
                    static_cast<double>(report.total_calls);
    }
    report.va = 100.0 * static_cast<double>(report.valid_answer_count) /
                static_cast<double>(report.total_trajectories);
    return report;
}

}  // namespace tlt
