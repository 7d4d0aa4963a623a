#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tlt/errors.hpp"
#include "tlt/key_tokens.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Per-step, per-position log-probabilities the scored model assigned to the
// reference tokens. Must align index-for-index with a TokenWeightPlan.
struct TokenLogProbs {
    std::vector<std::vector<double>> per_step;
};

// Gradient (or parameter delta) over a ToyModel's logit table.
using GradientTable = std::map<std::string, std::vector<double>>;

namespace detail {

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out = log_softmax(logits);
    for (double& v : out) v = std::exp(v);
    return out;
}

}  // namespace detail

// Conditional categorical model: one logit vector per context key, where the
// key is the query id plus the previous `context_window` token ids. Absent
// keys read as all-zero logits (uniform). The logits are the parameters, so
// gradients are exact and the table is enumerable.
class ToyModel {
public:
    static constexpr std::size_t kDefaultContextWindow = 4;

    explicit ToyModel(std::size_t vocab_size, std::size_t context_window = kDefaultContextWindow)
        : vocab_size_(vocab_size), context_window_(context_window) {
        if (vocab_size == 0) throw ConfigError("toy model vocabulary must be non-empty");
    }

    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t context_window() const { return context_window_; }

    static std::string make_key(const std::string& query_id, const std::vector<int>& history,
                                std::size_t window) {
        std::ostringstream os;
        os << query_id << '|';
        const std::size_t n = std::min(window, history.size());
        for (std::size_t i = history.size() - n; i < history.size(); ++i) {
            if (i > history.size() - n) os << ',';
            os << history[i];
        }
        return os.str();
    }

    std::string context_key(const std::string& query_id, const std::vector<int>& history) const {
        return make_key(query_id, history, context_window_);
    }

    // Logits for a key; absent keys are all zeros.
    std::vector<double> logits_of(const std::string& key) const {
        auto it = table_.find(key);
        if (it != table_.end()) return it->second;
        return std::vector<double>(vocab_size_, 0.0);
    }

    // Mutable logits, materializing the row on first touch.
    std::vector<double>& logits_ref(const std::string& key) {
        auto it = table_.find(key);
        if (it == table_.end())
            it = table_.emplace(key, std::vector<double>(vocab_size_, 0.0)).first;
        return it->second;
    }

    std::vector<double> log_probs(const std::string& key) const {
        return detail::log_softmax(logits_of(key));
    }

    std::vector<double> probs(const std::string& key) const {
        return detail::softmax(logits_of(key));
    }

    double logprob(const std::string& key, int token) const {
        check_token(token);
        return log_probs(key)[static_cast<std::size_t>(token)];
    }

    void check_token(int token) const {
        if (token < 0 || static_cast<std::size_t>(token) >= vocab_size_)
            throw ConfigError("token id " + std::to_string(token) +
                              " outside vocabulary of size " + std::to_string(vocab_size_));
    }

    std::map<std::string, std::vector<double>>& params() { return table_; }
    const std::map<std::string, std::vector<double>>& params() const { return table_; }

    // Descent step along a gradient table: theta -= lr * grad. Rows absent
    // from the gradient are never touched, so their bits cannot change.
    void apply_gradient(const GradientTable& grad, double lr) {
        for (const auto& [key, g] : grad) {
            if (g.size() != vocab_size_)
                throw AlignmentError("gradient row for '" + key + "' has " +
                                     std::to_string(g.size()) + " entries, expected " +
                                     std::to_string(vocab_size_));
            auto& row = logits_ref(key);
            for (std::size_t j = 0; j < vocab_size_; ++j) row[j] -= lr * g[j];
        }
    }

    json to_json() const {
        json logits = json::object();
        for (const auto& [key, row] : table_) logits[key] = row;
        return json{{"vocab_size", vocab_size_},
                    {"context_window", context_window_},
                    {"logits", logits}};
    }

    static ToyModel from_json(const json& doc, const std::string& where) {
        if (!doc.is_object() || !doc.contains("vocab_size") || !doc.contains("context_window"))
            throw ParseError(where + ": checkpoint must carry \"vocab_size\" and \"context_window\"");
        ToyModel model(doc["vocab_size"].get<std::size_t>(),
                       doc["context_window"].get<std::size_t>());
        if (doc.contains("logits")) {
            if (!doc["logits"].is_object()) throw ParseError(where + ": \"logits\" must be an object");
            for (const auto& [key, row] : doc["logits"].items()) {
                auto values = row.get<std::vector<double>>();
                if (values.size() != model.vocab_size_)
                    throw ParseError(where + ": logit row for '" + key + "' has " +
                                     std::to_string(values.size()) + " entries, expected " +
                                     std::to_string(model.vocab_size_));
                model.table_[key] = std::move(values);
            }
        }
        return model;
    }

private:
    std::size_t vocab_size_;
    std::size_t context_window_;
    std::map<std::string, std::vector<double>> table_;
};

struct LossReport {
    double total = 0.0;
    std::vector<double> per_step;               // masked steps contribute exactly 0
    std::size_t contributing_tokens = 0;
    std::optional<GradientTable> gradient;      // filled by the toy-model pathway

    json to_json() const {
        return json{{"total", total},
                    {"per_step", per_step},
                    {"contributing_tokens", contributing_tokens}};
    }
};

namespace detail {

inline void check_alignment(const TokenLogProbs& logprobs, const TokenWeightPlan& plan) {
    if (logprobs.per_step.size() != plan.steps.size())
        throw AlignmentError("plan has " + std::to_string(plan.steps.size()) +
                             " steps but log-probs have " +
                             std::to_string(logprobs.per_step.size()));
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        if (logprobs.per_step[s].size() != plan.steps[s].tokens.size())
            throw AlignmentError("step " + std::to_string(s) + ": " +
                                 std::to_string(plan.steps[s].tokens.size()) +
                                 " tokens but " + std::to_string(logprobs.per_step[s].size()) +
                                 " log-probs");
    }
}

// Visits every token of the plan in stream order with its context key.
// History spans step boundaries, masked steps included: masking removes a
// step from the loss, not from what the model conditions on.
template <typename Fn>
void for_each_plan_token(const TokenWeightPlan& plan, const std::string& query_id,
                         std::size_t window, Fn&& fn) {
    std::vector<int> history;
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        const auto& step = plan.steps[s];
        for (std::size_t m = 0; m < step.tokens.size(); ++m) {
            fn(s, m, step.tokens[m], ToyModel::make_key(query_id, history, window));
            history.push_back(step.tokens[m]);
        }
    }
}

}  // namespace detail

// loss = -sum over unmasked steps, over positions, of w_s^m * logprob_s^m.
// Weights all 1 reduces this to erroneous-step masking alone; an empty mask
// reduces it to key-token weighting alone; both neutral is plain NLL.
inline LossReport weighted_masked_loss(const TokenLogProbs& logprobs, const TokenWeightPlan& plan) {
    detail::check_alignment(logprobs, plan);
    LossReport report;
    report.per_step.assign(plan.steps.size(), 0.0);
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        const auto& step = plan.steps[s];
        if (step.masked) continue;
        double acc = 0.0;
        for (std::size_t m = 0; m < step.tokens.size(); ++m)
            acc -= step.weights[m] * logprobs.per_step[s][m];
        report.per_step[s] = acc;
        report.total += acc;
        report.contributing_tokens += step.tokens.size();
    }
    return report;
}

// Log-probabilities the toy model assigns to each call token of the
// trajectory, conditioning on the query id and the running token history.
inline TokenLogProbs toy_logprobs(const ToyModel& model, const Trajectory& t,
                                  const Tokenizer& tokenizer) {
    TokenLogProbs out;
    std::vector<int> history;
    for (const auto& step : t.steps) {
        std::vector<double> lps;
        for (int token : tokenizer.tokenize(step.call.raw_text)) {
            lps.push_back(model.logprob(model.context_key(t.id, history), token));
            history.push_back(token);
        }
        out.per_step.push_back(std::move(lps));
    }
    return out;
}

namespace detail {

inline void check_plan_matches(const Trajectory& t, const TokenWeightPlan& plan) {
    if (plan.trajectory_id != t.id)
        throw AlignmentError("plan is for trajectory '" + plan.trajectory_id +
                             "' but got '" + t.id + "'");
    if (plan.steps.size() != t.steps.size())
        throw AlignmentError("plan has " + std::to_string(plan.steps.size()) +
                             " steps but trajectory has " + std::to_string(t.steps.size()));
}

}  // namespace detail

// Scalar loss of the toy model on one planned trajectory; the function the
// analytic gradient differentiates.
inline double toy_loss(const ToyModel& model, const Trajectory& t, const TokenWeightPlan& plan) {
    detail::check_plan_matches(t, plan);
    double total = 0.0;
    detail::for_each_plan_token(
        plan, t.id, model.context_window(),
        [&](std::size_t s, std::size_t m, int token, const std::string& key) {
            const double w = plan.steps[s].effective_weight(m);
            if (w == 0.0) {
                model.check_token(token);
                return;
            }
            total -= w * model.logprob(key, token);
        });
    return total;
}

// Exact gradient of toy_loss w.r.t. every logit: per token, w * (softmax -
// onehot) added into the token's context row. Masked steps add nothing, so
// rows touched only by them never enter the table at all.
inline GradientTable analytic_gradient(const ToyModel& model, const Trajectory& t,
                                       const TokenWeightPlan& plan) {
    detail::check_plan_matches(t, plan);
    GradientTable grad;
    detail::for_each_plan_token(
        plan, t.id, model.context_window(),
        [&](std::size_t s, std::size_t m, int token, const std::string& key) {
            const double w = plan.steps[s].effective_weight(m);
            model.check_token(token);
            if (w == 0.0) return;
            auto it = grad.find(key);
            if (it == grad.end())
                it = grad.emplace(key, std::vector<double>(model.vocab_size(), 0.0)).first;
            const std::vector<double> p = model.probs(key);
            for (std::size_t j = 0; j < p.size(); ++j) it->second[j] += w * p[j];
            it->second[static_cast<std::size_t>(token)] -= w;
        });
    return grad;
}

namespace detail {

// Builds the log-probs the loss needs directly from plan tokens, for use
// where only the plan (not the trajectory steps) is in hand.
inline TokenLogProbs plan_logprobs(const ToyModel& model, const std::string& query_id,
                                   const TokenWeightPlan& plan) {
    TokenLogProbs out;
    out.per_step.resize(plan.steps.size());
    for (std::size_t s = 0; s < plan.steps.size(); ++s)
        out.per_step[s].resize(plan.steps[s].tokens.size());
    for_each_plan_token(plan, query_id, model.context_window(),
                        [&](std::size_t s, std::size_t m, int token, const std::string& key) {
                            out.per_step[s][m] = model.logprob(key, token);
                        });
    return out;
}

}  // namespace detail

// Full loss report for the toy model, gradient included. Log-probs come from
// the plan tokens themselves, so the report always matches what toy_loss and
// the analytic gradient see.
inline LossReport toy_loss_report(const ToyModel& model, const Trajectory& t,
                                  const TokenWeightPlan& plan, bool with_gradient = false) {
    detail::check_plan_matches(t, plan);
    LossReport report = weighted_masked_loss(detail::plan_logprobs(model, t.id, plan), plan);
    if (with_gradient) report.gradient = analytic_gradient(model, t, plan);
    return report;
}

// Central finite differences against a caller-supplied gradient table over
// every parameter it names. Returns the worst relative error, falling back
// to the absolute difference when both magnitudes sit below 1e-8.
inline double finite_diff_check_against(const ToyModel& model, const Trajectory& t,
                                        const TokenWeightPlan& plan, const GradientTable& grad,
                                        double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("finite-difference step must be positive");
    ToyModel probe = model;
    double worst = 0.0;
    for (const auto& [key, row] : grad) {
        auto& theta = probe.logits_ref(key);
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double saved = theta[j];
            theta[j] = saved + eps;
            const double up = toy_loss(probe, t, plan);
            theta[j] = saved - eps;
            const double down = toy_loss(probe, t, plan);
            theta[j] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double a = row[j];
            const double denom = std::max(std::fabs(a), std::fabs(fd));
            const double err = denom < 1e-8 ? std::fabs(a - fd) : std::fabs(a - fd) / denom;
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// The standard check: analytic gradient vs central differences.
inline double finite_diff_check(const ToyModel& model, const Trajectory& t,
                                const TokenWeightPlan& plan, double eps = 1e-5) {
    return finite_diff_check_against(model, t, plan, analytic_gradient(model, t, plan), eps);
}

// One plain gradient-descent step on the summed batch loss. Returns the
// pre-update loss. Parameters reached only through masked steps are not in
// the gradient table, so apply_gradient cannot touch them.
inline double sft_step(ToyModel& model, const std::vector<Trajectory>& batch,
                       const std::vector<TokenWeightPlan>& plans, double learning_rate) {
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch.size() != plans.size())
        throw AlignmentError("batch has " + std::to_string(batch.size()) + " trajectories but " +
                             std::to_string(plans.size()) + " plans");
    double total = 0.0;
    GradientTable grad;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        total += toy_loss(model, batch[i], plans[i]);
        for (auto& [key, row] : analytic_gradient(model, batch[i], plans[i])) {
            auto it = grad.find(key);
            if (it == grad.end()) {
                grad.emplace(key, std::move(row));
            } else {
                for (std::size_t j = 0; j < row.size(); ++j) it->second[j] += row[j];
            }
        }
    }
    model.apply_gradient(grad, learning_rate);
    return total;
}

}  // namespace tlt
