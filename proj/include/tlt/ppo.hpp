#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tlt/loss.hpp"
#include "tlt/reward.hpp"
#include "tlt/tokenizer.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Hyperparameters used when this recipe runs against a full-size model;
// kept as named constants for documentation. The toy defaults below scale
// the learning rates up for the logit-table policy while preserving the
// 2:1 actor:critic ratio.
inline constexpr double kReferenceActorLr = 2e-6;
inline constexpr double kReferenceCriticLr = 1e-6;
inline constexpr double kReferenceSftLr = 1e-6;
inline constexpr double kReferenceSftWarmupRatio = 0.01;
inline constexpr std::size_t kReferenceRlBatchSize = 8;
inline constexpr std::size_t kReferenceRlEpochs = 3;

struct PPOConfig {
    double beta = 0.1;        // KL penalty toward the frozen reference
    double clip_eps = 0.2;
    double actor_lr = 2e-2;
    double critic_lr = 1e-2;
    std::size_t batch_size = 8;
    std::size_t epochs = 3;
    std::size_t max_len = 48;
    std::uint64_t seed = 0;
    std::size_t iterations = 625;
    // The warm-up is deliberately steep: with a logit table the first epoch
    // already pins each gold continuation, so the sampled rollouts start
    // clean and the RL phase holds the policy at the reward ceiling instead
    // of spending its tiny steps rediscovering the calls.
    std::size_t warmup_epochs = 2;
    double warmup_lr = 25.0;
    std::size_t context_window = ToyModel::kDefaultContextWindow;

    void validate() const {
        if (beta < 0.0) throw ConfigError("beta must be non-negative");
        if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("clip epsilon must lie in (0, 1)");
        if (actor_lr <= 0.0 || critic_lr <= 0.0) throw ConfigError("learning rates must be positive");
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
        if (epochs == 0) throw ConfigError("epoch count must be at least 1");
        if (max_len == 0) throw ConfigError("max emission length must be at least 1");
    }

    json to_json() const {
        return json{{"beta", beta},
                    {"clip_eps", clip_eps},
                    {"actor_lr", actor_lr},
                    {"critic_lr", critic_lr},
                    {"batch_size", batch_size},
                    {"epochs", epochs},
                    {"max_len", max_len},
                    {"seed", seed},
                    {"iterations", iterations},
                    {"warmup_epochs", warmup_epochs},
                    {"warmup_lr", warmup_lr},
                    {"context_window", context_window}};
    }

    static PPOConfig from_json(const json& doc, const std::string& where) {
        return from_json(doc, where, PPOConfig{});
    }

    static PPOConfig from_json(const json& doc, const std::string& where, const PPOConfig& base) {
        if (!doc.is_object()) throw ParseError(where + ": config must be an object");
        PPOConfig c = base;
        auto num = [&](const char* key, auto& field) {
            if (doc.contains(key)) {
                if (!doc[key].is_number()) throw ParseError(where + ": \"" + key + "\" must be a number");
                field = doc[key].get<std::decay_t<decltype(field)>>();
            }
        };
        num("beta", c.beta);
        num("clip_eps", c.clip_eps);
        num("actor_lr", c.actor_lr);
        num("critic_lr", c.critic_lr);
        num("batch_size", c.batch_size);
        num("epochs", c.epochs);
        num("max_len", c.max_len);
        num("seed", c.seed);
        num("iterations", c.iterations);
        num("warmup_epochs", c.warmup_epochs);
        num("warmup_lr", c.warmup_lr);
        num("context_window", c.context_window);
        return c;
    }
};

// One synthetic assignment: emit the gold call for this query. The query id
// identifies the task to the policy (it keys the context), so repeated draws
// of the same task share parameters.
struct Task {
    std::string query_id;
    GoldCall gold;
    const ToolRegistry* registry = nullptr;
};

struct Episode {
    Task task;
    std::vector<int> tokens;                // sampled ids; a trailing end token stays included
    std::vector<std::string> context_keys;  // key under which each token was sampled
    std::vector<double> logp_cur;
    std::vector<double> logp_ref;
    std::vector<double> kl;                 // per-token logpi - logpi_ref
    double kl_total = 0.0;
    std::string text;                       // detokenized emission, end token excluded
    RewardBreakdown breakdown;
    double reward = 0.0;
};

struct PPOMetrics {
    double mean_reward = 0.0;
    double mean_kl = 0.0;       // per-token average over the batch
    double clip_fraction = 0.0;
    double actor_loss = 0.0;    // negative clipped surrogate
    double critic_loss = 0.0;

    json to_json() const {
        return json{{"mean_reward", mean_reward},
                    {"mean_kl", mean_kl},
                    {"clip_fraction", clip_fraction},
                    {"actor_loss", actor_loss},
                    {"critic_loss", critic_loss}};
    }
};

// Value baseline, one estimate per initial context key (one per task).
struct Critic {
    std::map<std::string, double> values;

    double value(const std::string& key) const {
        auto it = values.find(key);
        return it == values.end() ? 0.0 : it->second;
    }

    double& value_ref(const std::string& key) { return values.try_emplace(key, 0.0).first->second; }
};

// The policy's vocabulary is the tokenizer's plus one end-of-emission token.
inline std::size_t policy_vocab_size(const Tokenizer& tokenizer) {
    return tokenizer.vocab_size() + 1;
}

inline int end_token_id(const Tokenizer& tokenizer) {
    return static_cast<int>(tokenizer.vocab_size());
}

namespace detail {

// 53-bit uniform in [0, 1); bit-stable across platforms, unlike the
// standard distributions.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

// Two values per parameter keep the task space small but non-degenerate.
inline std::vector<std::string> value_pool(const ParamSpec& param) {
    return {param.name + "1", param.name + "2"};
}

inline std::string gold_to_text(const GoldCall& gold) {
    std::string out = gold.tool_name + "(";
    bool first = true;
    for (const auto& [name, value] : gold.args) {
        if (!first) out += ",";
        out += name + "=" + value;
        first = false;
    }
    return out + ")";
}

inline Task make_task(GoldCall gold, const ToolRegistry& registry) {
    Task task;
    task.query_id = gold_to_text(gold);
    task.gold = std::move(gold);
    task.registry = &registry;
    return task;
}

inline Task sample_task(const ToolRegistry& registry, std::mt19937_64& rng) {
    if (registry.tools.empty()) throw ConfigError("cannot sample a task from an empty registry");
    const ToolSpec& tool = registry.tools[rng() % registry.tools.size()];
    GoldCall gold;
    gold.tool_name = tool.name;
    for (const auto& p : tool.params) {
        if (!p.required && (rng() & 1) == 0) continue;
        const auto pool = value_pool(p);
        gold.args[p.name] = pool[rng() % pool.size()];
    }
    return make_task(std::move(gold), registry);
}

// Every gold call sample_task can produce: all tools, all optional-parameter
// subsets, all pool values. This is the warm-up training set.
inline std::vector<Task> enumerate_tasks(const ToolRegistry& registry) {
    if (registry.tools.empty()) throw ConfigError("cannot enumerate tasks of an empty registry");
    std::vector<Task> out;
    for (const auto& tool : registry.tools) {
        std::vector<GoldCall> partial;
        partial.push_back(GoldCall{tool.name, {}});
        for (const auto& p : tool.params) {
            std::vector<GoldCall> next;
            for (const auto& g : partial) {
                if (!p.required) next.push_back(g);
                for (const auto& v : value_pool(p)) {
                    GoldCall extended = g;
                    extended.args[p.name] = v;
                    next.push_back(std::move(extended));
                }
            }
            partial = std::move(next);
        }
        for (auto& g : partial) out.push_back(make_task(std::move(g), registry));
    }
    return out;
}

// Autoregressive sampling from the policy, log-probs recorded under both
// policies, terminal reward from the rule cascade on the detokenized text.
inline Episode rollout(const ToyModel& policy, const ToyModel& reference, const Task& task,
                       const Tokenizer& tokenizer, const PPOConfig& config,
                       std::mt19937_64& rng) {
    if (policy.vocab_size() != reference.vocab_size() ||
        policy.context_window() != reference.context_window())
        throw ConfigError("policy and reference must share vocabulary and context window");
    if (policy.vocab_size() != policy_vocab_size(tokenizer))
        throw ConfigError("policy vocabulary (" + std::to_string(policy.vocab_size()) +
                          ") must be the tokenizer's plus the end token (" +
                          std::to_string(policy_vocab_size(tokenizer)) + ")");
    if (!task.registry) throw ConfigError("task carries no registry");

    const int end_id = end_token_id(tokenizer);
    Episode ep;
    ep.task = task;
    std::vector<int> history;
    for (std::size_t i = 0; i < config.max_len; ++i) {
        const std::string key = policy.context_key(task.query_id, history);
        const std::vector<double> lp = policy.log_probs(key);
        std::vector<double> probs(lp.size());
        for (std::size_t j = 0; j < lp.size(); ++j) probs[j] = std::exp(lp[j]);
        const int tok = detail::sample_index(probs, rng);
        ep.tokens.push_back(tok);
        ep.context_keys.push_back(key);
        ep.logp_cur.push_back(lp[static_cast<std::size_t>(tok)]);
        ep.logp_ref.push_back(reference.logprob(key, tok));
        ep.kl.push_back(ep.logp_cur.back() - ep.logp_ref.back());
        ep.kl_total += ep.kl.back();
        if (tok == end_id) break;
        history.push_back(tok);
    }
    ep.text = tokenizer.detokenize(history);
    ep.breakdown = compare_call(parse_call(ep.text), task.gold, *task.registry);
    ep.reward = ep.breakdown.reward;
    return ep;
}

inline double kl_penalized_return(const Episode& ep, double beta) {
    return ep.reward - beta * ep.kl_total;
}

// One PPO update on a batch: whole-episode advantages against the critic
// baseline (batch-normalized), clipped-ratio surrogate ascent on the policy
// logits, squared-error regression of the critic toward the returns.
inline PPOMetrics ppo_update(ToyModel& policy, Critic& critic,
                             const std::vector<Episode>& episodes, const PPOConfig& config) {
    config.validate();
    if (episodes.empty()) throw ConfigError("update requires at least one episode");
    const std::size_t n = episodes.size();

    std::vector<double> returns(n), adv(n);
    std::size_t total_tokens = 0;
    double reward_sum = 0.0, kl_sum = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        returns[e] = kl_penalized_return(episodes[e], config.beta);
        adv[e] = returns[e] - critic.value(episodes[e].context_keys.front());
        total_tokens += episodes[e].tokens.size();
        reward_sum += episodes[e].reward;
        kl_sum += episodes[e].kl_total;
    }
    if (n > 1) {
        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double& a : adv) {
            a -= mean;
            var += a * a;
        }
        const double stddev = std::sqrt(var / static_cast<double>(n));
        if (stddev >= 1e-8)
            for (double& a : adv) a /= stddev;
    }

    PPOMetrics metrics;
    metrics.mean_reward = reward_sum / static_cast<double>(n);
    metrics.mean_kl = kl_sum / static_cast<double>(total_tokens);

    const double lo = 1.0 - config.clip_eps, hi = 1.0 + config.clip_eps;
    std::size_t clipped = 0;
    double actor_loss_acc = 0.0, critic_loss_acc = 0.0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        GradientTable grad;  // of the NEGATED surrogate, so apply_gradient descends
        double surrogate = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            const Episode& ep = episodes[e];
            const double a = adv[e];
            for (std::size_t i = 0; i < ep.tokens.size(); ++i) {
                const std::string& key = ep.context_keys[i];
                const int tok = ep.tokens[i];
                const double lp_new = policy.logprob(key, tok);
                const double rho = std::exp(lp_new - ep.logp_cur[i]);
                const double surr1 = rho * a;
                const double surr2 = clip(rho, lo, hi) * a;
                surrogate += std::min(surr1, surr2);
                if (rho < lo || rho > hi) ++clipped;
                if (surr1 <= surr2 && a != 0.0) {
                    const double coeff = a * rho / static_cast<double>(total_tokens);
                    auto it = grad.find(key);
                    if (it == grad.end())
                        it = grad.emplace(key, std::vector<double>(policy.vocab_size(), 0.0)).first;
                    const std::vector<double> p = policy.probs(key);
                    for (std::size_t j = 0; j < p.size(); ++j) it->second[j] += coeff * p[j];
                    it->second[static_cast<std::size_t>(tok)] -= coeff;
                }
            }
        }
        policy.apply_gradient(grad, config.actor_lr);
        actor_loss_acc += -surrogate / static_cast<double>(total_tokens);

        std::map<std::string, double> critic_grad;
        double critic_loss = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            const std::string& key = episodes[e].context_keys.front();
            const double err = critic.value(key) - returns[e];
            critic_loss += 0.5 * err * err;
            critic_grad[key] += err / static_cast<double>(n);
        }
        critic_loss_acc += critic_loss / static_cast<double>(n);
        for (const auto& [key, g] : critic_grad) critic.value_ref(key) -= config.critic_lr * g;
    }

    metrics.clip_fraction = static_cast<double>(clipped) /
                            static_cast<double>(total_tokens * config.epochs);
    metrics.actor_loss = actor_loss_acc / static_cast<double>(config.epochs);
    metrics.critic_loss = critic_loss_acc / static_cast<double>(config.epochs);
    return metrics;
}

struct TrainResult {
    ToyModel policy;
    ToyModel reference;
    Critic critic;
    std::vector<PPOMetrics> curve;        // one entry per update
    std::vector<double> episode_rewards;  // every training episode, in order
};

// Builds the warm-up batch: every enumerable task as a one-step trajectory,
// its plan carrying the call tokens plus the end token so the policy also
// learns to stop.
inline void build_warmup_batch(const std::vector<Task>& tasks, const Tokenizer& tokenizer,
                               std::vector<Trajectory>& batch,
                               std::vector<TokenWeightPlan>& plans) {
    for (const Task& task : tasks) {
        Trajectory t;
        t.id = task.query_id;
        t.query = task.query_id;
        CallStep step;
        step.call = parse_call(gold_to_text(task.gold));
        t.steps.push_back(std::move(step));

        TokenWeightPlan plan;
        plan.trajectory_id = t.id;
        StepWeightPlan sp;
        sp.tokens = tokenizer.tokenize(t.steps[0].call.raw_text);
        sp.tokens.push_back(end_token_id(tokenizer));
        sp.weights.assign(sp.tokens.size(), 1.0);
        plan.steps.push_back(std::move(sp));

        batch.push_back(std::move(t));
        plans.push_back(std::move(plan));
    }
}

// SFT warm-up, freeze the reference, then iterate rollout batches and PPO
// updates. Fully deterministic for a given seed and config.
inline TrainResult train(const ToolRegistry& registry, const PPOConfig& config,
                         const Tokenizer& tokenizer) {
    config.validate();
    std::mt19937_64 rng(config.seed);

    ToyModel policy(policy_vocab_size(tokenizer), config.context_window);
    std::vector<Trajectory> warm_batch;
    std::vector<TokenWeightPlan> warm_plans;
    build_warmup_batch(enumerate_tasks(registry), tokenizer, warm_batch, warm_plans);
    for (std::size_t i = 0; i < config.warmup_epochs; ++i)
        sft_step(policy, warm_batch, warm_plans, config.warmup_lr);

    ToyModel reference = policy;
    Critic critic;
    std::vector<PPOMetrics> curve;
    std::vector<double> episode_rewards;
    curve.reserve(config.iterations);
    episode_rewards.reserve(config.iterations * config.batch_size);

    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        std::vector<Episode> episodes;
        episodes.reserve(config.batch_size);
        for (std::size_t b = 0; b < config.batch_size; ++b)
            episodes.push_back(
                rollout(policy, reference, sample_task(registry, rng), tokenizer, config, rng));
        curve.push_back(ppo_update(policy, critic, episodes, config));
        for (const Episode& ep : episodes) episode_rewards.push_back(ep.reward);
    }
    return TrainResult{std::move(policy), std::move(reference), std::move(critic),
                       std::move(curve), std::move(episode_rewards)};
}

}  // namespace tlt
