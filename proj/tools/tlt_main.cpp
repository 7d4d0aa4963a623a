#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tlt/service.hpp"
#include "tlt/tlt.hpp"

namespace {

using tlt::json;

std::vector<tlt::Trajectory> load_corpus(const tlt::AppConfig& cfg, bool strict,
                                         const tlt::Logger& log) {
    if (cfg.corpus_path.empty())
        throw tlt::ConfigError("'--corpus' is required (flag, TLT_CORPUS, or config file)");
    auto result = tlt::read_corpus_file(cfg.corpus_path, strict);
    for (const auto& d : result.diagnostics)
        log.warn(cfg.corpus_path + ":" + std::to_string(d.line) + ": " + d.message);
    return std::move(result.trajectories);
}

tlt::ToolRegistry load_registry(const tlt::AppConfig& cfg) {
    if (cfg.registry_path.empty())
        throw tlt::ConfigError("'--registry' is required (flag, TLT_REGISTRY, or config file)");
    return tlt::read_registry_file(cfg.registry_path);
}

tlt::ClassifierRules load_rules(const tlt::AppConfig& cfg) {
    if (cfg.rules_path.empty()) return tlt::default_rules();
    return tlt::read_rules_file(cfg.rules_path);
}

std::unique_ptr<tlt::Tokenizer> make_tokenizer(const tlt::AppConfig& cfg) {
    if (!cfg.vocab_path.empty())
        return std::make_unique<tlt::VocabTokenizer>(tlt::VocabTokenizer::from_file(cfg.vocab_path));
    return std::make_unique<tlt::ByteTokenizer>();
}

tlt::ToyModel load_model(const tlt::AppConfig& cfg) {
    if (cfg.model_path.empty())
        throw tlt::ConfigError("'--model' is required (flag, TLT_MODEL, or config file)");
    std::ifstream in(cfg.model_path);
    if (!in) throw tlt::IoError("cannot open model file: " + cfg.model_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw tlt::ParseError(cfg.model_path + ": " + e.what());
    }
    return tlt::ToyModel::from_json(doc, cfg.model_path);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tlt::IoError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<tlt::GoldCall> read_gold_file(const std::string& path) {
    std::vector<tlt::GoldCall> golds;
    std::size_t lineno = 0;
    for (const auto& line : read_lines(path)) {
        ++lineno;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = path + " line " + std::to_string(lineno);
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw tlt::ParseError(where + ": " + e.what());
        }
        golds.push_back(tlt::gold_from_json(doc, where));
    }
    return golds;
}

int run_classify(const tlt::AppConfig& cfg, bool strict, const tlt::Logger& log) {
    const tlt::ClassifierRules rules = load_rules(cfg);
    for (const auto& t : load_corpus(cfg, strict, log)) {
        json categories = json::array();
        for (const auto& step : t.steps)
            categories.push_back(
                tlt::category_name(tlt::classify_feedback(step.feedback.raw_text, rules)));
        std::cout << json{{"id", t.id}, {"categories", categories}}.dump() << "\n";
    }
    return 0;
}

int run_stats(const tlt::AppConfig& cfg, bool strict, bool pretty, const tlt::Logger& log) {
    const tlt::ClassifierRules rules = load_rules(cfg);
    const auto corpus = load_corpus(cfg, strict, log);
    const tlt::CorpusStats stats = tlt::corpus_error_stats(corpus, rules);
    std::cout << stats.to_json().dump() << "\n";
    if (pretty) {
        std::ostringstream table;
        table << std::left << std::setw(24) << "category" << std::right << std::setw(10)
              << "count" << "\n";
        for (tlt::ErrorCategory c : tlt::kAllCategories)
            table << std::left << std::setw(24) << tlt::category_name(c) << std::right
                  << std::setw(10) << stats.histogram.at(c) << "\n";
        table << std::left << std::setw(24) << "steps" << std::right << std::setw(10)
              << stats.total_steps << "\n";
        table << std::left << std::setw(24) << "trajectories" << std::right << std::setw(10)
              << stats.total_trajectories << "\n";
        table << std::left << std::setw(24) << "with_error" << std::right << std::setw(10)
              << stats.trajectories_with_error << "\n";
        if (stats.trajectory_error_fraction)
            table << std::left << std::setw(24) << "error_fraction" << std::right << std::setw(10)
                  << std::fixed << std::setprecision(3) << *stats.trajectory_error_fraction
                  << "\n";
        std::cerr << table.str();
    }
    return 0;
}

int run_mask(const tlt::AppConfig& cfg, bool strict, const tlt::Logger& log) {
    const tlt::ClassifierRules rules = load_rules(cfg);
    for (const auto& t : load_corpus(cfg, strict, log)) {
        const tlt::ErroneousCallSet set = tlt::find_erroneous_calls(t, rules, cfg.mask_categories);
        json masked = json::array();
        for (const auto& [step, category] : set.categories)
            masked.push_back({{"step", step}, {"category", tlt::category_name(category)}});
        std::cout << json{{"id", t.id}, {"masked", masked}}.dump() << "\n";
    }
    return 0;
}

int run_weights(const tlt::AppConfig& cfg, bool strict, const tlt::Logger& log) {
    const tlt::ToolRegistry registry = load_registry(cfg);
    const tlt::ClassifierRules rules = load_rules(cfg);
    const auto tokenizer = make_tokenizer(cfg);
    for (const auto& t : load_corpus(cfg, strict, log)) {
        const tlt::TokenWeightPlan plan =
            tlt::build_weight_plan(t, registry, *tokenizer, rules, cfg.weight_plan_config());
        std::cout << tlt::weight_plan_to_json(plan).dump() << "\n";
    }
    return 0;
}

int run_loss(const tlt::AppConfig& cfg, const std::string& plan_path, bool strict,
             const tlt::Logger& log) {
    const auto corpus = load_corpus(cfg, strict, log);
    const auto tokenizer = make_tokenizer(cfg);
    const tlt::ToyModel model = load_model(cfg);

    std::map<std::string, tlt::TokenWeightPlan> plans_by_id;
    if (!plan_path.empty()) {
        std::size_t lineno = 0;
        for (const auto& line : read_lines(plan_path)) {
            ++lineno;
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            const std::string where = plan_path + " line " + std::to_string(lineno);
            json doc;
            try {
                doc = json::parse(line);
            } catch (const json::parse_error& e) {
                throw tlt::ParseError(where + ": " + e.what());
            }
            tlt::TokenWeightPlan plan = tlt::weight_plan_from_json(doc, where);
            if (!plans_by_id.emplace(plan.trajectory_id, std::move(plan)).second)
                throw tlt::ParseError(where + ": duplicate plan for trajectory");
        }
    }

    std::optional<tlt::ToolRegistry> registry;
    std::optional<tlt::ClassifierRules> rules;
    if (plan_path.empty()) {
        registry = load_registry(cfg);
        rules = load_rules(cfg);
    }

    double total = 0.0;
    json per_trajectory = json::array();
    for (const auto& t : corpus) {
        tlt::TokenWeightPlan plan;
        if (plan_path.empty()) {
            plan = tlt::build_weight_plan(t, *registry, *tokenizer, *rules,
                                          cfg.weight_plan_config());
        } else {
            auto it = plans_by_id.find(t.id);
            if (it == plans_by_id.end())
                throw tlt::AlignmentError("no plan for trajectory '" + t.id + "'");
            plan = it->second;
        }
        const tlt::LossReport report =
            tlt::weighted_masked_loss(tlt::toy_logprobs(model, t, *tokenizer), plan);
        total += report.total;
        json entry = report.to_json();
        entry["id"] = t.id;
        per_trajectory.push_back(std::move(entry));
    }
    std::cout << json{{"total", total}, {"per_trajectory", per_trajectory}}.dump() << "\n";
    return 0;
}

int run_gradcheck(const tlt::AppConfig& cfg, std::uint64_t seed, double eps, double tol,
                  bool corrupt, bool strict, const tlt::Logger& log) {
    const auto corpus = load_corpus(cfg, strict, log);
    const tlt::ToolRegistry registry = load_registry(cfg);
    const tlt::ClassifierRules rules = load_rules(cfg);
    const auto tokenizer = make_tokenizer(cfg);

    std::vector<tlt::TokenWeightPlan> plans;
    plans.reserve(corpus.size());
    for (const auto& t : corpus)
        plans.push_back(
            tlt::build_weight_plan(t, registry, *tokenizer, rules, cfg.weight_plan_config()));

    tlt::ToyModel model = cfg.model_path.empty()
                              ? tlt::ToyModel(static_cast<std::size_t>(tokenizer->vocab_size()))
                              : load_model(cfg);
    if (cfg.model_path.empty()) {
        // Seeded random logits over every context the corpus touches.
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::vector<int> history;
            for (const auto& step : plans[i].steps) {
                for (int token : step.tokens) {
                    auto& row = model.logits_ref(
                        tlt::ToyModel::make_key(corpus[i].id, history, model.context_window()));
                    for (double& v : row) v = tlt::detail::uniform01(rng) * 4.0 - 2.0;
                    history.push_back(token);
                }
            }
        }
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        tlt::GradientTable grad = tlt::analytic_gradient(model, corpus[i], plans[i]);
        if (corrupt && !grad.empty()) grad.begin()->second[0] += 0.5;
        worst = std::max(worst,
                         tlt::finite_diff_check_against(model, corpus[i], plans[i], grad, eps));
    }
    const bool pass = worst < tol;
    std::cout << json{{"max_rel_error", worst}, {"tolerance", tol}, {"pass", pass}}.dump()
              << "\n";
    return pass ? 0 : 1;
}

int run_reward(const tlt::AppConfig& cfg, const std::string& pred_path,
               const std::string& gold_path, bool pretty) {
    const tlt::ToolRegistry registry = load_registry(cfg);
    const std::vector<std::string> preds = read_lines(pred_path);
    const std::vector<tlt::GoldCall> golds = read_gold_file(gold_path);
    if (preds.size() != golds.size())
        throw tlt::AlignmentError("got " + std::to_string(preds.size()) + " predictions but " +
                                  std::to_string(golds.size()) + " gold calls");
    std::map<std::string, std::size_t> outcomes;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const tlt::RewardBreakdown b =
            tlt::compare_call(tlt::parse_call(preds[i]), golds[i], registry, cfg.canon);
        ++outcomes[tlt::outcome_name(b.outcome)];
        std::cout << b.to_json().dump() << "\n";
    }
    if (pretty) {
        std::ostringstream table;
        for (const auto& [name, count] : outcomes)
            table << std::left << std::setw(20) << name << std::right << std::setw(8) << count
                  << "\n";
        std::cerr << table.str();
    }
    return 0;
}

int run_eval(const tlt::AppConfig& cfg, const std::string& mode, const std::string& pred_path,
             const std::string& gold_path, bool strict, bool pretty, const tlt::Logger& log) {
    if (mode == "single") {
        const tlt::ToolRegistry registry = load_registry(cfg);
        if (pred_path.empty()) throw tlt::ConfigError("'--pred' is required in single mode");
        if (gold_path.empty()) throw tlt::ConfigError("'--gold' is required in single mode");
        std::vector<tlt::ToolCall> preds;
        for (const auto& line : read_lines(pred_path)) preds.push_back(tlt::parse_call(line));
        const std::vector<tlt::GoldCall> golds = read_gold_file(gold_path);
        const tlt::SingleTurnReport report =
            tlt::eval_single_turn(preds, golds, registry, cfg.canon);
        std::cout << report.to_json().dump() << "\n";
        if (pretty) {
            std::ostringstream table;
            table << std::left << std::setw(8) << "TS" << std::setw(8) << "PI" << std::setw(8)
                  << "CF" << "\n"
                  << std::fixed << std::setprecision(1) << std::left << std::setw(8) << report.ts
                  << std::setw(8) << report.pi << std::setw(8) << report.cf << "\n";
            std::cerr << table.str();
        }
        return 0;
    }
    const tlt::ClassifierRules rules = load_rules(cfg);
    const auto corpus = load_corpus(cfg, strict, log);
    const tlt::MultiTurnReport report = tlt::eval_multi_turn(corpus, rules);
    std::cout << report.to_json().dump() << "\n";
    if (pretty) {
        std::ostringstream table;
        table << std::left << std::setw(8) << "DE" << std::setw(8) << "CE" << std::setw(8) << "VA"
              << "\n"
              << std::fixed << std::setprecision(1) << std::left << std::setw(8) << report.de
              << std::setw(8) << report.ce << std::setw(8) << report.va << "\n";
        std::cerr << table.str();
    }
    return 0;
}

int run_ppo_train(const tlt::AppConfig& cfg, const std::string& out_dir, bool pretty,
                  const tlt::Logger& log) {
    const tlt::ToolRegistry registry = load_registry(cfg);
    const auto tokenizer = make_tokenizer(cfg);

    const auto start = std::chrono::steady_clock::now();
    const tlt::TrainResult result = tlt::train(registry, cfg.ppo, *tokenizer);
    const double wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string curve_path = out_dir + "/curve.csv";
        std::ofstream curve(curve_path);
        if (!curve) throw tlt::IoError("cannot open " + curve_path + " for writing");
        curve << "iteration,mean_reward,mean_kl,clip_fraction\n" << std::setprecision(12);
        for (std::size_t i = 0; i < result.curve.size(); ++i)
            curve << i << "," << result.curve[i].mean_reward << "," << result.curve[i].mean_kl
                  << "," << result.curve[i].clip_fraction << "\n";
        const std::string policy_path = out_dir + "/policy.json";
        std::ofstream policy(policy_path);
        if (!policy) throw tlt::IoError("cannot open " + policy_path + " for writing");
        policy << result.policy.to_json().dump() << "\n";
        log.info("wrote " + curve_path + " and " + policy_path);
    }

    const auto& rewards = result.episode_rewards;
    const std::size_t tail = std::min<std::size_t>(100, rewards.size());
    double tail_mean = 0.0;
    for (std::size_t i = rewards.size() - tail; i < rewards.size(); ++i) tail_mean += rewards[i];
    if (tail > 0) tail_mean /= static_cast<double>(tail);

    json summary{{"iterations", result.curve.size()},
                 {"episodes", rewards.size()},
                 {"wall_seconds", wall_seconds},
                 {"final_mean_reward", result.curve.empty() ? 0.0 : result.curve.back().mean_reward},
                 {"final_mean_kl", result.curve.empty() ? 0.0 : result.curve.back().mean_kl},
                 {"mean_reward_last_100_episodes", tail_mean}};
    std::cout << summary.dump() << "\n";
    if (pretty)
        std::cerr << "iterations=" << result.curve.size() << " episodes=" << rewards.size()
                  << " last100=" << tail_mean << " wall=" << wall_seconds << "s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory corpus toolkit: feedback classification, loss masking and"
                 " key-token weighting, rule-based call rewards, and a toy RL loop"};
    app.require_subcommand(1);

    std::string config_path, log_level;
    bool pretty = false;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_flag("--pretty", pretty, "print a human-readable table on stderr");
    app.add_option("--log-level", log_level, "debug|info|warn|error")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

    std::string corpus, registry_path, rules, vocab, model, plan, pred, gold, out_dir, bind;
    std::string mode = "single";
    bool strict = false, corrupt = false, case_insensitive = false, no_numeric_coercion = false;
    const tlt::PPOConfig ppo_defaults;
    double w_max = 9.0, eps = 1e-5, tol = 1e-4;
    double beta = ppo_defaults.beta, clip_eps = ppo_defaults.clip_eps;
    double actor_lr = ppo_defaults.actor_lr, critic_lr = ppo_defaults.critic_lr;
    double warmup_lr = ppo_defaults.warmup_lr;
    std::uint64_t seed = ppo_defaults.seed;
    std::size_t iterations = ppo_defaults.iterations, batch_size = ppo_defaults.batch_size;
    std::size_t epochs = ppo_defaults.epochs, max_len = ppo_defaults.max_len;
    std::size_t warmup_epochs = ppo_defaults.warmup_epochs;
    int port = 8080;

    auto add_corpus_opts = [&](CLI::App* sub) {
        sub->add_option("--corpus", corpus, "trajectory corpus (JSON Lines)");
        sub->add_option("--rules", rules, "classifier rules file (JSON)");
        sub->add_flag("--strict", strict, "fail on the first malformed corpus line");
    };

    CLI::App* cmd_classify = app.add_subcommand("classify", "per-step feedback categories");
    add_corpus_opts(cmd_classify);

    CLI::App* cmd_stats = app.add_subcommand("stats", "corpus error histogram");
    add_corpus_opts(cmd_stats);

    CLI::App* cmd_mask = app.add_subcommand("mask", "erroneous-call sets per trajectory");
    add_corpus_opts(cmd_mask);

    CLI::App* cmd_weights = app.add_subcommand("weights", "per-token training weight plans");
    add_corpus_opts(cmd_weights);
    cmd_weights->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_weights->add_option("--vocab", vocab, "vocabulary file (one token per line)");
    cmd_weights->add_option("--w-max", w_max, "key-token weight cap");

    CLI::App* cmd_loss = app.add_subcommand("loss", "weighted masked loss of a checkpoint");
    add_corpus_opts(cmd_loss);
    cmd_loss->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_loss->add_option("--vocab", vocab, "vocabulary file");
    cmd_loss->add_option("--model", model, "toy model checkpoint (JSON logit table)");
    cmd_loss->add_option("--plan", plan, "precomputed weight plans (JSON Lines)");
    cmd_loss->add_option("--w-max", w_max, "key-token weight cap");

    CLI::App* cmd_gradcheck =
        app.add_subcommand("gradcheck", "analytic gradient vs finite differences");
    add_corpus_opts(cmd_gradcheck);
    cmd_gradcheck->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_gradcheck->add_option("--vocab", vocab, "vocabulary file");
    cmd_gradcheck->add_option("--model", model, "toy model checkpoint; random when absent");
    cmd_gradcheck->add_option("--seed", seed, "seed for the random model");
    cmd_gradcheck->add_option("--eps", eps, "finite-difference step");
    cmd_gradcheck->add_option("--tol", tol, "max relative error to pass");
    cmd_gradcheck->add_option("--w-max", w_max, "key-token weight cap");
    cmd_gradcheck->add_flag("--corrupt", corrupt, "corrupt the gradient first (self-test)");

    CLI::App* cmd_reward = app.add_subcommand("reward", "score predictions against gold calls");
    cmd_reward->add_option("--pred", pred, "predictions, one call text per line")->required();
    cmd_reward->add_option("--gold", gold, "gold calls (JSON Lines)")->required();
    cmd_reward->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_reward->add_flag("--case-insensitive", case_insensitive, "case-fold value comparison");
    cmd_reward->add_flag("--no-numeric-coercion", no_numeric_coercion,
                         "compare numeric-looking values as text");

    CLI::App* cmd_eval = app.add_subcommand("eval", "selection/identification/filling metrics");
    cmd_eval->add_option("--mode", mode, "single or multi")
        ->check(CLI::IsMember({"single", "multi"}));
    cmd_eval->add_option("--pred", pred, "predictions, one call text per line");
    cmd_eval->add_option("--gold", gold, "gold calls (JSON Lines)");
    cmd_eval->add_option("--registry", registry_path, "tool registry file (JSON)");
    add_corpus_opts(cmd_eval);
    cmd_eval->add_flag("--case-insensitive", case_insensitive, "case-fold value comparison");
    cmd_eval->add_flag("--no-numeric-coercion", no_numeric_coercion,
                       "compare numeric-looking values as text");

    CLI::App* cmd_ppo = app.add_subcommand("ppo-train", "toy policy optimization loop");
    cmd_ppo->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_ppo->add_option("--vocab", vocab, "vocabulary file");
    cmd_ppo->add_option("--out", out_dir, "directory for curve.csv and policy.json");
    cmd_ppo->add_option("--seed", seed, "master seed");
    cmd_ppo->add_option("--iterations", iterations, "update count");
    cmd_ppo->add_option("--beta", beta, "KL penalty coefficient");
    cmd_ppo->add_option("--clip-eps", clip_eps, "PPO clip range");
    cmd_ppo->add_option("--actor-lr", actor_lr, "actor learning rate");
    cmd_ppo->add_option("--critic-lr", critic_lr, "critic learning rate");
    cmd_ppo->add_option("--batch-size", batch_size, "episodes per update");
    cmd_ppo->add_option("--epochs", epochs, "optimization epochs per update");
    cmd_ppo->add_option("--max-len", max_len, "max emission length");
    cmd_ppo->add_option("--warmup-epochs", warmup_epochs, "SFT warm-up epochs");
    cmd_ppo->add_option("--warmup-lr", warmup_lr, "SFT warm-up learning rate");

    CLI::App* cmd_serve = app.add_subcommand("serve", "reward and classify over HTTP");
    cmd_serve->add_option("--registry", registry_path, "tool registry file (JSON)");
    cmd_serve->add_option("--rules", rules, "classifier rules file (JSON)");
    cmd_serve->add_option("--port", port, "listen port");
    cmd_serve->add_option("--bind", bind, "bind address");

    for (CLI::App* sub : {cmd_classify, cmd_stats, cmd_mask, cmd_weights, cmd_loss, cmd_gradcheck,
                          cmd_reward, cmd_eval, cmd_ppo, cmd_serve})
        sub->fallthrough();  // global flags work after the subcommand name too

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        tlt::AppConfig cfg;
        if (!config_path.empty()) cfg.apply_file(config_path);
        cfg.apply_env();
        if (app.count("--log-level") > 0) cfg.log_level = log_level;

        CLI::App* active = app.get_subcommands().front();
        auto count_of = [&](const char* name) -> std::size_t {
            const CLI::Option* opt = active->get_option_no_throw(name);
            return opt ? opt->count() : 0;
        };
        auto override_str = [&](const char* name, std::string& field, const std::string& value) {
            if (count_of(name) > 0) field = value;
        };
        override_str("--corpus", cfg.corpus_path, corpus);
        override_str("--registry", cfg.registry_path, registry_path);
        override_str("--rules", cfg.rules_path, rules);
        override_str("--vocab", cfg.vocab_path, vocab);
        override_str("--model", cfg.model_path, model);
        override_str("--bind", cfg.bind_address, bind);
        if (count_of("--w-max") > 0) cfg.w_max = w_max;
        if (count_of("--port") > 0) cfg.port = port;
        if (active == cmd_reward || active == cmd_eval) {
            if (case_insensitive) cfg.canon.case_insensitive = true;
            if (no_numeric_coercion) cfg.canon.numeric_coercion = false;
        }
        if (active == cmd_ppo) {
            auto num = [&](const char* name, auto value, auto member) {
                if (count_of(name) > 0) cfg.ppo.*member = value;
            };
            num("--seed", seed, &tlt::PPOConfig::seed);
            num("--iterations", iterations, &tlt::PPOConfig::iterations);
            num("--beta", beta, &tlt::PPOConfig::beta);
            num("--clip-eps", clip_eps, &tlt::PPOConfig::clip_eps);
            num("--actor-lr", actor_lr, &tlt::PPOConfig::actor_lr);
            num("--critic-lr", critic_lr, &tlt::PPOConfig::critic_lr);
            num("--batch-size", batch_size, &tlt::PPOConfig::batch_size);
            num("--epochs", epochs, &tlt::PPOConfig::epochs);
            num("--max-len", max_len, &tlt::PPOConfig::max_len);
            num("--warmup-epochs", warmup_epochs, &tlt::PPOConfig::warmup_epochs);
            num("--warmup-lr", warmup_lr, &tlt::PPOConfig::warmup_lr);
        }
        cfg.validate();
        const tlt::Logger log = cfg.logger();

        if (active == cmd_classify) return run_classify(cfg, strict, log);
        if (active == cmd_stats) return run_stats(cfg, strict, pretty, log);
        if (active == cmd_mask) return run_mask(cfg, strict, log);
        if (active == cmd_weights) return run_weights(cfg, strict, log);
        if (active == cmd_loss) return run_loss(cfg, plan, strict, log);
        if (active == cmd_gradcheck)
            return run_gradcheck(cfg, seed, eps, tol, corrupt, strict, log);
        if (active == cmd_reward) return run_reward(cfg, pred, gold, pretty);
        if (active == cmd_eval) return run_eval(cfg, mode, pred, gold, strict, pretty, log);
        if (active == cmd_ppo) return run_ppo_train(cfg, out_dir, pretty, log);
        if (active == cmd_serve) return tlt::serve(cfg);
        std::cerr << "error: unknown subcommand\n";
        return 1;
    } catch (const tlt::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
