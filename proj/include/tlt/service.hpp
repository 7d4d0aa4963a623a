#pragma once

#include <csignal>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>

#include "tlt/classifier.hpp"
#include "tlt/config.hpp"
#include "tlt/reward.hpp"
#include "tlt/trajectory.hpp"

namespace tlt {

// Immutable after startup; handlers only read it, so concurrent requests
// need no locking.
struct ServiceState {
    std::optional<ToolRegistry> registry;
    ClassifierRules rules = default_rules();
    CanonConfig canon;
};

namespace detail {

inline void reply_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace detail

inline void register_routes(httplib::Server& server, std::shared_ptr<ServiceState> state) {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        detail::reply_json(res, json{{"status", "ok"}});
    });

    server.Post("/reward", [state](const httplib::Request& req, httplib::Response& res) {
        try {
            const json body = json::parse(req.body);
            if (!body.is_object() || !body.contains("prediction") ||
                !body["prediction"].is_string())
                throw ParseError("body: string \"prediction\" required");
            if (!body.contains("gold")) throw ParseError("body: \"gold\" object required");
            const GoldCall gold = gold_from_json(body["gold"], "gold");

            ToolRegistry registry;
            if (body.contains("registry"))
                registry = parse_registry(body["registry"].dump());
            else if (state->registry)
                registry = *state->registry;
            else
                throw ConfigError("no registry loaded and none supplied in the request");

            const ToolCall pred = parse_call(body["prediction"].get<std::string>());
            detail::reply_json(res, compare_call(pred, gold, registry, state->canon).to_json());
        } catch (const std::exception& e) {
            detail::reply_json(res, json{{"error", e.what()}}, 400);
        }
    });

    server.Post("/classify", [state](const httplib::Request& req, httplib::Response& res) {
        try {
            const json body = json::parse(req.body);
            if (!body.is_object() || !body.contains("feedback") || !body["feedback"].is_string())
                throw ParseError("body: string \"feedback\" required");
            const ErrorCategory category =
                classify_feedback(body["feedback"].get<std::string>(), state->rules);
            detail::reply_json(res, json{{"category", category_name(category)}});
        } catch (const std::exception& e) {
            detail::reply_json(res, json{{"error", e.what()}}, 400);
        }
    });
}

namespace detail {

inline httplib::Server*& active_server() {
    static httplib::Server* ptr = nullptr;
    return ptr;
}

inline void stop_on_signal(int) {
    if (auto* server = active_server()) server->stop();
}

}  // namespace detail

// Blocks until a termination signal stops the server. Returns the process
// exit code: 0 after a clean shutdown, 2 when the port cannot be bound.
inline int serve(const AppConfig& config) {
    config.validate();
    auto state = std::make_shared<ServiceState>();
    if (!config.registry_path.empty()) state->registry = read_registry_file(config.registry_path);
    if (!config.rules_path.empty()) state->rules = read_rules_file(config.rules_path);
    state->canon = config.canon;
    const Logger log = config.logger();

    httplib::Server server;
    register_routes(server, state);
    detail::active_server() = &server;
    std::signal(SIGINT, detail::stop_on_signal);
    std::signal(SIGTERM, detail::stop_on_signal);

    log.info("listening on " + config.bind_address + ":" + std::to_string(config.port));
    const bool ok = server.listen(config.bind_address.c_str(), config.port);
    detail::active_server() = nullptr;
    if (!ok) {
        log.error("cannot bind " + config.bind_address + ":" + std::to_string(config.port));
        return 2;
    }
    log.info("shut down");
    return 0;
}

}  // namespace tlt
