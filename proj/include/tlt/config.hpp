#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "tlt/classifier.hpp"
#include "tlt/errors.hpp"
#include "tlt/ppo.hpp"
#include "tlt/reward.hpp"

namespace tlt {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

inline LogLevel log_level_from_name(const std::string& s) {
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    if (s == "warn") return LogLevel::Warn;
    if (s == "error") return LogLevel::Error;
    throw ConfigError("unknown log level '" + s + "' (expected debug|info|warn|error)");
}

inline const char* log_level_name(LogLevel level) {
    switch (level) {
        case LogLevel::Debug: return "debug";
        case LogLevel::Info: return "info";
        case LogLevel::Warn: return "warn";
        case LogLevel::Error: return "error";
    }
    return "info";
}

// Leveled logging to stderr; stdout stays reserved for command output.
class Logger {
public:
    explicit Logger(LogLevel threshold = LogLevel::Info) : threshold_(threshold) {}

    void log(LogLevel level, const std::string& msg) const {
        if (level < threshold_) return;
        std::cerr << "[" << log_level_name(level) << "] " << msg << "\n";
    }

    void debug(const std::string& msg) const { log(LogLevel::Debug, msg); }
    void info(const std::string& msg) const { log(LogLevel::Info, msg); }
    void warn(const std::string& msg) const { log(LogLevel::Warn, msg); }
    void error(const std::string& msg) const { log(LogLevel::Error, msg); }

    LogLevel threshold() const { return threshold_; }

private:
    LogLevel threshold_;
};

// Layered configuration. Apply order is defaults, then config file, then
// TLT_* environment variables, then command-line flags; each layer only
// overrides what it names.
struct AppConfig {
    std::string registry_path;
    std::string corpus_path;
    std::string rules_path;
    std::string vocab_path;
    std::string model_path;
    double w_max = 9.0;
    std::set<ErrorCategory> mask_categories = default_mask_categories();
    CanonConfig canon;
    PPOConfig ppo;
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::string log_level = "info";

    void apply_file(const json& doc, const std::string& where) {
        if (!doc.is_object()) throw ParseError(where + ": config must be a JSON object");
        auto str = [&](const char* key, std::string& field) {
            if (!doc.contains(key)) return;
            if (!doc[key].is_string())
                throw ParseError(where + ": \"" + key + "\" must be a string");
            field = doc[key].get<std::string>();
        };
        str("registry", registry_path);
        str("corpus", corpus_path);
        str("rules", rules_path);
        str("vocab", vocab_path);
        str("model", model_path);
        str("bind", bind_address);
        str("log_level", log_level);
        if (doc.contains("w_max")) {
            if (!doc["w_max"].is_number()) throw ParseError(where + ": \"w_max\" must be a number");
            w_max = doc["w_max"].get<double>();
        }
        if (doc.contains("port")) {
            if (!doc["port"].is_number_integer())
                throw ParseError(where + ": \"port\" must be an integer");
            port = doc["port"].get<int>();
        }
        if (doc.contains("mask_categories")) {
            if (!doc["mask_categories"].is_array())
                throw ParseError(where + ": \"mask_categories\" must be an array");
            mask_categories.clear();
            for (const auto& name : doc["mask_categories"])
                mask_categories.insert(category_from_name(name.get<std::string>()));
        }
        if (doc.contains("case_insensitive"))
            canon.case_insensitive = doc["case_insensitive"].get<bool>();
        if (doc.contains("numeric_coercion"))
            canon.numeric_coercion = doc["numeric_coercion"].get<bool>();
        if (doc.contains("ppo")) ppo = PPOConfig::from_json(doc["ppo"], where + ".ppo", ppo);
    }

    void apply_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file: " + path);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": " + e.what());
        }
        apply_file(doc, path);
    }

    void apply_env() {
        auto str = [&](const char* name, std::string& field) {
            if (const char* v = std::getenv(name)) field = v;
        };
        str("TLT_REGISTRY", registry_path);
        str("TLT_CORPUS", corpus_path);
        str("TLT_RULES", rules_path);
        str("TLT_VOCAB", vocab_path);
        str("TLT_MODEL", model_path);
        str("TLT_BIND", bind_address);
        str("TLT_LOG_LEVEL", log_level);
        if (const char* v = std::getenv("TLT_W_MAX")) {
            char* end = nullptr;
            const double parsed = std::strtod(v, &end);
            if (end == v || *end != '\0') throw ConfigError("TLT_W_MAX: '" + std::string(v) + "' is not a number");
            w_max = parsed;
        }
        if (const char* v = std::getenv("TLT_PORT")) {
            char* end = nullptr;
            const long parsed = std::strtol(v, &end, 10);
            if (end == v || *end != '\0') throw ConfigError("TLT_PORT: '" + std::string(v) + "' is not an integer");
            port = static_cast<int>(parsed);
        }
        if (const char* v = std::getenv("TLT_SEED")) {
            char* end = nullptr;
            const unsigned long long parsed = std::strtoull(v, &end, 10);
            if (end == v || *end != '\0') throw ConfigError("TLT_SEED: '" + std::string(v) + "' is not an integer");
            ppo.seed = parsed;
        }
    }

    void validate() const {
        if (w_max < 1.0) throw ConfigError("w_max must be >= 1");
        if (port < 1 || port > 65535) throw ConfigError("port must lie in [1, 65535]");
        log_level_from_name(log_level);  // throws on junk
    }

    Logger logger() const { return Logger(log_level_from_name(log_level)); }

    WeightPlanConfig weight_plan_config() const {
        WeightPlanConfig cfg;
        cfg.w_max = w_max;
        cfg.mask_categories = mask_categories;
        return cfg;
    }
};

}  // namespace tlt
