#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tlt/errors.hpp"

namespace tlt {

using json = nlohmann::ordered_json;

enum class TypeTag { String, Integer, Number, Boolean };

inline std::string type_tag_name(TypeTag t) {
    switch (t) {
        case TypeTag::String: return "string";
        case TypeTag::Integer: return "integer";
        case TypeTag::Number: return "number";
        case TypeTag::Boolean: return "boolean";
    }
    return "string";
}

inline TypeTag type_tag_from_name(const std::string& s, const std::string& where) {
    if (s == "string") return TypeTag::String;
    if (s == "integer") return TypeTag::Integer;
    if (s == "number") return TypeTag::Number;
    if (s == "boolean") return TypeTag::Boolean;
    throw ParseError(where + ": unknown parameter type '" + s + "'");
}

struct ParamSpec {
    std::string name;
    TypeTag type_tag = TypeTag::String;
    bool required = false;

    bool operator==(const ParamSpec&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;

    bool has_param(std::string_view param_name) const {
        return std::any_of(params.begin(), params.end(),
                           [&](const ParamSpec& p) { return p.name == param_name; });
    }

    std::vector<std::string> required_names() const {
        std::vector<std::string> out;
        for (const auto& p : params)
            if (p.required) out.push_back(p.name);
        return out;
    }

    bool operator==(const ToolSpec&) const = default;
};

// The tool collection every other component selects from and validates against.
struct ToolRegistry {
    std::vector<ToolSpec> tools;

    const ToolSpec* find(std::string_view name) const {
        for (const auto& t : tools)
            if (t.name == name) return &t;
        return nullptr;
    }

    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::size_t size() const { return tools.size(); }

    bool operator==(const ToolRegistry&) const = default;
};

// One argument list, in surface order. Lookups take the last assignment so
// that `f(a=1, a=2)` compares like the final binding.
using CallArgs = std::vector<std::pair<std::string, std::string>>;

inline const std::string* find_arg(const CallArgs& args, std::string_view name) {
    for (auto it = args.rbegin(); it != args.rend(); ++it)
        if (it->first == name) return &it->second;
    return nullptr;
}

struct ParsedCall {
    std::string tool_name;
    CallArgs args;

    bool operator==(const ParsedCall&) const = default;
};

// A model-emitted tool call. `parsed` is absent exactly when `raw_text`
// matches neither accepted grammar; the unparsed state is meaningful
// downstream (the reward engine scores it).
struct ToolCall {
    std::string raw_text;
    std::optional<ParsedCall> parsed;

    bool operator==(const ToolCall&) const = default;
};

struct Feedback {
    std::string raw_text;

    bool operator==(const Feedback&) const = default;
};

struct CallStep {
    ToolCall call;
    Feedback feedback;

    bool operator==(const CallStep&) const = default;
};

// One multi-turn episode: query, ordered calls with feedback, optional answer.
struct Trajectory {
    std::string id;
    std::string query;
    std::vector<CallStep> steps;
    std::optional<std::string> final_answer;

    std::size_t turn_count() const { return steps.size(); }

    bool operator==(const Trajectory&) const = default;
};

// ---------------------------------------------------------------------------
// Registry file parsing
// ---------------------------------------------------------------------------

inline ToolRegistry parse_registry(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("registry: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tools") || !doc["tools"].is_array())
        throw ParseError("registry: top-level object with a \"tools\" array required");

    ToolRegistry reg;
    const auto& tools = doc["tools"];
    if (tools.empty()) throw ParseError("registry must contain at least one tool");

    for (std::size_t i = 0; i < tools.size(); ++i) {
        const std::string where = "tools[" + std::to_string(i) + "]";
        const auto& jt = tools[i];
        if (!jt.is_object() || !jt.contains("name") || !jt["name"].is_string())
            throw ParseError(where + ": tool needs a string \"name\"");
        ToolSpec spec;
        spec.name = jt["name"].get<std::string>();
        if (spec.name.empty()) throw ParseError(where + ": tool name must be non-empty");
        if (reg.contains(spec.name))
            throw ParseError(where + ": duplicate tool name '" + spec.name + "'");
        if (jt.contains("description")) {
            if (!jt["description"].is_string())
                throw ParseError(where + ".description: string required");
            spec.description = jt["description"].get<std::string>();
        }
        if (jt.contains("params")) {
            if (!jt["params"].is_array()) throw ParseError(where + ".params: array required");
            const auto& params = jt["params"];
            for (std::size_t k = 0; k < params.size(); ++k) {
                const std::string pwhere = where + ".params[" + std::to_string(k) + "]";
                const auto& jp = params[k];
                if (!jp.is_object() || !jp.contains("name") || !jp["name"].is_string())
                    throw ParseError(pwhere + ": param needs a string \"name\"");
                ParamSpec p;
                p.name = jp["name"].get<std::string>();
                if (p.name.empty()) throw ParseError(pwhere + ": param name must be non-empty");
                if (spec.has_param(p.name))
                    throw ParseError(pwhere + ": duplicate parameter name '" + p.name + "'");
                if (jp.contains("type"))
                    p.type_tag = type_tag_from_name(jp["type"].get<std::string>(), pwhere);
                if (jp.contains("required")) {
                    if (!jp["required"].is_boolean())
                        throw ParseError(pwhere + ".required: boolean required");
                    p.required = jp["required"].get<bool>();
                }
                spec.params.push_back(std::move(p));
            }
        }
        reg.tools.push_back(std::move(spec));
    }
    return reg;
}

inline ToolRegistry read_registry_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open registry file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_registry(text);
}

inline json registry_to_json(const ToolRegistry& reg) {
    json tools = json::array();
    for (const auto& t : reg.tools) {
        json params = json::array();
        for (const auto& p : t.params)
            params.push_back({{"name", p.name},
                              {"type", type_tag_name(p.type_tag)},
                              {"required", p.required}});
        tools.push_back({{"name", t.name}, {"description", t.description}, {"params", params}});
    }
    return json{{"tools", tools}};
}

// ---------------------------------------------------------------------------
// Call grammar
// ---------------------------------------------------------------------------
//
// Two accepted surface forms, normalized to one ParsedCall:
//   (a) functional:  name(key=value, ...)
//   (b) structured:  {"name": ..., "arguments": {...}}
// Anything else leaves `parsed` empty. parse_call never throws.

namespace detail {

inline bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline void skip_ws(std::string_view s, std::size_t& i) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline bool parse_ident(std::string_view s, std::size_t& i, std::string& out) {
    if (i >= s.size() || !is_ident_start(s[i])) return false;
    std::size_t b = i;
    while (i < s.size() && is_ident_char(s[i])) ++i;
    out.assign(s.substr(b, i - b));
    return true;
}

// Quoted string with the usual backslash escapes.
inline bool parse_quoted(std::string_view s, std::size_t& i, std::string& out) {
    const char quote = s[i];
    ++i;
    out.clear();
    while (i < s.size()) {
        char c = s[i];
        if (c == '\\') {
            if (i + 1 >= s.size()) return false;
            char e = s[i + 1];
            switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: out += e; break;
            }
            i += 2;
            continue;
        }
        if (c == quote) {
            ++i;
            return true;
        }
        out += c;
        ++i;
    }
    return false;  // unterminated
}

inline std::optional<ParsedCall> parse_functional(std::string_view s) {
    std::size_t i = 0;
    skip_ws(s, i);
    ParsedCall call;
    if (!parse_ident(s, i, call.tool_name)) return std::nullopt;
    skip_ws(s, i);
    if (i >= s.size() || s[i] != '(') return std::nullopt;
    ++i;
    skip_ws(s, i);
    if (i < s.size() && s[i] == ')') {
        ++i;
    } else {
        while (true) {
            skip_ws(s, i);
            std::string key;
            if (!parse_ident(s, i, key)) return std::nullopt;
            skip_ws(s, i);
            if (i >= s.size() || s[i] != '=') return std::nullopt;
            ++i;
            skip_ws(s, i);
            if (i >= s.size()) return std::nullopt;
            std::string value;
            if (s[i] == '"' || s[i] == '\'') {
                if (!parse_quoted(s, i, value)) return std::nullopt;
            } else {
                // bare value: runs to the next top-level ',' or ')'
                std::size_t b = i;
                while (i < s.size() && s[i] != ',' && s[i] != ')') ++i;
                if (i >= s.size()) return std::nullopt;
                value = trim(s.substr(b, i - b));
                if (value.empty()) return std::nullopt;
            }
            call.args.emplace_back(std::move(key), std::move(value));
            skip_ws(s, i);
            if (i < s.size() && s[i] == ',') {
                ++i;
                continue;
            }
            if (i < s.size() && s[i] == ')') {
                ++i;
                break;
            }
            return std::nullopt;
        }
    }
    skip_ws(s, i);
    if (i != s.size()) return std::nullopt;  // trailing junk is not a call
    return call;
}

// Canonical string form of a JSON argument value. Strings stay bare,
// scalars keep their JSON text, nested values are dumped compactly.
inline std::string value_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

inline std::optional<ParsedCall> parse_structured(std::string_view s) {
    json doc = json::parse(s, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    if (!doc.contains("name") || !doc["name"].is_string()) return std::nullopt;
    ParsedCall call;
    call.tool_name = doc["name"].get<std::string>();
    if (call.tool_name.empty()) return std::nullopt;
    if (doc.contains("arguments") && !doc["arguments"].is_null()) {
        json args = doc["arguments"];
        if (args.is_string()) {
            // GPT-style: arguments delivered as a JSON-encoded string
            args = json::parse(args.get<std::string>(), nullptr, false);
        }
        if (args.is_discarded() || !args.is_object()) return std::nullopt;
        for (const auto& [k, v] : args.items()) call.args.emplace_back(k, value_to_string(v));
    }
    return call;
}

}  // namespace detail

// Total over all strings: unparseable input yields a ToolCall whose
// `parsed` is empty, with raw_text preserved verbatim.
inline ToolCall parse_call(const std::string& text) {
    ToolCall call;
    call.raw_text = text;
    if (auto f = detail::parse_functional(text)) {
        call.parsed = std::move(*f);
        return call;
    }
    if (auto s = detail::parse_structured(text)) {
        call.parsed = std::move(*s);
        return call;
    }
    return call;
}

// ---------------------------------------------------------------------------
// Trajectory corpus (JSON Lines)
// ---------------------------------------------------------------------------

inline json trajectory_to_json(const Trajectory& t) {
    json steps = json::array();
    for (const auto& s : t.steps)
        steps.push_back({{"call", s.call.raw_text}, {"feedback", s.feedback.raw_text}});
    json out{{"id", t.id}, {"query", t.query}, {"steps", steps}};
    out["final_answer"] = t.final_answer ? json(*t.final_answer) : json(nullptr);
    return out;
}

inline Trajectory trajectory_from_json(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw ParseError(where + ": trajectory must be an object");
    Trajectory t;
    if (!doc.contains("id") || !doc["id"].is_string())
        throw ParseError(where + ": string \"id\" required");
    t.id = doc["id"].get<std::string>();
    if (!doc.contains("query") || !doc["query"].is_string())
        throw ParseError(where + ": string \"query\" required");
    t.query = doc["query"].get<std::string>();
    if (!doc.contains("steps") || !doc["steps"].is_array())
        throw ParseError(where + ": \"steps\" array required");
    for (std::size_t i = 0; i < doc["steps"].size(); ++i) {
        const auto& js = doc["steps"][i];
        const std::string swhere = where + ".steps[" + std::to_string(i) + "]";
        if (!js.is_object() || !js.contains("call") || !js["call"].is_string() ||
            !js.contains("feedback") || !js["feedback"].is_string())
            throw ParseError(swhere + ": object with string \"call\" and \"feedback\" required");
        CallStep step;
        step.call = parse_call(js["call"].get<std::string>());
        step.feedback.raw_text = js["feedback"].get<std::string>();
        t.steps.push_back(std::move(step));
    }
    if (doc.contains("final_answer") && !doc["final_answer"].is_null()) {
        if (!doc["final_answer"].is_string())
            throw ParseError(where + ".final_answer: string or null required");
        t.final_answer = doc["final_answer"].get<std::string>();
    }
    return t;
}

struct CorpusDiagnostic {
    std::size_t line = 0;  // 1-based
    std::string message;
};

// Streams trajectories line by line. Lenient mode reports malformed lines
// through `on_error` and keeps going; strict mode rethrows on the first one.
inline void stream_corpus(std::istream& in,
                          const std::function<void(Trajectory&&)>& on_item,
                          bool strict = false,
                          const std::function<void(const CorpusDiagnostic&)>& on_error = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno);
        try {
            json doc = json::parse(line);
            on_item(trajectory_from_json(doc, where));
        } catch (const std::exception& e) {
            std::string msg = e.what();
            if (msg.rfind(where, 0) != 0) msg = where + ": " + msg;
            if (strict) throw ParseError(msg);
            if (on_error) on_error({lineno, msg});
        }
    }
}

struct CorpusReadResult {
    std::vector<Trajectory> trajectories;
    std::vector<CorpusDiagnostic> diagnostics;
};

inline CorpusReadResult read_corpus(std::istream& in, bool strict = false) {
    CorpusReadResult out;
    stream_corpus(
        in, [&](Trajectory&& t) { out.trajectories.push_back(std::move(t)); }, strict,
        [&](const CorpusDiagnostic& d) { out.diagnostics.push_back(d); });
    return out;
}

inline CorpusReadResult read_corpus_file(const std::string& path, bool strict = false) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return read_corpus(in, strict);
}

inline void write_corpus(std::ostream& out, const std::vector<Trajectory>& corpus) {
    for (const auto& t : corpus) out << trajectory_to_json(t).dump() << '\n';
}

inline void write_corpus_file(const std::string& path, const std::vector<Trajectory>& corpus) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open corpus file for writing: " + path);
    write_corpus(out, corpus);
}

}  // namespace tlt
