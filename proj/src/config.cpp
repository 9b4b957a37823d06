#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace squidlet {

namespace {

struct KeyEntry {
    const char* key;
    const char* type; // int | uint | float | bool | string
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (...) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
    }
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        if (pos != v.size() || v[0] == '-') throw std::invalid_argument("trailing");
        return out;
    } catch (...) {
        throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double parse_float(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (...) {
        throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

#define INT_KEY(name)                                                                       \
    KeyEntry{#name, "int",                                                                  \
             [](RunConfig& c, const std::string& v) { c.name = parse_int(#name, v); },      \
             [](const RunConfig& c) { return std::to_string(c.name); }}
std::string format_float(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v); // shortest round-trip
    return std::string(buf, res.ptr);
}

#define FLOAT_KEY(name)                                                                     \
    KeyEntry{#name, "float",                                                                \
             [](RunConfig& c, const std::string& v) { c.name = parse_float(#name, v); },    \
             [](const RunConfig& c) { return format_float(c.name); }}
#define BOOL_KEY(name)                                                                      \
    KeyEntry{#name, "bool",                                                                 \
             [](RunConfig& c, const std::string& v) { c.name = parse_bool(#name, v); },     \
             [](const RunConfig& c) { return c.name ? std::string("true") : std::string("false"); }}
#define STRING_KEY(name)                                                                    \
    KeyEntry{#name, "string", [](RunConfig& c, const std::string& v) { c.name = v; },       \
             [](const RunConfig& c) { return c.name; }}

const std::vector<KeyEntry>& registry() {
    static const std::vector<KeyEntry> entries = {
        KeyEntry{"seed", "uint",
                 [](RunConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
                 [](const RunConfig& c) {
                     return c.seed ? std::to_string(*c.seed) : std::string("<unset>");
                 }},
        INT_KEY(n_max_memory),
        INT_KEY(n_memory),
        INT_KEY(l_max),
        INT_KEY(d_proj),
        INT_KEY(pi_s_d_model),
        INT_KEY(pi_s_n_layers),
        INT_KEY(pi_s_n_heads),
        INT_KEY(pi_s_d_ff),
        INT_KEY(pi_s_max_seq_len),
        FLOAT_KEY(pi_s_rope_base),
        INT_KEY(pi_l_d_model),
        INT_KEY(pi_l_n_layers),
        INT_KEY(pi_l_n_heads),
        INT_KEY(pi_l_d_ff),
        INT_KEY(pi_l_max_seq_len),
        FLOAT_KEY(pi_l_rope_base),
        STRING_KEY(stage),
        INT_KEY(steps),
        INT_KEY(batch_size),
        INT_KEY(max_context_tokens_cap),
        FLOAT_KEY(lr),
        INT_KEY(warmup_steps),
        FLOAT_KEY(min_lr_ratio),
        FLOAT_KEY(weight_decay),
        BOOL_KEY(train_pi_s),
        BOOL_KEY(train_phi),
        BOOL_KEY(train_pi_l),
        INT_KEY(max_new),
        BOOL_KEY(greedy),
        FLOAT_KEY(temperature),
        INT_KEY(context_tokens),
        INT_KEY(query_tokens),
        INT_KEY(bench_repetitions),
        INT_KEY(bench_warmup),
        INT_KEY(n_samples),
        INT_KEY(min_context_tokens),
        INT_KEY(max_context_tokens),
        STRING_KEY(corpus),
        STRING_KEY(out),
        STRING_KEY(checkpoint),
        STRING_KEY(init_from),
        STRING_KEY(report),
        STRING_KEY(eval_mode),
    };
    return entries;
}

#undef INT_KEY
#undef FLOAT_KEY
#undef BOOL_KEY
#undef STRING_KEY

} // namespace

uint64_t RunConfig::seed_value() const {
    if (!seed) throw ConfigError("seed is mandatory and has no default; pass --seed");
    return *seed;
}

ModelSpec RunConfig::model_spec() const {
    ModelSpec spec;
    spec.n_max_memory = n_max_memory;
    spec.pi_s_cfg = DecoderConfig{pi_s_d_model, pi_s_n_layers, pi_s_n_heads, pi_s_d_ff,
                                  0,           pi_s_max_seq_len, pi_s_rope_base};
    spec.pi_l_cfg = DecoderConfig{pi_l_d_model, pi_l_n_layers, pi_l_n_heads, pi_l_d_ff,
                                  0,           pi_l_max_seq_len, pi_l_rope_base};
    spec.d_proj = d_proj;
    spec.comp = CompressionConfig{n_memory, l_max};
    return spec;
}

StageConfig RunConfig::stage_config() const {
    StageConfig s;
    s.stage = stage;
    s.steps = steps;
    s.batch_size = batch_size;
    s.max_context_tokens = max_context_tokens_cap;
    s.lr = lr;
    s.warmup_steps = warmup_steps;
    s.min_lr_ratio = min_lr_ratio;
    s.weight_decay = weight_decay;
    s.train_pi_s = train_pi_s;
    s.train_phi = train_phi;
    s.train_pi_l = train_pi_l;
    return s;
}

BenchOptions RunConfig::bench_options() const {
    BenchOptions b;
    b.context_tokens = context_tokens;
    b.query_tokens = query_tokens;
    b.n_memory = n_memory;
    b.max_new = max_new;
    b.warmup = bench_warmup;
    b.repetitions = bench_repetitions;
    return b;
}

GeneratorProfile RunConfig::generator_profile() const {
    return GeneratorProfile{min_context_tokens, max_context_tokens};
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& entry : registry()) {
        if (key == entry.key) {
            entry.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
    for (const auto& [key, value] : config_parse_lines(text)) {
        apply_config_value(cfg, key, value);
    }
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    RunConfig cfg;
    try {
        apply_config_text(cfg, text);
    } catch (const ParseError& e) {
        throw ConfigError(std::string(e.what()) + " in " + path);
    }
    return cfg;
}

std::string resolved_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& entry : registry()) {
        os << entry.key << " = " << entry.get(cfg) << '\n';
    }
    return os.str();
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& entry : registry()) keys.emplace_back(entry.key);
    return keys;
}

} // namespace squidlet
