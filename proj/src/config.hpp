#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "evalbench.hpp"
#include "training.hpp"

namespace squidlet {

// Flat key = value run configuration ('#' comments, one assignment per
// line). Unknown keys are rejected outright. Resolution order: defaults,
// then config file, then command-line flags.
struct RunConfig {
    std::optional<uint64_t> seed; // mandatory for every run; no wall-clock default

    int n_max_memory = 64;
    int n_memory = 16;
    int l_max = 512;
    int d_proj = 0; // 0 = pi_l width

    int pi_s_d_model = 64, pi_s_n_layers = 4, pi_s_n_heads = 4, pi_s_d_ff = 256;
    int pi_s_max_seq_len = 1024;
    double pi_s_rope_base = 10000.0;
    int pi_l_d_model = 128, pi_l_n_layers = 6, pi_l_n_heads = 8, pi_l_d_ff = 512;
    int pi_l_max_seq_len = 1024;
    double pi_l_rope_base = 10000.0;

    std::string stage = "restoration";
    int steps = 200;
    int batch_size = 4;
    int max_context_tokens_cap = 0; // 0 = l_max
    double lr = 3e-3;
    int warmup_steps = 20;
    double min_lr_ratio = 0.1;
    double weight_decay = 0.1;
    bool train_pi_s = true, train_phi = true, train_pi_l = true;

    int max_new = 64;
    bool greedy = true;
    double temperature = 1.0;

    int context_tokens = 512;
    int query_tokens = 16;
    int bench_repetitions = 10;
    int bench_warmup = 3;

    int n_samples = 32;
    int min_context_tokens = 128;
    int max_context_tokens = 256;

    std::string corpus;
    std::string out;
    std::string checkpoint;
    std::string init_from;
    std::string report;
    std::string eval_mode = "answers"; // answers | restoration

    uint64_t seed_value() const; // throws if unset

    ModelSpec model_spec() const;
    StageConfig stage_config() const;
    BenchOptions bench_options() const;
    GeneratorProfile generator_profile() const;
};

// Applies one assignment; used for both config files and flag overrides.
// Unknown key or a value of the wrong type raises ConfigError.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// defaults overlaid with the file's assignments; empty file = all defaults
RunConfig parse_config(const std::string& path);
void apply_config_text(RunConfig& cfg, const std::string& text);

// every key in canonical order, with current values (the resolved header)
std::string resolved_config_text(const RunConfig& cfg);
std::vector<std::string> config_keys();

} // namespace squidlet
