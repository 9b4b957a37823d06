#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "config.hpp"
#include "errors.hpp"

using namespace squidlet;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& text)
        : path("/tmp/squidlet_cfg_" + name) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("empty config file yields all defaults") {
    TempFile f("empty.cfg", "");
    const auto cfg = parse_config(f.path);
    CHECK(cfg.n_memory == 16);
    CHECK(cfg.n_max_memory == 64);
    CHECK(cfg.pi_s_d_model == 64);
    CHECK(cfg.pi_l_d_model == 128);
    CHECK(!cfg.seed.has_value());
}

TEST_CASE("file assignments override defaults; comments are ignored") {
    TempFile f("values.cfg", "# experiment\nn_memory = 64\nlr = 0.001  # tuned\nstage = continual\n");
    const auto cfg = parse_config(f.path);
    CHECK(cfg.n_memory == 64);
    CHECK(cfg.lr == doctest::Approx(0.001));
    CHECK(cfg.stage == "continual");
}

TEST_CASE("flags beat file values which beat defaults") {
    TempFile f("prec.cfg", "n_memory = 64\n");
    auto cfg = parse_config(f.path);
    CHECK(cfg.n_memory == 64);        // file over default (16)
    apply_config_value(cfg, "n_memory", "32");
    CHECK(cfg.n_memory == 32);        // flag over file
    CHECK(RunConfig{}.n_memory == 16);
}

TEST_CASE("unknown keys are rejected by name") {
    RunConfig cfg;
    try {
        apply_config_value(cfg, "n_memroy", "64");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("n_memroy") != std::string::npos);
    }
    TempFile f("unknown.cfg", "definitely_not_a_key = 1\n");
    CHECK_THROWS_AS(parse_config(f.path), ConfigError);
}

TEST_CASE("type mismatches name the expected type") {
    RunConfig cfg;
    try {
        apply_config_value(cfg, "steps", "many");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("integer") != std::string::npos);
    }
    CHECK_THROWS_AS(apply_config_value(cfg, "lr", "fast"), ConfigError);
    CHECK_THROWS_AS(apply_config_value(cfg, "greedy", "maybe"), ConfigError);
}

TEST_CASE("seed is mandatory with no wall-clock default") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.seed_value(), ConfigError);
    apply_config_value(cfg, "seed", "7");
    CHECK(cfg.seed_value() == 7);
}

TEST_CASE("resolved header lists every key with its current value") {
    RunConfig cfg;
    apply_config_value(cfg, "n_memory", "24");
    const auto text = resolved_config_text(cfg);
    CHECK(text.find("n_memory = 24") != std::string::npos);
    CHECK(text.find("seed = <unset>") != std::string::npos);
    for (const auto& key : config_keys()) {
        CHECK(text.find(key + " = ") != std::string::npos);
    }
}

TEST_CASE("derived specs reflect the config") {
    RunConfig cfg;
    apply_config_value(cfg, "pi_s_d_model", "32");
    apply_config_value(cfg, "n_memory", "8");
    apply_config_value(cfg, "l_max", "300");
    const auto spec = cfg.model_spec();
    CHECK(spec.pi_s_cfg.d_model == 32);
    CHECK(spec.comp.n_memory == 8);
    CHECK(spec.comp.l_max == 300);
    const auto stage = cfg.stage_config();
    CHECK(stage.stage == "restoration");
    const auto bench = cfg.bench_options();
    CHECK(bench.n_memory == 8);
}
