#include "doctest.h"

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "evalbench.hpp"
#include "kernels.hpp"
#include "training.hpp"

using namespace squidlet;

namespace {

// full-matrix DP, the independent oracle for the two-row implementation
int64_t dp_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<std::vector<int64_t>> dp(n + 1, std::vector<int64_t>(m + 1, 0));
    for (size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int64_t>(i);
    for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int64_t>(j);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                                 dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return dp[n][m];
}

std::vector<int> random_seq(Rng& rng, int max_len, int alphabet) {
    std::vector<int> v(rng.uniform_int(static_cast<uint64_t>(max_len) + 1));
    for (auto& x : v) x = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(alphabet)));
    return v;
}

ModelSpec bench_spec(int n_memory) {
    ModelSpec spec;
    spec.n_max_memory = 64;
    spec.pi_s_cfg = DecoderConfig{16, 1, 2, 32, 0, 256, 10000.0};
    spec.pi_l_cfg = DecoderConfig{64, 4, 4, 256, 0, 256, 10000.0};
    spec.d_proj = 64;
    spec.comp = CompressionConfig{n_memory, 256};
    return spec;
}

} // namespace

TEST_CASE("edit distance matches the quadratic DP oracle on 500 random pairs") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = random_seq(rng, 24, 6);
        const auto b = random_seq(rng, 24, 6);
        CHECK(edit_distance(a, b) == dp_oracle(a, b));
        CHECK(edit_similarity(a, b) == edit_similarity(b, a));
    }
}

TEST_CASE("single substitution in a 120-token restoration scores 119/120") {
    std::vector<int> original(120), restored(120);
    for (int i = 0; i < 120; ++i) original[static_cast<size_t>(i)] = restored[static_cast<size_t>(i)] = i % 50;
    restored[60] = 499; // the lone word swap
    CHECK(edit_similarity(restored, original) == doctest::Approx(119.0 / 120.0).epsilon(1e-9));
    size_t matches = 0;
    for (int i = 0; i < 120; ++i) {
        if (original[static_cast<size_t>(i)] == restored[static_cast<size_t>(i)]) ++matches;
    }
    CHECK(static_cast<double>(matches) / 120.0 == doctest::Approx(119.0 / 120.0));
}

TEST_CASE("perfect restoration scores exactly 1.0 through the report path") {
    std::vector<AccuracySample> scores = {{"contextual_qa", 1.0, 1.0, 1.0}};
    const auto report = make_accuracy_report("token_exact", scores);
    CHECK(report.exact_rate == 1.0);
    CHECK(report.weighted_average == 1.0);
    CHECK(report.edit_similarity == 1.0);
}

TEST_CASE("weighted average is the count-weighted mean of category rates") {
    std::vector<AccuracySample> scores = {
        {"numeric_qa", 1.0, 1.0, 1.0},
        {"numeric_qa", 1.0, 1.0, 1.0},
        {"rephrasing", 1.0, 1.0, 1.0},
        {"rephrasing", 0.0, 0.0, 0.5},
    };
    const auto report = make_accuracy_report("response_exact", scores);
    CHECK(report.weighted_average == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(std::abs(report.weighted_average - report.exact_rate) < 1e-9);
    int total = 0;
    for (const auto& c : report.categories) total += c.count;
    CHECK(total == report.total);
}

TEST_CASE("count_flops: zero prefix counts nothing") {
    DecoderConfig cfg{64, 4, 4, 256, 325, 1024, 10000.0};
    const auto f = count_flops(cfg, 0, 0);
    CHECK(f.total() == 0);
    const auto g = count_flops(cfg, 0, 4);
    CHECK(g.total() == 0);
}

TEST_CASE("prefill attention-score FLOP ratio matches the closed form exactly") {
    DecoderConfig cfg{128, 6, 8, 512, 325, 1024, 10000.0};
    const auto full = count_flops(cfg, 512 + 16, 0);
    const auto compressed = count_flops(cfg, 64 + 16, 0);
    const double ratio = static_cast<double>(full.attn_score) /
                         static_cast<double>(compressed.attn_score);
    CHECK(ratio == 43.56); // (528/80)^2, exact in doubles
    CHECK(full.attn_score == 2ull * 6 * 528 * 528 * 128);
}

TEST_CASE("analytic FLOP counts equal instrumented execution exactly") {
    Tokenizer tok(8);
    DecoderConfig cfg{16, 2, 2, 48, tok.vocab_size(), 64, 10000.0};
    Rng rng(3);
    auto model = Decoder::init(cfg, rng);
    std::vector<int> ids;
    for (int i = 0; i < 12; ++i) ids.push_back(static_cast<int>(rng.uniform_int(256)));

    SUBCASE("forward_hidden is a pure prefill") {
        kernels::flops::reset();
        kernels::flops::enable(true);
        (void)model.forward_hidden(ids);
        kernels::flops::enable(false);
        const auto& c = kernels::flops::counts();
        const auto expect = count_flops(cfg, 12, 0);
        CHECK(c.of(kernels::flops::Class::projection) == expect.projections);
        CHECK(c.of(kernels::flops::Class::attn_score) == expect.attn_score);
        CHECK(c.of(kernels::flops::Class::attn_value) == expect.attn_value);
        CHECK(c.of(kernels::flops::Class::feed_forward) == expect.feed_forward);
        CHECK(c.of(kernels::flops::Class::lm_head) == expect.lm_head);
        CHECK(c.total() == expect.total());
    }

    SUBCASE("generation counts prefill plus cached steps") {
        GenerateOptions opts;
        opts.max_new = 6;
        opts.stop_at_eos = false;
        kernels::flops::reset();
        kernels::flops::enable(true);
        const auto out = generate(model, Tensor{}, ids, opts);
        kernels::flops::enable(false);
        REQUIRE(out.size() == 6);
        const auto& c = kernels::flops::counts();
        const auto expect = count_flops(cfg, 12, 6);
        CHECK(c.of(kernels::flops::Class::projection) == expect.projections);
        CHECK(c.of(kernels::flops::Class::attn_score) == expect.attn_score);
        CHECK(c.of(kernels::flops::Class::attn_value) == expect.attn_value);
        CHECK(c.of(kernels::flops::Class::feed_forward) == expect.feed_forward);
        CHECK(c.of(kernels::flops::Class::lm_head) == expect.lm_head);
        CHECK(c.total() == expect.total());
    }
}

TEST_CASE("latency bench: null comparison and compression speedup") {
    const auto corpus = generate_synthetic(21, 2, GeneratorProfile{128, 256});

    auto st = init_train_state(bench_spec(64), 5);
    Pipeline p{&st.tokenizer, &st.pi_s, &st.phi, &st.pi_l, st.comp};

    BenchOptions opts;
    opts.context_tokens = 64;
    opts.query_tokens = 16;
    opts.max_new = 4;
    opts.warmup = 1;
    opts.repetitions = 3;

    SUBCASE("N == L: improvement factor is ~1 within timing noise") {
        opts.n_memory = 64;
        const auto report = bench_latency(p, st.pi_l, corpus, opts);
        CHECK(report.improvement_factor > 0.8);
        CHECK(report.improvement_factor < 1.25);
        CHECK(report.baseline_prefill_tokens == 80);
        CHECK(report.compressed_prefill_tokens == 80);
    }

    SUBCASE("N < L with a shared pi_l config keeps the factor above 1 - eps") {
        opts.n_memory = 16;
        const auto report = bench_latency(p, st.pi_l, corpus, opts);
        CHECK(report.improvement_factor >= 0.8);
        CHECK(report.compressed_prefill_tokens == 32);
        CHECK(report.compressed_sec.size() == report.baseline_sec.size());
        CHECK(report.baseline_flops.total() > report.compressed_flops.total());
    }
}

TEST_CASE("reports serialize to NDJSON with a summary record") {
    std::vector<AccuracySample> scores = {{"numeric_qa", 1.0, 1.0, 1.0}};
    const auto report = make_accuracy_report("response_exact", scores);
    const auto text = accuracy_report_ndjson(report);
    CHECK(text.find("\"record\":\"summary\"") != std::string::npos);
    CHECK(text.find("numeric_qa") != std::string::npos);
    const auto table = accuracy_report_table(report);
    CHECK(table.find("weighted average") != std::string::npos);
}

TEST_CASE("answer accuracy over an untrained pipeline produces a consistent report") {
    const auto corpus = generate_synthetic(23, 6, GeneratorProfile{128, 256});
    auto st = init_train_state(bench_spec(8), 7);
    Pipeline p{&st.tokenizer, &st.pi_s, &st.phi, &st.pi_l, st.comp};
    const auto report = answer_accuracy(p, corpus);
    CHECK(report.total == 6);
    CHECK(std::abs(report.weighted_average - report.exact_rate) < 1e-9);
    int total = 0;
    for (const auto& c : report.categories) total += c.count;
    CHECK(total == 6);
}

TEST_CASE("bench rejects an empty corpus") {
    auto st = init_train_state(bench_spec(8), 9);
    Pipeline p{&st.tokenizer, &st.pi_s, &st.phi, &st.pi_l, st.comp};
    CHECK_THROWS_AS(bench_latency(p, st.pi_l, Corpus{}, BenchOptions{}), UsageError);
}
