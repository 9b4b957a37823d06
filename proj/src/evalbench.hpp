#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compression.hpp"
#include "data.hpp"
#include "model.hpp"
#include "tokenizer.hpp"

namespace squidlet {

// Evaluation and efficiency harness: restoration fidelity, per-category
// answer accuracy, analytic + instrumented FLOP accounting, and wall-clock
// comparison of the compressed pipeline against full-context decoding.

// Read-only bundle of everything inference needs.
struct Pipeline {
    const Tokenizer* tokenizer = nullptr;
    const Decoder* pi_s = nullptr;
    const Projector* phi = nullptr;
    const Decoder* pi_l = nullptr;
    CompressionConfig comp;
};

struct CategoryStats {
    std::string category;
    int count = 0;
    double exact_rate = 0.0;      // primary score (see AccuracyReport::metric)
    double lenient_rate = 0.0;    // normalized / containment match
    double edit_similarity = 0.0; // mean 1 - dist/max_len
};

struct AccuracyReport {
    std::string metric; // "token_exact" (restoration) or "response_exact"
    std::vector<CategoryStats> categories;
    int total = 0;
    double exact_rate = 0.0;
    double lenient_rate = 0.0;
    double edit_similarity = 0.0;
    // count-weighted mean of per-category exact_rate; equals the pooled
    // exact_rate whenever every sample lands in some category
    double weighted_average = 0.0;
};

// full-scale reference results (0.5B/7B decoders on an A100), printed as
// context next to desk-scale numbers
inline constexpr double kReferenceWeightedAccuracyPct = 98.53;
inline constexpr double kReferenceLatencyCompressedSec = 4.32;
inline constexpr double kReferenceLatencyBaselineSec = 20.71;
inline constexpr double kReferenceImprovementFactor = 4.79;

// Levenshtein distance, two-row DP.
int64_t edit_distance(std::span<const int> a, std::span<const int> b);
int64_t edit_distance_str(const std::string& a, const std::string& b);
double edit_similarity(std::span<const int> a, std::span<const int> b);

// per-sample scores feeding a report
struct AccuracySample {
    std::string category;
    double exact = 0.0;
    double lenient = 0.0;
    double edit_sim = 0.0;
};

AccuracyReport make_accuracy_report(const std::string& metric,
                                    const std::vector<AccuracySample>& scores);

// Greedy restoration decode per context; exact_rate is the mean token-level
// match fraction, lenient_rate the fraction of fully restored contexts.
AccuracyReport restoration_accuracy(const Pipeline& p, const Corpus& corpus);

// Greedy answer decode per sample; exact_rate scores trimmed equality,
// lenient_rate normalized equality-or-containment.
AccuracyReport answer_accuracy(const Pipeline& p, const Corpus& corpus);

// ------------------------------------------------------------------
// FLOPs

struct FlopCount {
    uint64_t projections = 0;
    uint64_t attn_score = 0;
    uint64_t attn_value = 0;
    uint64_t feed_forward = 0;
    uint64_t lm_head = 0;
    uint64_t total() const {
        return projections + attn_score + attn_value + feed_forward + lm_head;
    }
};

// Closed-form counts for prefilling prefix_tokens rows and generating
// generated_tokens more, mirroring the implemented matmul structure
// exactly (2*m*k*n per matmul; full-square attention in prefill; the LM
// head runs once per generated token). prefix_tokens = 0 counts nothing.
FlopCount count_flops(const DecoderConfig& cfg, int prefix_tokens, int generated_tokens);

// the projector's two linear maps over n rows
uint64_t projector_flops(int n_rows, int d_in, int d_proj, int d_out);

// ------------------------------------------------------------------
// latency

struct BenchOptions {
    int context_tokens = 512; // contexts sliced/padded to exactly this
    int query_tokens = 16;    // prompts sliced/padded to exactly this
    int n_memory = 64;
    int max_new = 32;
    int warmup = 3;
    int repetitions = 10;
};

struct LatencyReport {
    BenchOptions options;
    std::vector<double> compressed_sec; // per-sample median
    std::vector<double> baseline_sec;
    double compressed_mean = 0.0;
    double baseline_mean = 0.0;
    double improvement_factor = 0.0;
    int baseline_prefill_tokens = 0;
    int compressed_prefill_tokens = 0;
    int encoder_tokens = 0;
    FlopCount compressed_flops; // analytic, includes encoder + projector
    FlopCount baseline_flops;
};

// Greedy decode of exactly max_new tokens per arm (eos ignored), timed on a
// monotonic clock: warmup runs discarded, median of repetitions per sample,
// single-threaded. The compressed arm times encode + projection + decode
// end to end.
LatencyReport bench_latency(const Pipeline& p, const Decoder& baseline, const Corpus& corpus,
                            const BenchOptions& options);

// ------------------------------------------------------------------
// report output

std::string accuracy_report_table(const AccuracyReport& r);
std::string accuracy_report_ndjson(const AccuracyReport& r);
std::string latency_report_table(const LatencyReport& r);
std::string latency_report_ndjson(const LatencyReport& r);

} // namespace squidlet
