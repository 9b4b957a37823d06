#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tokenizer.hpp"

namespace squidlet {

// (context, prompt, response) triplets, optionally tagged with one of six
// task categories.

inline constexpr const char* kCategories[] = {
    "contextual_qa", "numeric_qa", "rephrasing",
    "summarization", "title_keywords", "continuation",
};
inline constexpr int kNumCategories = 6;

// test-set category mix, in percent
inline constexpr double kCategoryPercent[] = {56.36, 9.19, 6.86, 7.08, 13.78, 6.73};

struct Sample {
    std::string context;
    std::string prompt;
    std::string response;
    std::string category; // empty = untagged

    bool operator==(const Sample&) const = default;
};

struct Corpus {
    std::vector<Sample> samples;
    std::string provenance;
    std::optional<uint64_t> seed;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Newline-delimited JSON objects with keys context/prompt/response and
// optional category. Unknown keys ignored; malformed lines reported with
// their line number. An empty file loads as an empty corpus.
Corpus load_corpus(const std::string& path);
void write_corpus(const std::string& path, const Corpus& corpus);

struct GeneratorProfile {
    int min_context_tokens = 128;
    int max_context_tokens = 256;
    void validate() const;
};

// Deterministic templated fact paragraphs with derivable answers; QA
// answers appear verbatim in their contexts so exact-match grading is
// sound. Category mix follows the test-set distribution by largest-
// remainder quota.
Corpus generate_synthetic(uint64_t seed, int n, const GeneratorProfile& profile);

// quota counts per category for n samples
std::vector<int> category_quota(int n);

// Split point uniform over [0.25, 0.75] of the length, both halves
// nonempty; concatenation reproduces the input exactly.
std::pair<std::vector<int>, std::vector<int>> split_for_continual(const std::vector<int>& tokens,
                                                                  Rng& rng);

// Seeded shuffle chunked into batches; the final short batch is kept.
std::vector<std::vector<int>> batchify(size_t corpus_size, int batch_size, uint64_t seed);

} // namespace squidlet
