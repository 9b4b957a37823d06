#include "evalbench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "errors.hpp"
#include "threading.hpp"

namespace squidlet {

using nlohmann::json;

namespace {

void check_pipeline(const Pipeline& p) {
    if (p.tokenizer == nullptr || p.pi_s == nullptr || p.phi == nullptr || p.pi_l == nullptr) {
        throw UsageError("pipeline: models not initialized");
    }
}

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string normalize(const std::string& s) {
    std::string out;
    bool in_ws = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = !out.empty();
            continue;
        }
        if (in_ws) out.push_back(' ');
        in_ws = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

} // namespace

AccuracyReport make_accuracy_report(const std::string& metric,
                                    const std::vector<AccuracySample>& scores) {
    AccuracyReport report;
    report.metric = metric;
    report.total = static_cast<int>(scores.size());

    std::vector<std::string> order(std::begin(kCategories), std::end(kCategories));
    order.emplace_back("uncategorized");
    for (const auto& cat : order) {
        CategoryStats stats;
        stats.category = cat;
        for (const auto& s : scores) {
            const std::string c = s.category.empty() ? "uncategorized" : s.category;
            if (c != cat) continue;
            stats.count += 1;
            stats.exact_rate += s.exact;
            stats.lenient_rate += s.lenient;
            stats.edit_similarity += s.edit_sim;
        }
        if (stats.count == 0) continue;
        stats.exact_rate /= stats.count;
        stats.lenient_rate /= stats.count;
        stats.edit_similarity /= stats.count;
        report.categories.push_back(stats);
    }

    double wsum = 0.0;
    for (const auto& c : report.categories) wsum += c.exact_rate * c.count;
    for (const auto& s : scores) {
        report.exact_rate += s.exact;
        report.lenient_rate += s.lenient;
        report.edit_similarity += s.edit_sim;
    }
    if (report.total > 0) {
        report.exact_rate /= report.total;
        report.lenient_rate /= report.total;
        report.edit_similarity /= report.total;
        report.weighted_average = wsum / report.total;
    }
    return report;
}

namespace {

double now_sec() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace

// ------------------------------------------------------------------
// edit distance

int64_t edit_distance(std::span<const int> a, std::span<const int> b) {
    const size_t n = a.size(), m = b.size();
    if (n == 0) return static_cast<int64_t>(m);
    if (m == 0) return static_cast<int64_t>(n);
    std::vector<int64_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int64_t>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

int64_t edit_distance_str(const std::string& a, const std::string& b) {
    std::vector<int> av(a.begin(), a.end()), bv(b.begin(), b.end());
    return edit_distance(av, bv);
}

double edit_similarity(std::span<const int> a, std::span<const int> b) {
    const size_t max_len = std::max(a.size(), b.size());
    if (max_len == 0) return 1.0;
    return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(max_len);
}

// ------------------------------------------------------------------
// accuracy

namespace {

// Sample fan-out honoring the worker-thread cap. Exceptions are captured
// inside the parallel region and rethrown afterwards.
template <class Fn>
void for_each_sample(size_t count, const Fn& fn) {
    const int nt = num_threads();
    std::exception_ptr error;
#pragma omp parallel for num_threads(nt) schedule(dynamic) if (nt > 1)
    for (size_t i = 0; i < count; ++i) {
        try {
            fn(i);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

} // namespace

AccuracyReport restoration_accuracy(const Pipeline& p, const Corpus& corpus) {
    check_pipeline(p);
    std::vector<AccuracySample> scores(corpus.size());
    for_each_sample(corpus.size(), [&](size_t i) {
        const Sample& s = corpus.samples[i];
        const auto ctx = p.tokenizer->encode(s.context);
        const auto e = compress_context(*p.pi_s, *p.phi, ctx, p.comp, *p.tokenizer);
        GenerateOptions opts;
        opts.max_new = static_cast<int>(ctx.size()) + 16;
        opts.greedy = true;
        const std::vector<int> prompt = {Tokenizer::restore_id()};
        const auto restored = generate(*p.pi_l, e, prompt, opts);

        const size_t max_len = std::max(restored.size(), ctx.size());
        size_t matches = 0;
        for (size_t t = 0; t < std::min(restored.size(), ctx.size()); ++t) {
            if (restored[t] == ctx[t]) ++matches;
        }
        AccuracySample score;
        score.category = s.category;
        score.exact = max_len == 0 ? 1.0 : static_cast<double>(matches) / static_cast<double>(max_len);
        score.lenient = restored == ctx ? 1.0 : 0.0;
        score.edit_sim = edit_similarity(restored, ctx);
        scores[i] = score;
    });
    return make_accuracy_report("token_exact", scores);
}

AccuracyReport answer_accuracy(const Pipeline& p, const Corpus& corpus) {
    check_pipeline(p);
    std::vector<AccuracySample> scores(corpus.size());
    for_each_sample(corpus.size(), [&](size_t i) {
        const Sample& s = corpus.samples[i];
        const auto ctx = p.tokenizer->encode(s.context);
        const auto e = compress_context(*p.pi_s, *p.phi, ctx, p.comp, *p.tokenizer);
        std::vector<int> prompt = {Tokenizer::bos_id()};
        const auto q = p.tokenizer->encode(s.prompt);
        prompt.insert(prompt.end(), q.begin(), q.end());
        GenerateOptions opts;
        opts.max_new = static_cast<int>(p.tokenizer->encode(s.response).size()) + 16;
        opts.greedy = true;
        const auto generated = generate(*p.pi_l, e, prompt, opts);
        const std::string response = p.tokenizer->decode(generated);

        AccuracySample score;
        score.category = s.category;
        score.exact = trim(response) == trim(s.response) ? 1.0 : 0.0;
        const std::string rn = normalize(response), gn = normalize(s.response);
        score.lenient =
            (rn == gn || (!gn.empty() && rn.find(gn) != std::string::npos)) ? 1.0 : 0.0;
        score.edit_sim = [&] {
            std::vector<int> av(response.begin(), response.end());
            std::vector<int> bv(s.response.begin(), s.response.end());
            return edit_similarity(av, bv);
        }();
        scores[i] = score;
    });
    return make_accuracy_report("response_exact", scores);
}

// ------------------------------------------------------------------
// FLOPs

FlopCount count_flops(const DecoderConfig& cfg, int prefix_tokens, int generated_tokens) {
    if (prefix_tokens < 0 || generated_tokens < 0) {
        throw UsageError("count_flops: token counts must be >= 0");
    }
    FlopCount f;
    if (prefix_tokens == 0) return f;
    const uint64_t layers = static_cast<uint64_t>(cfg.n_layers);
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t dff = static_cast<uint64_t>(cfg.d_ff);
    const uint64_t v = static_cast<uint64_t>(cfg.vocab_size);
    const uint64_t t = static_cast<uint64_t>(prefix_tokens);
    const uint64_t g = static_cast<uint64_t>(generated_tokens);

    // prefill: full-square attention over t rows
    f.projections += layers * 8 * t * d * d;
    f.attn_score += layers * 2 * t * t * d;
    f.attn_value += layers * 2 * t * t * d;
    f.feed_forward += layers * 6 * t * d * dff;

    // decode steps j = 1..g-1 attend over t + j cached rows
    for (uint64_t j = 1; j < g; ++j) {
        f.projections += layers * 8 * d * d;
        f.attn_score += layers * 2 * (t + j) * d;
        f.attn_value += layers * 2 * (t + j) * d;
        f.feed_forward += layers * 6 * d * dff;
    }
    // one LM-head row per generated token (prefill head + g-1 step heads)
    if (g > 0) f.lm_head += g * 2 * d * v;
    return f;
}

uint64_t projector_flops(int n_rows, int d_in, int d_proj, int d_out) {
    const uint64_t n = static_cast<uint64_t>(n_rows);
    return 2 * n * static_cast<uint64_t>(d_in) * static_cast<uint64_t>(d_proj) +
           2 * n * static_cast<uint64_t>(d_proj) * static_cast<uint64_t>(d_out);
}

// ------------------------------------------------------------------
// latency

namespace {

// slice/tile a token list to exactly len entries
std::vector<int> fit_tokens(const std::vector<int>& ids, int len) {
    if (ids.empty()) throw UsageError("bench: empty token list");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) out.push_back(ids[static_cast<size_t>(i) % ids.size()]);
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

LatencyReport bench_latency(const Pipeline& p, const Decoder& baseline, const Corpus& corpus,
                            const BenchOptions& options) {
    check_pipeline(p);
    if (corpus.empty()) throw UsageError("bench: empty corpus");
    if (options.repetitions < 1) throw UsageError("bench: repetitions must be >= 1");

    LatencyReport report;
    report.options = options;
    report.encoder_tokens = options.context_tokens + options.n_memory;
    report.compressed_prefill_tokens = options.n_memory + options.query_tokens;
    report.baseline_prefill_tokens = options.context_tokens + options.query_tokens;

    CompressionConfig comp = p.comp;
    comp.n_memory = options.n_memory;
    comp.l_max = std::max(comp.l_max, options.context_tokens);

    GenerateOptions gen;
    gen.max_new = options.max_new;
    gen.greedy = true;
    gen.stop_at_eos = false; // both arms decode the same token budget

    // timing is strictly single-threaded
    const int saved_threads = num_threads();
    set_num_threads(1);

    for (const auto& sample : corpus.samples) {
        const auto ctx = fit_tokens(p.tokenizer->encode(sample.context), options.context_tokens);
        const auto query = fit_tokens(p.tokenizer->encode(sample.prompt), options.query_tokens);

        auto run_compressed = [&]() {
            const auto e = compress_context(*p.pi_s, *p.phi, ctx, comp, *p.tokenizer);
            (void)generate(*p.pi_l, e, query, gen);
        };
        std::vector<int> full = ctx;
        full.insert(full.end(), query.begin(), query.end());
        auto run_baseline = [&]() { (void)generate(baseline, Tensor{}, full, gen); };

        std::vector<double> comp_times, base_times;
        for (int w = 0; w < options.warmup; ++w) run_compressed();
        for (int r = 0; r < options.repetitions; ++r) {
            const double t0 = now_sec();
            run_compressed();
            comp_times.push_back(now_sec() - t0);
        }
        for (int w = 0; w < options.warmup; ++w) run_baseline();
        for (int r = 0; r < options.repetitions; ++r) {
            const double t0 = now_sec();
            run_baseline();
            base_times.push_back(now_sec() - t0);
        }
        report.compressed_sec.push_back(median(comp_times));
        report.baseline_sec.push_back(median(base_times));
    }
    set_num_threads(saved_threads);

    for (double t : report.compressed_sec) report.compressed_mean += t;
    for (double t : report.baseline_sec) report.baseline_mean += t;
    report.compressed_mean /= static_cast<double>(report.compressed_sec.size());
    report.baseline_mean /= static_cast<double>(report.baseline_sec.size());
    report.improvement_factor = report.baseline_mean / report.compressed_mean;

    report.baseline_flops =
        count_flops(baseline.cfg, report.baseline_prefill_tokens, options.max_new);
    report.compressed_flops =
        count_flops(p.pi_l->cfg, report.compressed_prefill_tokens, options.max_new);
    const FlopCount enc = count_flops(p.pi_s->cfg, report.encoder_tokens, 0);
    report.compressed_flops.projections +=
        enc.projections +
        projector_flops(options.n_memory, p.pi_s->cfg.d_model, p.phi->w1.dim(1),
                        p.pi_l->cfg.d_model);
    report.compressed_flops.attn_score += enc.attn_score;
    report.compressed_flops.attn_value += enc.attn_value;
    report.compressed_flops.feed_forward += enc.feed_forward;
    return report;
}

// ------------------------------------------------------------------
// report output

std::string accuracy_report_table(const AccuracyReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "category          count  exact%   lenient%  edit-sim\n";
    auto row = [&os](const std::string& name, int count, double exact, double lenient,
                     double sim) {
        os << name;
        for (size_t i = name.size(); i < 18; ++i) os << ' ';
        std::string c = std::to_string(count);
        os << c;
        for (size_t i = c.size(); i < 7; ++i) os << ' ';
        os << 100.0 * exact << "    " << 100.0 * lenient << "     " << sim << "\n";
    };
    for (const auto& c : r.categories) {
        row(c.category, c.count, c.exact_rate, c.lenient_rate, c.edit_similarity);
    }
    row("weighted average", r.total, r.weighted_average, r.lenient_rate, r.edit_similarity);
    os << "full-scale reference weighted average: " << kReferenceWeightedAccuracyPct << "%\n";
    return os.str();
}

std::string accuracy_report_ndjson(const AccuracyReport& r) {
    std::ostringstream os;
    for (const auto& c : r.categories) {
        json line;
        line["record"] = "category";
        line["metric"] = r.metric;
        line["category"] = c.category;
        line["count"] = c.count;
        line["exact_rate"] = c.exact_rate;
        line["lenient_rate"] = c.lenient_rate;
        line["edit_similarity"] = c.edit_similarity;
        os << line.dump() << '\n';
    }
    json summary;
    summary["record"] = "summary";
    summary["metric"] = r.metric;
    summary["total"] = r.total;
    summary["exact_rate"] = r.exact_rate;
    summary["lenient_rate"] = r.lenient_rate;
    summary["edit_similarity"] = r.edit_similarity;
    summary["weighted_average"] = r.weighted_average;
    summary["reference_weighted_average_pct"] = kReferenceWeightedAccuracyPct;
    os << summary.dump() << '\n';
    return os.str();
}

std::string latency_report_table(const LatencyReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "samples: " << r.compressed_sec.size() << ", max_new: " << r.options.max_new
       << ", repetitions: " << r.options.repetitions << " (median per sample)\n";
    os << "prefill tokens: baseline " << r.baseline_prefill_tokens << ", compressed "
       << r.compressed_prefill_tokens << " (+ encoder " << r.encoder_tokens << ")\n";
    os << "mean wall-clock: baseline " << r.baseline_mean << " s, compressed "
       << r.compressed_mean << " s\n";
    os.precision(2);
    os << "improvement factor: " << r.improvement_factor << "x (full-scale reference: "
       << kReferenceImprovementFactor << "x = " << kReferenceLatencyBaselineSec << "s / "
       << kReferenceLatencyCompressedSec << "s)\n";
    os << "FLOPs: baseline " << r.baseline_flops.total() << ", compressed "
       << r.compressed_flops.total() << " (ratio "
       << static_cast<double>(r.baseline_flops.total()) /
              static_cast<double>(r.compressed_flops.total())
       << "x)\n";
    return os.str();
}

std::string latency_report_ndjson(const LatencyReport& r) {
    std::ostringstream os;
    for (size_t i = 0; i < r.compressed_sec.size(); ++i) {
        json line;
        line["record"] = "sample";
        line["index"] = i;
        line["compressed_sec"] = r.compressed_sec[i];
        line["baseline_sec"] = r.baseline_sec[i];
        os << line.dump() << '\n';
    }
    json s;
    s["record"] = "summary";
    s["samples"] = r.compressed_sec.size();
    s["max_new"] = r.options.max_new;
    s["repetitions"] = r.options.repetitions;
    s["warmup"] = r.options.warmup;
    s["baseline_prefill_tokens"] = r.baseline_prefill_tokens;
    s["compressed_prefill_tokens"] = r.compressed_prefill_tokens;
    s["encoder_tokens"] = r.encoder_tokens;
    s["baseline_mean_sec"] = r.baseline_mean;
    s["compressed_mean_sec"] = r.compressed_mean;
    s["improvement_factor"] = r.improvement_factor;
    s["baseline_flops"] = r.baseline_flops.total();
    s["compressed_flops"] = r.compressed_flops.total();
    s["reference_improvement_factor"] = kReferenceImprovementFactor;
    os << s.dump() << '\n';
    return os.str();
}

} // namespace squidlet
