// squidlet: desk-scale decoder-decoder context compression.
// Subcommands: data-gen, train, eval, bench, generate, inspect-checkpoint.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "evalbench.hpp"
#include "threading.hpp"
#include "tokenizer.hpp"
#include "training.hpp"

namespace fs = std::filesystem;
using namespace squidlet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_config_flags(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "flat key = value config file");
    for (const auto& key : config_keys()) {
        std::string flag = "--" + key;
        for (auto& c : flag) {
            if (c == '_') c = '-';
        }
        sub->add_option_function<std::string>(
            flag,
            [&args, key](const std::string& value) { args.overrides.emplace_back(key, value); },
            "config key " + key);
    }
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = parse_config(args.config_path);
    for (const auto& [key, value] : args.overrides) apply_config_value(cfg, key, value);
    return cfg;
}

void print_header(const RunConfig& cfg) {
    std::cout << "--- resolved config ---\n" << resolved_config_text(cfg) << "---\n";
}

void require_readable(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path is required");
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out << text;
}

Pipeline make_pipeline(const TrainState& st) {
    Pipeline p;
    p.tokenizer = &st.tokenizer;
    p.pi_s = &st.pi_s;
    p.phi = &st.phi;
    p.pi_l = &st.pi_l;
    p.comp = st.comp;
    return p;
}

// ------------------------------------------------------------------

int cmd_data_gen(const RunConfig& cfg) {
    print_header(cfg);
    if (cfg.out.empty()) throw UsageError("data-gen: --out <file.jsonl> is required");
    auto corpus = generate_synthetic(cfg.seed_value(), cfg.n_samples, cfg.generator_profile());
    write_corpus(cfg.out, corpus);
    std::cout << "wrote " << corpus.size() << " samples to " << cfg.out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    print_header(cfg);
    require_readable(cfg.corpus, "corpus");
    if (cfg.out.empty()) throw UsageError("train: --out <dir> is required");
    if (!cfg.init_from.empty()) require_readable(cfg.init_from, "checkpoint");
    fs::create_directories(cfg.out);

    const Corpus corpus = load_corpus(cfg.corpus);
    if (corpus.empty()) throw BatchError("train: corpus " + cfg.corpus + " is empty");

    TrainState st = cfg.init_from.empty() ? init_train_state(cfg.model_spec(), cfg.seed_value())
                                          : load_checkpoint(cfg.init_from);
    StageConfig stage = cfg.stage_config();
    stage.seed = cfg.seed_value();

    const auto t0 = std::chrono::steady_clock::now();
    const int64_t first_step = st.step;
    train(st, stage, corpus);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string ck_path = (fs::path(cfg.out) / "checkpoint.sqd").string();
    save_checkpoint(st, ck_path);

    std::ostringstream report;
    for (size_t i = static_cast<size_t>(first_step); i < st.loss_history.size(); ++i) {
        nlohmann::json line;
        line["record"] = "loss";
        line["step"] = i;
        line["value"] = st.loss_history[i];
        report << line.dump() << '\n';
    }
    nlohmann::json meta;
    meta["record"] = "meta";
    meta["stage"] = stage.stage;
    meta["timestamp"] = timestamp_utc();
    meta["elapsed_sec"] = elapsed;
    report << meta.dump() << '\n';
    write_text_file((fs::path(cfg.out) / "train_report.ndjson").string(), report.str());

    std::cout << "stage " << stage.stage << ": " << (st.step - first_step) << " steps, first loss "
              << (st.loss_history.empty() ? 0.0f : st.loss_history[static_cast<size_t>(first_step)])
              << ", last loss " << st.loss_history.back() << "\n";
    std::cout << "checkpoint written to " << ck_path << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    print_header(cfg);
    require_readable(cfg.checkpoint, "checkpoint");
    require_readable(cfg.corpus, "corpus");
    TrainState st = load_checkpoint(cfg.checkpoint);
    const Corpus corpus = load_corpus(cfg.corpus);
    const Pipeline p = make_pipeline(st);

    AccuracyReport report;
    if (cfg.eval_mode == "restoration") {
        report = restoration_accuracy(p, corpus);
    } else if (cfg.eval_mode == "answers") {
        report = answer_accuracy(p, corpus);
    } else {
        throw UsageError("eval: eval_mode must be 'answers' or 'restoration'");
    }
    std::cout << accuracy_report_table(report);
    if (!cfg.report.empty()) {
        std::ostringstream os;
        os << accuracy_report_ndjson(report);
        nlohmann::json meta;
        meta["record"] = "meta";
        meta["timestamp"] = timestamp_utc();
        os << meta.dump() << '\n';
        write_text_file(cfg.report, os.str());
    }
    return 0;
}

int cmd_bench(const RunConfig& cfg) {
    print_header(cfg);
    require_readable(cfg.corpus, "corpus");
    TrainState st = [&] {
        if (!cfg.checkpoint.empty()) {
            require_readable(cfg.checkpoint, "checkpoint");
            return load_checkpoint(cfg.checkpoint);
        }
        return init_train_state(cfg.model_spec(), cfg.seed_value());
    }();
    const Corpus corpus = load_corpus(cfg.corpus);
    const Pipeline p = make_pipeline(st);

    const LatencyReport report = bench_latency(p, st.pi_l, corpus, cfg.bench_options());
    std::cout << latency_report_table(report);
    if (!cfg.report.empty()) {
        std::ostringstream os;
        os << latency_report_ndjson(report);
        nlohmann::json meta;
        meta["record"] = "meta";
        meta["timestamp"] = timestamp_utc();
        os << meta.dump() << '\n';
        write_text_file(cfg.report, os.str());
    }
    return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& context, const std::string& context_file,
                 const std::string& prompt) {
    print_header(cfg);
    require_readable(cfg.checkpoint, "checkpoint");
    std::string ctx_text = context;
    if (!context_file.empty()) {
        require_readable(context_file, "context file");
        std::ifstream in(context_file, std::ios::binary);
        ctx_text.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    if (ctx_text.empty()) throw UsageError("generate: --context or --context-file is required");
    if (prompt.empty()) throw UsageError("generate: --prompt is required");

    TrainState st = load_checkpoint(cfg.checkpoint);
    const auto ctx = st.tokenizer.encode(ctx_text);
    const auto e = compress_context(st.pi_s, st.phi, ctx, st.comp, st.tokenizer);
    std::vector<int> ids = {Tokenizer::bos_id()};
    const auto q = st.tokenizer.encode(prompt);
    ids.insert(ids.end(), q.begin(), q.end());

    GenerateOptions opts;
    opts.max_new = cfg.max_new;
    opts.greedy = cfg.greedy;
    opts.temperature = cfg.temperature;
    opts.seed = cfg.seed_value();
    const auto out = generate(st.pi_l, e, ids, opts);
    std::cout << st.tokenizer.decode(out) << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    require_readable(path, "checkpoint");
    const CheckpointData data = read_checkpoint_file(path);
    std::cout << "version: " << data.version << "\n";
    std::cout << "tensors: " << data.tensors.size() << "\n";
    int64_t total = 0;
    for (const auto& [name, t] : data.tensors) {
        std::cout << "  " << name << "  " << t.shape_str() << "  " << t.numel() << "\n";
        total += t.numel();
    }
    std::cout << "total elements: " << total << "\n";
    std::cout << "--- config ---\n" << data.config_text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    init_threads_from_env();

    CLI::App app{"squidlet: compress long contexts into memory-token embeddings consumed by a "
                 "larger decoder"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, bench_args, generate_args;
    std::string generate_context, generate_context_file, generate_prompt, inspect_path;

    auto* sub_data = app.add_subcommand("data-gen", "write a synthetic (context, prompt, response) corpus");
    add_config_flags(sub_data, gen_args);
    auto* sub_train = app.add_subcommand("train", "run one training stage and write a checkpoint");
    add_config_flags(sub_train, train_args);
    auto* sub_eval = app.add_subcommand("eval", "score restoration or answer accuracy");
    add_config_flags(sub_eval, eval_args);
    auto* sub_bench = app.add_subcommand("bench", "latency + FLOP comparison vs full-context decoding");
    add_config_flags(sub_bench, bench_args);
    auto* sub_generate = app.add_subcommand("generate", "answer a prompt against a compressed context");
    add_config_flags(sub_generate, generate_args);
    sub_generate->add_option("--context", generate_context, "context text");
    sub_generate->add_option("--context-file", generate_context_file, "context file");
    sub_generate->add_option("--prompt", generate_prompt, "query text");
    auto* sub_inspect = app.add_subcommand("inspect-checkpoint", "list checkpoint contents");
    sub_inspect->add_option("--checkpoint", inspect_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sub_data->parsed()) return cmd_data_gen(resolve_config(gen_args));
        if (sub_train->parsed()) return cmd_train(resolve_config(train_args));
        if (sub_eval->parsed()) return cmd_eval(resolve_config(eval_args));
        if (sub_bench->parsed()) return cmd_bench(resolve_config(bench_args));
        if (sub_generate->parsed()) {
            return cmd_generate(resolve_config(generate_args), generate_context,
                                generate_context_file, generate_prompt);
        }
        if (sub_inspect->parsed()) return cmd_inspect(inspect_path);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
