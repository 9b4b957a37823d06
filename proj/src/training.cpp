#include "training.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace squidlet {

namespace {

constexpr uint64_t kEpochStream = 0x45504F43ULL; // "EPOC"
constexpr uint64_t kSplitStream = 0x53504C54ULL; // "SPLT"

uint64_t stage_label(const std::string& stage) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct SampleLoss {
    Tensor loss;
    int n_targets = 0;
};

// pi_l teacher-forced loss for [E, lead token, body..., eos] with the loss
// masked to the body and eos rows.
SampleLoss decoder_span_loss(TrainState& st, const Tensor& e, int lead_id,
                             const std::vector<int>& body, int mask_from_token_index) {
    const int n = e.dim(0);
    std::vector<int> tokens;
    tokens.reserve(body.size() + 2);
    tokens.push_back(lead_id);
    tokens.insert(tokens.end(), body.begin(), body.end());
    tokens.push_back(Tokenizer::eos_id());

    const int total_rows = n + static_cast<int>(tokens.size());
    if (total_rows > st.pi_l_cfg.max_seq_len) {
        throw SequenceLengthError("pi_l input of " + std::to_string(total_rows) +
                                  " rows exceeds max_seq_len " +
                                  std::to_string(st.pi_l_cfg.max_seq_len));
    }
    auto logits = st.pi_l.forward_logits(e, tokens);

    // row r predicts the token entering at row r + 1
    std::vector<int> targets(static_cast<size_t>(total_rows), 0);
    std::vector<uint8_t> mask(static_cast<size_t>(total_rows), 0);
    int n_targets = 0;
    for (int r = n; r + 1 < total_rows; ++r) {
        const int predicted_index = r - n + 1; // index into tokens
        targets[static_cast<size_t>(r)] = tokens[static_cast<size_t>(predicted_index)];
        if (predicted_index >= mask_from_token_index) {
            mask[static_cast<size_t>(r)] = 1;
            ++n_targets;
        }
    }
    return {cross_entropy_loss(logits, targets, mask), n_targets};
}

Tensor compress_for_training(TrainState& st, const std::vector<int>& context, int cap) {
    if (static_cast<int>(context.size()) > cap) {
        throw BatchError("context of " + std::to_string(context.size()) +
                         " tokens exceeds cap " + std::to_string(cap));
    }
    const auto augmented =
        augment_context(context, st.comp.n_memory, st.tokenizer, st.pi_s_cfg.max_seq_len);
    const auto m = encode_context(st.pi_s, augmented, st.comp.n_memory, st.tokenizer);
    return project(st.phi, m);
}

int context_cap(const TrainState& st, const StageConfig* stage) {
    if (stage != nullptr && stage->max_context_tokens > 0) {
        return std::min(stage->max_context_tokens, st.comp.l_max);
    }
    return st.comp.l_max;
}

void apply_freeze(TrainState& st, const StageConfig& stage) {
    if (!stage.train_pi_s && !stage.train_phi && !stage.train_pi_l) {
        throw ConfigError("stage '" + stage.stage + "': at least one parameter group must train");
    }
    auto set_group = [&](const std::string& prefix, bool on) {
        st.opt.set_active_prefix(prefix, on);
    };
    set_group("pi_s.", stage.train_pi_s);
    set_group("phi.", stage.train_phi);
    set_group("pi_l.", stage.train_pi_l);
    for (auto& [name, p] : st.pi_s.named_parameters("pi_s")) p.set_requires_grad(stage.train_pi_s);
    for (auto& [name, p] : st.phi.named_parameters("phi")) p.set_requires_grad(stage.train_phi);
    for (auto& [name, p] : st.pi_l.named_parameters("pi_l")) p.set_requires_grad(stage.train_pi_l);
}

} // namespace

void StageConfig::validate() const {
    if (stage != "restoration" && stage != "continual" && stage != "instruction") {
        throw ConfigError("unknown stage '" + stage + "'");
    }
    if (steps < 1) throw ConfigError("stage steps must be >= 1");
    if (batch_size < 1) throw ConfigError("stage batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("stage lr must be positive");
    if (!train_pi_s && !train_phi && !train_pi_l) {
        throw ConfigError("at least one parameter group must train");
    }
}

TrainState init_train_state(const ModelSpec& spec, uint64_t seed) {
    if (spec.pi_s_cfg.vocab_size != 0 || spec.pi_l_cfg.vocab_size != 0) {
        throw ConfigError("model spec: vocab_size is derived from the tokenizer");
    }
    TrainState st;
    st.seed = seed;
    st.tokenizer = Tokenizer(spec.n_max_memory);
    st.pi_s_cfg = spec.pi_s_cfg;
    st.pi_l_cfg = spec.pi_l_cfg;
    st.pi_s_cfg.vocab_size = st.tokenizer.vocab_size();
    st.pi_l_cfg.vocab_size = st.tokenizer.vocab_size();
    st.d_proj = spec.d_proj > 0 ? spec.d_proj : spec.pi_l_cfg.d_model;
    st.comp = spec.comp;
    st.comp.validate(spec.n_max_memory);

    st.rng = Rng(seed);
    st.pi_s = Decoder::init(st.pi_s_cfg, st.rng);
    st.phi = Projector::init(st.pi_s_cfg.d_model, st.d_proj, st.pi_l_cfg.d_model, st.rng);
    st.pi_l = Decoder::init(st.pi_l_cfg, st.rng);

    for (auto& [name, p] : st.pi_s.named_parameters("pi_s")) st.opt.add_param(name, p);
    for (auto& [name, p] : st.phi.named_parameters("phi")) st.opt.add_param(name, p);
    for (auto& [name, p] : st.pi_l.named_parameters("pi_l")) st.opt.add_param(name, p);
    return st;
}

float restoration_step(TrainState& st, const TokenBatch& batch, double lr) {
    if (batch.contexts.empty()) throw BatchError("restoration_step: empty batch");
    st.opt.zero_grads();
    const float inv_b = 1.0f / static_cast<float>(batch.contexts.size());
    float total = 0.0f;
    for (size_t i = 0; i < batch.contexts.size(); ++i) {
        try {
            Tape tape;
            auto e = compress_for_training(st, *batch.contexts[i], context_cap(st, nullptr));
            auto out = decoder_span_loss(st, e, Tokenizer::restore_id(), *batch.contexts[i], 1);
            tape.backward(out.loss, inv_b);
            total += out.loss.item() * inv_b;
        } catch (const BatchError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        } catch (const SequenceLengthError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        }
    }
    st.opt.step(lr);
    return total;
}

float continual_step(TrainState& st, const TokenBatch& batch, double lr, uint64_t split_stream) {
    if (batch.contexts.empty()) throw BatchError("continual_step: empty batch");
    st.opt.zero_grads();
    const float inv_b = 1.0f / static_cast<float>(batch.contexts.size());
    float total = 0.0f;
    for (size_t i = 0; i < batch.contexts.size(); ++i) {
        try {
            Rng split_rng(mix_seed(st.seed, kSplitStream, split_stream, i));
            auto [c1, c2] = split_for_continual(*batch.contexts[i], split_rng);
            Tape tape;
            auto e1 = compress_for_training(st, c1, context_cap(st, nullptr));
            auto out = decoder_span_loss(st, e1, Tokenizer::continue_id(), c2, 1);
            tape.backward(out.loss, inv_b);
            total += out.loss.item() * inv_b;
        } catch (const BatchError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        } catch (const SequenceLengthError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        }
    }
    st.opt.step(lr);
    return total;
}

float instruction_step(TrainState& st, const TokenBatch& batch, double lr) {
    if (batch.samples.empty()) throw BatchError("instruction_step: empty batch");
    st.opt.zero_grads();
    const float inv_b = 1.0f / static_cast<float>(batch.samples.size());
    float total = 0.0f;
    for (size_t i = 0; i < batch.samples.size(); ++i) {
        const Sample& s = *batch.samples[i];
        if (s.context.empty() || s.prompt.empty() || s.response.empty()) {
            throw BatchError("sample " + std::to_string(i) +
                             ": instruction samples need context, prompt, and response");
        }
        try {
            const auto ctx = st.tokenizer.encode(s.context);
            const auto q = st.tokenizer.encode(s.prompt);
            const auto r = st.tokenizer.encode(s.response);
            std::vector<int> body = q;
            body.insert(body.end(), r.begin(), r.end());
            Tape tape;
            auto e = compress_for_training(st, ctx, context_cap(st, nullptr));
            // mask starts at the first response token within [bos, Q, R, eos]
            auto out = decoder_span_loss(st, e, Tokenizer::bos_id(), body,
                                         1 + static_cast<int>(q.size()));
            tape.backward(out.loss, inv_b);
            total += out.loss.item() * inv_b;
        } catch (const BatchError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        } catch (const SequenceLengthError& e) {
            throw BatchError("sample " + std::to_string(i) + ": " + e.what());
        }
    }
    st.opt.step(lr);
    return total;
}

void train(TrainState& st, const StageConfig& stage, const Corpus& corpus,
           const TrainCallback& callback) {
    stage.validate();
    if (corpus.empty()) throw BatchError("train: empty corpus");
    apply_freeze(st, stage);
    st.opt.config().lr = stage.lr;
    st.opt.config().weight_decay = stage.weight_decay;
    st.opt.config().beta1 = stage.beta1;
    st.opt.config().beta2 = stage.beta2;
    st.opt.config().eps = stage.adam_eps;

    const int cap = context_cap(st, &stage);

    // tokenize once; validate lengths up front so overlength samples are
    // reported by index before any step runs
    std::vector<std::vector<int>> contexts(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        contexts[i] = st.tokenizer.encode(corpus.samples[i].context);
        if (static_cast<int>(contexts[i].size()) > cap) {
            throw BatchError("sample " + std::to_string(i) + ": context of " +
                             std::to_string(contexts[i].size()) + " tokens exceeds cap " +
                             std::to_string(cap));
        }
        if (contexts[i].empty()) {
            throw BatchError("sample " + std::to_string(i) + ": empty context");
        }
        if (stage.stage == "continual" && contexts[i].size() < 2) {
            throw BatchError("sample " + std::to_string(i) + ": too short to split");
        }
    }

    const uint64_t data_seed =
        mix_seed(st.seed ^ stage.seed, stage_label(stage.stage), static_cast<uint64_t>(st.step));
    const int bpe = static_cast<int>((corpus.size() + stage.batch_size - 1) /
                                     static_cast<size_t>(stage.batch_size));

    std::vector<std::vector<int>> schedule;
    for (int local = 0; local < stage.steps; ++local) {
        const int epoch = local / bpe;
        const int pos = local % bpe;
        if (pos == 0) {
            schedule = batchify(corpus.size(), stage.batch_size,
                                mix_seed(data_seed, kEpochStream, static_cast<uint64_t>(epoch)));
        }

        TokenBatch batch;
        for (int idx : schedule[static_cast<size_t>(pos)]) {
            batch.contexts.push_back(&contexts[static_cast<size_t>(idx)]);
            batch.samples.push_back(&corpus.samples[static_cast<size_t>(idx)]);
        }

        const double lr =
            lr_schedule(stage.lr, local, stage.warmup_steps, stage.steps, stage.min_lr_ratio);
        float loss = 0.0f;
        try {
            if (stage.stage == "restoration") {
                loss = restoration_step(st, batch, lr);
            } else if (stage.stage == "continual") {
                loss = continual_step(st, batch, lr, static_cast<uint64_t>(st.step));
            } else {
                loss = instruction_step(st, batch, lr);
            }
        } catch (const BatchError& e) {
            throw BatchError("step " + std::to_string(st.step) + ": " + e.what());
        }
        st.loss_history.push_back(loss);
        st.step += 1;
        if (callback && !callback(st, local + 1)) break;
    }

    if (!st.stage_provenance.empty()) st.stage_provenance += ";";
    st.stage_provenance += stage.stage;
}

float restoration_loss(TrainState& st, const std::vector<std::vector<int>>& contexts,
                       const Tensor& override_embedding) {
    if (contexts.empty()) throw BatchError("restoration_loss: empty corpus");
    float total = 0.0f;
    for (const auto& ctx : contexts) {
        Tensor e = override_embedding;
        if (!e.defined()) e = compress_for_training(st, ctx, context_cap(st, nullptr));
        auto out = decoder_span_loss(st, e, Tokenizer::restore_id(), ctx, 1);
        total += out.loss.item();
    }
    return total / static_cast<float>(contexts.size());
}

// ------------------------------------------------------------------
// persistence

namespace {

std::string encode_decoder_config(const std::string& prefix, const DecoderConfig& cfg) {
    std::ostringstream os;
    os << prefix << ".d_model = " << cfg.d_model << '\n';
    os << prefix << ".n_layers = " << cfg.n_layers << '\n';
    os << prefix << ".n_heads = " << cfg.n_heads << '\n';
    os << prefix << ".d_ff = " << cfg.d_ff << '\n';
    os << prefix << ".max_seq_len = " << cfg.max_seq_len << '\n';
    os.precision(17);
    os << prefix << ".rope_base = " << cfg.rope_base << '\n';
    return os.str();
}

DecoderConfig decode_decoder_config(const std::string& text, const std::string& prefix,
                                    int vocab) {
    DecoderConfig cfg;
    cfg.d_model = std::stoi(config_get(text, prefix + ".d_model"));
    cfg.n_layers = std::stoi(config_get(text, prefix + ".n_layers"));
    cfg.n_heads = std::stoi(config_get(text, prefix + ".n_heads"));
    cfg.d_ff = std::stoi(config_get(text, prefix + ".d_ff"));
    cfg.max_seq_len = std::stoi(config_get(text, prefix + ".max_seq_len"));
    cfg.rope_base = std::stod(config_get(text, prefix + ".rope_base"));
    cfg.vocab_size = vocab;
    return cfg;
}

} // namespace

void save_checkpoint(const TrainState& st, const std::string& path) {
    CheckpointData data;
    std::ostringstream cfg;
    cfg << "format = trainstate\n";
    cfg << "seed = " << st.seed << '\n';
    cfg << "step = " << st.step << '\n';
    cfg << "n_max_memory = " << st.tokenizer.n_max_memory() << '\n';
    cfg << "n_memory = " << st.comp.n_memory << '\n';
    cfg << "l_max = " << st.comp.l_max << '\n';
    cfg << "d_proj = " << st.d_proj << '\n';
    cfg << encode_decoder_config("pi_s", st.pi_s_cfg);
    cfg << encode_decoder_config("pi_l", st.pi_l_cfg);
    cfg << "stage_provenance = " << st.stage_provenance << '\n';
    cfg << "rng = " << st.rng.serialize() << '\n';
    cfg << "opt.step_count = " << st.opt.step_count() << '\n';
    cfg.precision(17);
    cfg << "opt.lr = " << st.opt.config().lr << '\n';
    cfg << "opt.beta1 = " << st.opt.config().beta1 << '\n';
    cfg << "opt.beta2 = " << st.opt.config().beta2 << '\n';
    cfg << "opt.eps = " << st.opt.config().eps << '\n';
    cfg << "opt.weight_decay = " << st.opt.config().weight_decay << '\n';
    data.config_text = cfg.str();

    for (const auto& [name, p] : st.pi_s.named_parameters("pi_s")) data.tensors.emplace_back(name, p);
    for (const auto& [name, p] : st.phi.named_parameters("phi")) data.tensors.emplace_back(name, p);
    for (const auto& [name, p] : st.pi_l.named_parameters("pi_l")) data.tensors.emplace_back(name, p);
    for (const auto& e : st.opt.entries()) {
        data.tensors.emplace_back("opt.m." + e.name, e.m);
        data.tensors.emplace_back("opt.v." + e.name, e.v);
    }
    if (!st.loss_history.empty()) {
        data.tensors.emplace_back(
            "train.loss_history",
            Tensor::from_data({static_cast<int>(st.loss_history.size())},
                              std::vector<float>(st.loss_history.begin(), st.loss_history.end())));
    }
    write_checkpoint_file(path, data);
}

TrainState load_checkpoint(const std::string& path) {
    const CheckpointData data = read_checkpoint_file(path);
    const std::string& cfg = data.config_text;
    if (config_get(cfg, "format") != "trainstate") {
        throw CheckpointError("checkpoint does not hold a train state");
    }

    ModelSpec spec;
    spec.n_max_memory = std::stoi(config_get(cfg, "n_max_memory"));
    spec.pi_s_cfg = decode_decoder_config(cfg, "pi_s", 0);
    spec.pi_l_cfg = decode_decoder_config(cfg, "pi_l", 0);
    spec.d_proj = std::stoi(config_get(cfg, "d_proj"));
    spec.comp.n_memory = std::stoi(config_get(cfg, "n_memory"));
    spec.comp.l_max = std::stoi(config_get(cfg, "l_max"));

    TrainState st = init_train_state(spec, std::stoull(config_get(cfg, "seed")));
    st.step = std::stoll(config_get(cfg, "step"));
    st.stage_provenance = config_get(cfg, "stage_provenance");
    st.rng = Rng::deserialize(config_get(cfg, "rng"));
    st.opt.set_step_count(std::stoll(config_get(cfg, "opt.step_count")));
    st.opt.config().lr = std::stod(config_get(cfg, "opt.lr"));
    st.opt.config().beta1 = std::stod(config_get(cfg, "opt.beta1"));
    st.opt.config().beta2 = std::stod(config_get(cfg, "opt.beta2"));
    st.opt.config().eps = std::stod(config_get(cfg, "opt.eps"));
    st.opt.config().weight_decay = std::stod(config_get(cfg, "opt.weight_decay"));

    std::map<std::string, Tensor> by_name;
    for (const auto& [name, t] : data.tensors) by_name.emplace(name, t);

    auto restore_into = [&](const std::string& name, Tensor dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint missing tensor '" + name + "'");
        if (it->second.shape() != dst.shape()) {
            throw CheckpointError("tensor '" + name + "' has shape " + it->second.shape_str() +
                                  ", expected " + dst.shape_str());
        }
        auto src = it->second.data();
        auto out = dst.data();
        std::copy(src.begin(), src.end(), out.begin());
    };

    for (auto& [name, p] : st.pi_s.named_parameters("pi_s")) restore_into(name, p);
    for (auto& [name, p] : st.phi.named_parameters("phi")) restore_into(name, p);
    for (auto& [name, p] : st.pi_l.named_parameters("pi_l")) restore_into(name, p);
    for (auto& e : st.opt.entries()) {
        restore_into("opt.m." + e.name, e.m);
        restore_into("opt.v." + e.name, e.v);
    }
    if (auto it = by_name.find("train.loss_history"); it != by_name.end()) {
        auto v = it->second.data();
        st.loss_history.assign(v.begin(), v.end());
    }
    return st;
}

} // namespace squidlet
