#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "compression.hpp"
#include "data.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "tokenizer.hpp"

namespace squidlet {

// Three-stage curriculum: restoration (rebuild the context from its
// compressed embedding), continual (generate the second half from the
// compressed first half), instruction (answer a query against the
// compressed context).

struct StageConfig {
    std::string stage = "restoration"; // restoration | continual | instruction
    int steps = 200;
    int batch_size = 4;
    int max_context_tokens = 0; // 0 = compression cap
    double lr = 3e-3;
    int warmup_steps = 20;
    double min_lr_ratio = 0.1;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    bool train_pi_s = true;
    bool train_phi = true;
    bool train_pi_l = true;
    uint64_t seed = 0; // mixed into the data-order stream

    void validate() const;
};

// Architecture hyperparameters fixed at state creation. vocab_size is
// derived from the tokenizer and must stay unset here.
struct ModelSpec {
    int n_max_memory = 64;
    DecoderConfig pi_s_cfg{64, 4, 4, 256, 0, 1024, 10000.0};
    DecoderConfig pi_l_cfg{128, 6, 8, 512, 0, 1024, 10000.0};
    int d_proj = 0; // 0 = pi_l d_model
    CompressionConfig comp{};
};

struct TrainState {
    uint64_t seed = 0;
    Tokenizer tokenizer{64};
    DecoderConfig pi_s_cfg, pi_l_cfg;
    int d_proj = 0;
    Decoder pi_s, pi_l;
    Projector phi;
    CompressionConfig comp;
    AdamW opt;
    Rng rng;
    int64_t step = 0;
    std::vector<float> loss_history;
    std::string stage_provenance;
};

TrainState init_train_state(const ModelSpec& spec, uint64_t seed);

// Pre-tokenized batch views used by the per-stage step functions.
struct TokenBatch {
    std::vector<const std::vector<int>*> contexts; // encoded contexts
    std::vector<const Sample*> samples;            // instruction stage only
};

// One optimizer step each; returns the mean sample loss. Loss masks cover
// exactly the stated target span: restoration targets C then eos, continual
// targets C2 then eos, instruction targets R then eos.
float restoration_step(TrainState& st, const TokenBatch& batch, double lr);
float continual_step(TrainState& st, const TokenBatch& batch, double lr, uint64_t split_stream);
float instruction_step(TrainState& st, const TokenBatch& batch, double lr);

// Runs stage.steps more steps over the corpus with seeded epoch shuffles.
// The callback (when set) runs after every step; returning false stops the
// stage early. Frozen parameter groups stay bitwise untouched.
using TrainCallback = std::function<bool(const TrainState&, int steps_done)>;
void train(TrainState& st, const StageConfig& stage, const Corpus& corpus,
           const TrainCallback& callback = nullptr);

// Teacher-forced restoration loss over a corpus without touching any
// parameters; override_embedding (when defined) replaces E.
float restoration_loss(TrainState& st, const std::vector<std::vector<int>>& contexts,
                       const Tensor& override_embedding = {});

void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path);

} // namespace squidlet
