#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace squidlet {

// Causal decoder configuration. Two instances of this architecture play
// the narrow text encoder and the wide main decoder.
struct DecoderConfig {
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 0;
    int max_seq_len = 1024;
    double rope_base = 10000.0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

template <class S>
struct KvCacheT;

// Pre-norm causal decoder: RMS norm, rotary positions, gated feed-forward,
// LM head tied to the embedding table.
template <class S>
struct DecoderT {
    DecoderConfig cfg;

    TensorT<S> tok_embed; // [vocab x d], doubles as the LM head
    struct Layer {
        TensorT<S> attn_gain;            // [d]
        TensorT<S> wq, wk, wv, wo;       // [d x d]
        TensorT<S> ffn_gain;             // [d]
        TensorT<S> w_gate, w_up;         // [d x d_ff]
        TensorT<S> w_down;               // [d_ff x d]
    };
    std::vector<Layer> layers;
    TensorT<S> final_gain; // [d]

    static DecoderT init(const DecoderConfig& cfg, Rng& rng);

    // Final-layer hidden states after the final norm, [T x d].
    TensorT<S> forward_hidden(const std::vector<int>& ids) const;

    // Soft prefix rows enter the first block directly; token rows go through
    // the embedding table. Rotary positions run contiguously over the whole
    // sequence. Either part may be absent (undefined prefix / empty ids).
    TensorT<S> forward_hidden(const TensorT<S>& prefix, const std::vector<int>& ids) const;

    // Logits for all positions, [(P+T) x vocab].
    TensorT<S> forward_logits(const TensorT<S>& prefix, const std::vector<int>& ids) const;

    // Prefill for generation: runs the blocks, fills the cache, and returns
    // logits of the last position only.
    std::vector<S> prefill(const TensorT<S>& prefix, const std::vector<int>& ids,
                           KvCacheT<S>& cache) const;

    // One cached decode step; returns logits for the next position.
    std::vector<S> step(KvCacheT<S>& cache, int token_id) const;

    std::vector<std::pair<std::string, TensorT<S>>> named_parameters(
        const std::string& prefix) const;
    int64_t parameter_count() const;

private:
    TensorT<S> run_blocks(const TensorT<S>& x0, KvCacheT<S>* cache) const;
    TensorT<S> assemble_input(const TensorT<S>& prefix, const std::vector<int>& ids) const;
};

using Decoder = DecoderT<float>;

template <class S>
struct KvCacheT {
    int capacity = 0;
    int length = 0;
    std::vector<std::vector<S>> k_layers, v_layers; // per layer [capacity x d]

    // scratch for the step path
    std::vector<S> x, xn, q, k, v, att, att_out, ff_gate, ff_up, ff_mul, ff_down;

    void init(const DecoderConfig& cfg, int cap);
};

using KvCache = KvCacheT<float>;

struct GenerateOptions {
    int max_new = 64;
    bool greedy = true;
    double temperature = 1.0;
    uint64_t seed = 0;
    bool stop_at_eos = true;
    int eos_id = 258;
};

// Autoregressive decode with a KV cache. Returns generated ids; an eos hit
// (when enabled) stops generation and is not included.
template <class S>
std::vector<int> generate(const DecoderT<S>& model, const TensorT<S>& prefix,
                          const std::vector<int>& prompt, const GenerateOptions& opts);

// boolean causal mask, entry (i, j) = j <= i
std::vector<std::vector<bool>> causal_mask(int t);

} // namespace squidlet
