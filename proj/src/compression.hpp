#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "tensor.hpp"
#include "tokenizer.hpp"

namespace squidlet {

// Context compression: append memory tokens, run the text encoder, keep the
// final hidden rows of the memory slots, and project them into the main
// decoder's embedding width.

struct CompressionConfig {
    int n_memory = 16;   // memory slots per context
    int l_max = 512;     // longest accepted context, in tokens
    void validate(int n_max_memory) const;
};

// exact ratio L / N
struct Ratio {
    int64_t num = 0;
    int64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Ratio compression_ratio(int64_t context_len, int64_t n_memory);

// (c_1..c_L, memory_0..memory_{n-1}); rejects overlength input outright.
std::vector<int> augment_context(const std::vector<int>& context_ids, int n,
                                 const Tokenizer& tokenizer, int max_total_len);

// Two-linear-layer MLP bridging d_s to d_l, applied row-wise.
template <class S>
struct ProjectorT {
    enum class Activation { silu, identity };

    TensorT<S> w1; // [d_s x d_proj]
    TensorT<S> b1; // [d_proj]
    TensorT<S> w2; // [d_proj x d_l]
    TensorT<S> b2; // [d_l]
    Activation activation = Activation::silu;

    static ProjectorT init(int d_in, int d_proj, int d_out, Rng& rng);

    TensorT<S> forward(const TensorT<S>& m) const;

    std::vector<std::pair<std::string, TensorT<S>>> named_parameters(
        const std::string& prefix) const;
};

using Projector = ProjectorT<float>;

// Memory-slot hidden states: the last n rows of the encoder output, [n x d_s].
// The augmented sequence must end with memory_0..memory_{n-1}.
template <class S>
TensorT<S> encode_context(const DecoderT<S>& pi_s, const std::vector<int>& augmented, int n,
                          const Tokenizer& tokenizer);

// E = projector(M), [n x d_l]
template <class S>
TensorT<S> project(const ProjectorT<S>& phi, const TensorT<S>& m);

// Full pipeline C -> E for a raw token context.
template <class S>
TensorT<S> compress_context(const DecoderT<S>& pi_s, const ProjectorT<S>& phi,
                            const std::vector<int>& context_ids, const CompressionConfig& comp,
                            const Tokenizer& tokenizer);

} // namespace squidlet
