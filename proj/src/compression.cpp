#include "compression.hpp"

#include "errors.hpp"
#include "kernels.hpp"

namespace squidlet {

void CompressionConfig::validate(int n_max_memory) const {
    if (n_memory < 1 || n_memory > n_max_memory) {
        throw CapacityError("compression: n_memory " + std::to_string(n_memory) +
                            " outside [1, " + std::to_string(n_max_memory) + "]");
    }
    if (l_max < 1) throw ConfigError("compression: l_max must be >= 1");
}

Ratio compression_ratio(int64_t context_len, int64_t n_memory) {
    if (n_memory == 0) throw DivisionError("compression ratio: n must be >= 1");
    if (n_memory < 0 || context_len < 0) {
        throw ConfigError("compression ratio: negative operand");
    }
    int64_t a = context_len, b = n_memory;
    while (b != 0) {
        const int64_t t = a % b;
        a = b;
        b = t;
    }
    const int64_t g = a == 0 ? 1 : a;
    return Ratio{context_len / g, n_memory / g};
}

std::vector<int> augment_context(const std::vector<int>& context_ids, int n,
                                 const Tokenizer& tokenizer, int max_total_len) {
    if (context_ids.empty()) throw ContractError("augment_context: empty context");
    const int64_t total = static_cast<int64_t>(context_ids.size()) + n;
    if (total > max_total_len) {
        throw TruncationError("augment_context: context of " +
                              std::to_string(context_ids.size()) + " tokens plus " +
                              std::to_string(n) + " memory tokens exceeds cap " +
                              std::to_string(max_total_len));
    }
    std::vector<int> out = context_ids;
    const auto mem = tokenizer.memory_token_ids(n);
    out.insert(out.end(), mem.begin(), mem.end());
    return out;
}

template <class S>
ProjectorT<S> ProjectorT<S>::init(int d_in, int d_proj, int d_out, Rng& rng) {
    if (d_in < 1 || d_proj < 1 || d_out < 1) {
        throw ConfigError("projector: widths must be positive");
    }
    ProjectorT p;
    p.w1 = TensorT<S>::randn({d_in, d_proj}, rng, 0.02, true);
    p.b1 = TensorT<S>::zeros({d_proj}, true);
    p.w2 = TensorT<S>::randn({d_proj, d_out}, rng, 0.02, true);
    p.b2 = TensorT<S>::zeros({d_out}, true);
    return p;
}

template <class S>
TensorT<S> ProjectorT<S>::forward(const TensorT<S>& m) const {
    if (m.rank() != 2 || m.dim(1) != w1.dim(0)) {
        throw ShapeError("projector: input " + m.shape_str() + " does not match width " +
                         std::to_string(w1.dim(0)));
    }
    kernels::flops::Scope scope(kernels::flops::Class::projection);
    auto h = add_bias(matmul(m, w1), b1);
    if (activation == Activation::silu) h = silu(h);
    return add_bias(matmul(h, w2), b2);
}

template <class S>
std::vector<std::pair<std::string, TensorT<S>>> ProjectorT<S>::named_parameters(
    const std::string& prefix) const {
    return {{prefix + ".w1", w1}, {prefix + ".b1", b1}, {prefix + ".w2", w2}, {prefix + ".b2", b2}};
}

template <class S>
TensorT<S> encode_context(const DecoderT<S>& pi_s, const std::vector<int>& augmented, int n,
                          const Tokenizer& tokenizer) {
    if (n < 1) throw ContractError("encode_context: need at least one memory token");
    if (static_cast<int>(augmented.size()) <= n) {
        throw ContractError("encode_context: augmented sequence shorter than its memory tail");
    }
    const auto expected = tokenizer.memory_token_ids(n);
    const size_t tail = augmented.size() - static_cast<size_t>(n);
    for (int i = 0; i < n; ++i) {
        if (augmented[tail + static_cast<size_t>(i)] != expected[static_cast<size_t>(i)]) {
            throw ContractError("encode_context: position " + std::to_string(tail + i) +
                                " does not hold memory token " + std::to_string(i));
        }
    }
    auto z = pi_s.forward_hidden(augmented);
    return slice_rows(z, static_cast<int>(tail), n);
}

template <class S>
TensorT<S> project(const ProjectorT<S>& phi, const TensorT<S>& m) {
    return phi.forward(m);
}

template <class S>
TensorT<S> compress_context(const DecoderT<S>& pi_s, const ProjectorT<S>& phi,
                            const std::vector<int>& context_ids, const CompressionConfig& comp,
                            const Tokenizer& tokenizer) {
    if (static_cast<int>(context_ids.size()) > comp.l_max) {
        throw TruncationError("compress_context: context of " +
                              std::to_string(context_ids.size()) + " tokens exceeds l_max " +
                              std::to_string(comp.l_max));
    }
    const auto augmented =
        augment_context(context_ids, comp.n_memory, tokenizer, pi_s.cfg.max_seq_len);
    return project(phi, encode_context(pi_s, augmented, comp.n_memory, tokenizer));
}

#define SQUIDLET_INSTANTIATE_COMPRESSION(S)                                                       \
    template struct ProjectorT<S>;                                                                \
    template TensorT<S> encode_context<S>(const DecoderT<S>&, const std::vector<int>&, int,       \
                                          const Tokenizer&);                                      \
    template TensorT<S> project<S>(const ProjectorT<S>&, const TensorT<S>&);                      \
    template TensorT<S> compress_context<S>(const DecoderT<S>&, const ProjectorT<S>&,             \
                                            const std::vector<int>&, const CompressionConfig&,    \
                                            const Tokenizer&);

SQUIDLET_INSTANTIATE_COMPRESSION(float)
SQUIDLET_INSTANTIATE_COMPRESSION(double)

#undef SQUIDLET_INSTANTIATE_COMPRESSION

} // namespace squidlet
