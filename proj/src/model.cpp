#include "model.hpp"

#include <cmath>

#include "errors.hpp"
#include "kernels.hpp"

namespace squidlet {

using FC = kernels::flops::Class;
using FScope = kernels::flops::Scope;

void DecoderConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0) {
        throw ConfigError("decoder config: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("decoder config: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (head_dim() % 2 != 0) {
        throw ConfigError("decoder config: head dim must be even for rotary positions");
    }
    if (vocab_size <= 0) throw ConfigError("decoder config: vocab_size must be set");
    if (max_seq_len < 1) throw ConfigError("decoder config: max_seq_len must be >= 1");
}

template <class S>
DecoderT<S> DecoderT<S>::init(const DecoderConfig& cfg, Rng& rng) {
    cfg.validate();
    DecoderT model;
    model.cfg = cfg;
    const double base_std = 0.02;
    // residual-output projections scaled down with depth
    const double out_std = base_std / std::sqrt(2.0 * cfg.n_layers);

    model.tok_embed = TensorT<S>::randn({cfg.vocab_size, cfg.d_model}, rng, base_std, true);
    model.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& layer : model.layers) {
        layer.attn_gain = TensorT<S>::full({cfg.d_model}, S(1));
        layer.attn_gain.set_requires_grad(true);
        layer.wq = TensorT<S>::randn({cfg.d_model, cfg.d_model}, rng, base_std, true);
        layer.wk = TensorT<S>::randn({cfg.d_model, cfg.d_model}, rng, base_std, true);
        layer.wv = TensorT<S>::randn({cfg.d_model, cfg.d_model}, rng, base_std, true);
        layer.wo = TensorT<S>::randn({cfg.d_model, cfg.d_model}, rng, out_std, true);
        layer.ffn_gain = TensorT<S>::full({cfg.d_model}, S(1));
        layer.ffn_gain.set_requires_grad(true);
        layer.w_gate = TensorT<S>::randn({cfg.d_model, cfg.d_ff}, rng, base_std, true);
        layer.w_up = TensorT<S>::randn({cfg.d_model, cfg.d_ff}, rng, base_std, true);
        layer.w_down = TensorT<S>::randn({cfg.d_ff, cfg.d_model}, rng, out_std, true);
    }
    model.final_gain = TensorT<S>::full({cfg.d_model}, S(1));
    model.final_gain.set_requires_grad(true);
    return model;
}

template <class S>
TensorT<S> DecoderT<S>::assemble_input(const TensorT<S>& prefix, const std::vector<int>& ids) const {
    TensorT<S> tok_rows;
    if (!ids.empty()) {
        for (int id : ids) {
            if (id < 0 || id >= cfg.vocab_size) {
                throw IndexError("forward: token id " + std::to_string(id) +
                                 " outside vocab of " + std::to_string(cfg.vocab_size));
            }
        }
        tok_rows = embedding_rows(tok_embed, ids);
    }
    if (!prefix.defined()) {
        if (!tok_rows.defined()) throw UsageError("forward: empty input");
        return tok_rows;
    }
    if (prefix.rank() != 2 || prefix.dim(1) != cfg.d_model) {
        throw ShapeError("forward: prefix " + prefix.shape_str() + " does not match width " +
                         std::to_string(cfg.d_model));
    }
    if (!tok_rows.defined()) return prefix;
    return concat_rows(prefix, tok_rows);
}

template <class S>
TensorT<S> DecoderT<S>::run_blocks(const TensorT<S>& x0, KvCacheT<S>* cache) const {
    const int t = x0.dim(0);
    const int hd = cfg.head_dim();
    if (t > cfg.max_seq_len) {
        throw SequenceLengthError("forward: sequence of " + std::to_string(t) +
                                  " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    TensorT<S> x = x0;
    for (size_t li = 0; li < layers.size(); ++li) {
        const auto& layer = layers[li];
        auto xn = rms_norm(x, layer.attn_gain);
        TensorT<S> q, k, v;
        {
            FScope scope(FC::projection);
            q = matmul(xn, layer.wq);
            k = matmul(xn, layer.wk);
            v = matmul(xn, layer.wv);
        }
        q = rope(q, cfg.n_heads, 0, cfg.rope_base);
        k = rope(k, cfg.n_heads, 0, cfg.rope_base);
        if (cache != nullptr) {
            auto kv = k.data();
            auto vv = v.data();
            std::copy_n(kv.data(), kv.size(), cache->k_layers[li].data());
            std::copy_n(vv.data(), vv.size(), cache->v_layers[li].data());
        }

        std::vector<TensorT<S>> head_outs;
        head_outs.reserve(static_cast<size_t>(cfg.n_heads));
        for (int h = 0; h < cfg.n_heads; ++h) {
            auto qh = slice_cols(q, h * hd, hd);
            auto kh = slice_cols(k, h * hd, hd);
            auto vh = slice_cols(v, h * hd, hd);
            TensorT<S> scores;
            {
                FScope scope(FC::attn_score);
                scores = matmul_nt(qh, kh);
            }
            auto att = causal_softmax_rows(scale(scores, inv_sqrt_hd));
            {
                FScope scope(FC::attn_value);
                head_outs.push_back(matmul(att, vh));
            }
        }
        TensorT<S> attn_out;
        {
            FScope scope(FC::projection);
            attn_out = matmul(concat_cols(head_outs), layer.wo);
        }
        x = add(x, attn_out);

        auto fn = rms_norm(x, layer.ffn_gain);
        TensorT<S> ff;
        {
            FScope scope(FC::feed_forward);
            auto gate = silu(matmul(fn, layer.w_gate));
            auto up = matmul(fn, layer.w_up);
            ff = matmul(mul(gate, up), layer.w_down);
        }
        x = add(x, ff);
    }
    if (cache != nullptr) cache->length = t;
    return rms_norm(x, final_gain);
}

template <class S>
TensorT<S> DecoderT<S>::forward_hidden(const std::vector<int>& ids) const {
    return forward_hidden(TensorT<S>{}, ids);
}

template <class S>
TensorT<S> DecoderT<S>::forward_hidden(const TensorT<S>& prefix, const std::vector<int>& ids) const {
    return run_blocks(assemble_input(prefix, ids), nullptr);
}

template <class S>
TensorT<S> DecoderT<S>::forward_logits(const TensorT<S>& prefix, const std::vector<int>& ids) const {
    auto h = forward_hidden(prefix, ids);
    FScope scope(FC::lm_head);
    return matmul_nt(h, tok_embed);
}

template <class S>
void KvCacheT<S>::init(const DecoderConfig& cfg, int cap) {
    capacity = cap;
    length = 0;
    const size_t layer_size = static_cast<size_t>(cap) * cfg.d_model;
    k_layers.assign(static_cast<size_t>(cfg.n_layers), std::vector<S>(layer_size));
    v_layers.assign(static_cast<size_t>(cfg.n_layers), std::vector<S>(layer_size));
    x.assign(static_cast<size_t>(cfg.d_model), S(0));
    xn.assign(static_cast<size_t>(cfg.d_model), S(0));
    q.assign(static_cast<size_t>(cfg.d_model), S(0));
    k.assign(static_cast<size_t>(cfg.d_model), S(0));
    v.assign(static_cast<size_t>(cfg.d_model), S(0));
    att.assign(static_cast<size_t>(cap), S(0));
    att_out.assign(static_cast<size_t>(cfg.d_model), S(0));
    ff_gate.assign(static_cast<size_t>(cfg.d_ff), S(0));
    ff_up.assign(static_cast<size_t>(cfg.d_ff), S(0));
    ff_mul.assign(static_cast<size_t>(cfg.d_ff), S(0));
    ff_down.assign(static_cast<size_t>(cfg.d_model), S(0));
}

template <class S>
std::vector<S> DecoderT<S>::prefill(const TensorT<S>& prefix, const std::vector<int>& ids,
                                    KvCacheT<S>& cache) const {
    auto h = run_blocks(assemble_input(prefix, ids), &cache);
    auto last = slice_rows(h, h.dim(0) - 1, 1);
    TensorT<S> logits;
    {
        FScope scope(FC::lm_head);
        logits = matmul_nt(last, tok_embed);
    }
    auto lv = logits.data();
    return {lv.begin(), lv.end()};
}

template <class S>
std::vector<S> DecoderT<S>::step(KvCacheT<S>& cache, int token_id) const {
    const int d = cfg.d_model;
    const int hd = cfg.head_dim();
    const int pos = cache.length;
    if (pos >= cfg.max_seq_len || pos >= cache.capacity) {
        throw SequenceLengthError("step: context window exhausted at position " +
                                  std::to_string(pos));
    }
    if (token_id < 0 || token_id >= cfg.vocab_size) {
        throw IndexError("step: token id " + std::to_string(token_id) + " outside vocab");
    }

    auto ev = tok_embed.data();
    std::copy_n(ev.data() + static_cast<int64_t>(token_id) * d, d, cache.x.data());

    const S eps = static_cast<S>(kRmsNormEps);
    for (size_t li = 0; li < layers.size(); ++li) {
        const auto& layer = layers[li];
        kernels::rms_norm_rows<S>(cache.x.data(), layer.attn_gain.data().data(), cache.xn.data(),
                               1, d, eps, nullptr);
        {
            FScope scope(FC::projection);
            kernels::matmul_nn(cache.xn.data(), layer.wq.data().data(), cache.q.data(), 1, d, d);
            kernels::matmul_nn(cache.xn.data(), layer.wk.data().data(), cache.k.data(), 1, d, d);
            kernels::matmul_nn(cache.xn.data(), layer.wv.data().data(), cache.v.data(), 1, d, d);
        }
        kernels::rope_rows(cache.q.data(), cache.q.data(), 1, cfg.n_heads, hd, pos, cfg.rope_base);
        kernels::rope_rows(cache.k.data(), cache.k.data(), 1, cfg.n_heads, hd, pos, cfg.rope_base);
        std::copy_n(cache.k.data(), d, cache.k_layers[li].data() + static_cast<int64_t>(pos) * d);
        std::copy_n(cache.v.data(), d, cache.v_layers[li].data() + static_cast<int64_t>(pos) * d);

        kernels::attention_step(cache.q.data(), cache.k_layers[li].data(),
                                cache.v_layers[li].data(), pos + 1, cfg.n_heads, hd,
                                cache.att.data(), cache.att_out.data());
        {
            FScope scope(FC::projection);
            kernels::matmul_nn(cache.att_out.data(), layer.wo.data().data(), cache.xn.data(),
                               1, d, d);
        }
        kernels::add_vec(cache.x.data(), cache.xn.data(), cache.x.data(), d);

        kernels::rms_norm_rows<S>(cache.x.data(), layer.ffn_gain.data().data(), cache.xn.data(),
                               1, d, eps, nullptr);
        {
            FScope scope(FC::feed_forward);
            kernels::matmul_nn(cache.xn.data(), layer.w_gate.data().data(), cache.ff_gate.data(),
                               1, d, cfg.d_ff);
            kernels::matmul_nn(cache.xn.data(), layer.w_up.data().data(), cache.ff_up.data(),
                               1, d, cfg.d_ff);
        }
        kernels::silu_fwd(cache.ff_gate.data(), cache.ff_gate.data(), cfg.d_ff);
        kernels::mul_vec(cache.ff_gate.data(), cache.ff_up.data(), cache.ff_mul.data(), cfg.d_ff);
        {
            FScope scope(FC::feed_forward);
            kernels::matmul_nn(cache.ff_mul.data(), layer.w_down.data().data(),
                               cache.ff_down.data(), 1, cfg.d_ff, d);
        }
        kernels::add_vec(cache.x.data(), cache.ff_down.data(), cache.x.data(), d);
    }
    kernels::rms_norm_rows<S>(cache.x.data(), final_gain.data().data(), cache.xn.data(), 1, d, eps,
                           nullptr);
    std::vector<S> logits(static_cast<size_t>(cfg.vocab_size));
    {
        FScope scope(FC::lm_head);
        kernels::matmul_nt(cache.xn.data(), tok_embed.data().data(), logits.data(), 1, d,
                           cfg.vocab_size);
    }
    if (!kernels::all_finite(logits.data(), cfg.vocab_size)) {
        throw NumericError("step: non-finite logits");
    }
    cache.length = pos + 1;
    return logits;
}

template <class S>
std::vector<std::pair<std::string, TensorT<S>>> DecoderT<S>::named_parameters(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, TensorT<S>>> out;
    out.emplace_back(prefix + ".tok_embed", tok_embed);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string lp = prefix + ".layers." + std::to_string(i);
        out.emplace_back(lp + ".attn_gain", layers[i].attn_gain);
        out.emplace_back(lp + ".wq", layers[i].wq);
        out.emplace_back(lp + ".wk", layers[i].wk);
        out.emplace_back(lp + ".wv", layers[i].wv);
        out.emplace_back(lp + ".wo", layers[i].wo);
        out.emplace_back(lp + ".ffn_gain", layers[i].ffn_gain);
        out.emplace_back(lp + ".w_gate", layers[i].w_gate);
        out.emplace_back(lp + ".w_up", layers[i].w_up);
        out.emplace_back(lp + ".w_down", layers[i].w_down);
    }
    out.emplace_back(prefix + ".final_gain", final_gain);
    return out;
}

template <class S>
int64_t DecoderT<S>::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_parameters("m")) n += t.numel();
    return n;
}

// ------------------------------------------------------------------
// generation

namespace {

template <class S>
int select_token(const std::vector<S>& logits, const GenerateOptions& opts, Rng& rng) {
    if (opts.greedy) {
        int best = 0;
        for (size_t j = 1; j < logits.size(); ++j) {
            if (logits[j] > logits[best]) best = static_cast<int>(j);
        }
        return best;
    }
    if (opts.temperature <= 0.0) throw UsageError("generate: temperature must be positive");
    // softmax over logits / temperature, then inverse-CDF sample
    const double t = opts.temperature;
    double maxv = static_cast<double>(logits[0]) / t;
    for (size_t j = 1; j < logits.size(); ++j) {
        maxv = std::max(maxv, static_cast<double>(logits[j]) / t);
    }
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(static_cast<double>(logits[j]) / t - maxv);
        sum += p[j];
    }
    const double r = rng.uniform() * sum;
    double c = 0.0;
    for (size_t j = 0; j < p.size(); ++j) {
        c += p[j];
        if (r < c) return static_cast<int>(j);
    }
    return static_cast<int>(p.size()) - 1;
}

} // namespace

template <class S>
std::vector<int> generate(const DecoderT<S>& model, const TensorT<S>& prefix,
                          const std::vector<int>& prompt, const GenerateOptions& opts) {
    if (opts.max_new < 0) throw UsageError("generate: max_new must be >= 0");
    if (opts.max_new == 0) return {};
    const int prefill_len = (prefix.defined() ? prefix.dim(0) : 0) + static_cast<int>(prompt.size());
    if (prefill_len < 1) throw UsageError("generate: empty prompt and prefix");
    if (prefill_len > model.cfg.max_seq_len) {
        throw SequenceLengthError("generate: prompt of " + std::to_string(prefill_len) +
                                  " exceeds max_seq_len " +
                                  std::to_string(model.cfg.max_seq_len));
    }

    Rng rng(opts.seed);
    KvCacheT<S> cache;
    const int cap = std::min(model.cfg.max_seq_len, prefill_len + opts.max_new);
    cache.init(model.cfg, cap);

    auto logits = model.prefill(prefix, prompt, cache);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(opts.max_new));
    for (int g = 0; g < opts.max_new; ++g) {
        const int tok = select_token(logits, opts, rng);
        if (opts.stop_at_eos && tok == opts.eos_id) break;
        out.push_back(tok);
        if (g + 1 == opts.max_new) break;
        if (cache.length >= model.cfg.max_seq_len) {
            throw SequenceLengthError("generate: context window exhausted at " +
                                      std::to_string(cache.length) + " tokens");
        }
        logits = model.step(cache, tok);
    }
    return out;
}

std::vector<std::vector<bool>> causal_mask(int t) {
    if (t < 1) throw ShapeError("causal_mask: length must be >= 1");
    std::vector<std::vector<bool>> mask(static_cast<size_t>(t),
                                        std::vector<bool>(static_cast<size_t>(t), false));
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j <= i; ++j) mask[static_cast<size_t>(i)][static_cast<size_t>(j)] = true;
    }
    return mask;
}

// ------------------------------------------------------------------
// explicit instantiations

#define SQUIDLET_INSTANTIATE_MODEL(S)                                                         \
    template struct DecoderT<S>;                                                              \
    template struct KvCacheT<S>;                                                              \
    template std::vector<int> generate<S>(const DecoderT<S>&, const TensorT<S>&,              \
                                          const std::vector<int>&, const GenerateOptions&);

SQUIDLET_INSTANTIATE_MODEL(float)
SQUIDLET_INSTANTIATE_MODEL(double)

#undef SQUIDLET_INSTANTIATE_MODEL

} // namespace squidlet
