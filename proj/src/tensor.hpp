#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace squidlet {

// Dense row-major tensor with reverse-mode autodiff. Value type with a
// shared payload: copies alias the same storage, which is what ties
// gradient accumulation to parameter identity. Instantiated for float
// (training) and double (gradient-check shadow mode).
template <class S>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorT full(std::vector<int> shape, S value);
    static TensorT from_data(std::vector<int> shape, std::vector<S> values,
                             bool requires_grad = false);
    static TensorT randn(std::vector<int> shape, Rng& rng, double stddev,
                         bool requires_grad = false);
    static TensorT scalar(S value);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    int dim(int i) const;
    int64_t numel() const;
    // rank-2 accessors; a rank-1 tensor reads as [1 x n]
    int rows() const;
    int cols() const;
    std::string shape_str() const;

    std::span<S> data();
    std::span<const S> data() const;
    S item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<S> grad();
    std::span<const S> grad() const;
    void ensure_grad(); // allocate zeros if absent
    void zero_grad();   // zero in place if present

    // stable identity for tape bookkeeping
    const void* id() const { return impl_.get(); }

    // deep copy (fresh storage, grad not copied)
    TensorT clone() const;

private:
    struct Impl {
        std::vector<int> shape;
        std::vector<S> data;
        std::vector<S> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;

    explicit TensorT(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    Impl& ref() const;
};

using Tensor = TensorT<float>;

// Reverse-mode tape. Construction makes it the active tape for this thread
// (nesting allowed); ops record themselves when any input requires grad.
// A tape and everything recorded on it belong to a single thread.
template <class S>
class TapeT {
public:
    TapeT();
    ~TapeT();
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    static TapeT* active();

    void record(const char* name, std::vector<TensorT<S>> inputs, TensorT<S> output,
                std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = seed and propagates to every reachable
    // requires-grad tensor, accumulating into existing grads.
    void backward(const TensorT<S>& loss, S seed = S(1));

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        const char* name;
        std::vector<TensorT<S>> inputs;
        TensorT<S> output;
        std::function<void()> fn;
    };
    std::vector<Node> nodes_;
    TapeT* prev_ = nullptr;

    static inline thread_local TapeT* active_ = nullptr;
};

using Tape = TapeT<float>;

// ------------------------------------------------------------------
// Differentiable ops. Forward results are checked for non-finite values.

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b);

// a [m x k] times b^T with b stored [n x k] (tied LM head)
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

// broadcast row bias: x [n x d] + b [d]
template <class S>
TensorT<S> add_bias(const TensorT<S>& x, const TensorT<S>& b);

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> scale(const TensorT<S>& x, double s);

template <class S>
TensorT<S> silu(const TensorT<S>& x);

template <class S>
TensorT<S> rms_norm(const TensorT<S>& x, const TensorT<S>& gain);

template <class S>
TensorT<S> softmax_rows(const TensorT<S>& x);

// square score matrix; row i normalized over columns 0..i, zeros above
template <class S>
TensorT<S> causal_softmax_rows(const TensorT<S>& x);

template <class S>
TensorT<S> rope(const TensorT<S>& x, int n_heads, int start_pos, double base);

template <class S>
TensorT<S> transpose(const TensorT<S>& x);

template <class S>
TensorT<S> embedding_rows(const TensorT<S>& table, const std::vector<int>& ids);

template <class S>
TensorT<S> slice_rows(const TensorT<S>& x, int start, int count);

template <class S>
TensorT<S> slice_cols(const TensorT<S>& x, int start, int count);

template <class S>
TensorT<S> concat_rows(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts);

template <class S>
TensorT<S> sum(const TensorT<S>& x);

// Mean NLL over masked-in rows. mask[i] != 0 selects row i; at least one
// row must be selected and every selected target must be < vocab.
template <class S>
TensorT<S> cross_entropy_loss(const TensorT<S>& logits, const std::vector<int>& targets,
                              const std::vector<uint8_t>& mask);

constexpr double kRmsNormEps = 1e-6;

} // namespace squidlet
