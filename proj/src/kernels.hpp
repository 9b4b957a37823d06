#pragma once

#include <cstdint>

namespace squidlet::kernels {

// Dense kernels behind the tensor ops and the cached decode path.
//
// Every kernel comes in a serial reference version (*_ref) and an
// OpenMP version (*_omp) that splits rows across threads. The unsuffixed
// entry point dispatches on squidlet::num_threads(). Per output element
// the reduction order is identical in both versions, so they agree
// bitwise and runs are reproducible at any thread count.

// ------------------------------------------------------------------
// FLOP instrumentation. Each FLOP-bearing kernel adds 2*m*k*n (multiply
// + add) to a per-class counter when enabled. Single-threaded use only.
namespace flops {

enum class Class : int {
    projection = 0,  // q/k/v/o and projector linear maps
    attn_score,
    attn_value,
    feed_forward,
    lm_head,
    other,
    kCount
};

struct Counts {
    uint64_t by_class[static_cast<int>(Class::kCount)] = {};
    uint64_t total() const;
    uint64_t of(Class c) const { return by_class[static_cast<int>(c)]; }
};

void enable(bool on);
bool enabled();
void reset();
const Counts& counts();
void add(Class c, uint64_t n);

// Tags subsequent kernel calls with a class. Nestable.
class Scope {
public:
    explicit Scope(Class c);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

private:
    Class prev_;
};

Class current_class();

} // namespace flops

// ------------------------------------------------------------------
// Matrix multiplication. c [m x n], accumulate selects c += vs c =.
//   nn: a [m x k] * b [k x n]
//   nt: a [m x k] * b^T, b stored [n x k]
//   tn: a^T * b, a stored [k x m], result [m x n]   (a^T is [m x k])
template <class S>
void matmul_nn_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_nn_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false);

template <class S>
void matmul_nt_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_nt_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false);

template <class S>
void matmul_tn_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_tn_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate);
template <class S>
void matmul_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate = false);

// ------------------------------------------------------------------
// Row-wise softmax with per-row max subtraction. causal = false normalizes
// whole rows; causal = true expects a square matrix and normalizes row i
// over columns 0..i, writing zeros above the diagonal.
template <class S>
void softmax_rows_ref(const S* x, S* y, int rows, int cols, bool causal);
template <class S>
void softmax_rows_omp(const S* x, S* y, int rows, int cols, bool causal);
template <class S>
void softmax_rows(const S* x, S* y, int rows, int cols, bool causal = false);

// RMS norm per row: y = x / sqrt(mean(x^2) + eps) * gain.
// inv_rms (optional, length rows) receives the per-row scale for backward.
template <class S>
void rms_norm_rows_ref(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms);
template <class S>
void rms_norm_rows_omp(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms);
template <class S>
void rms_norm_rows(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms = nullptr);

// Rotary positions, half-split pairing per head: dims (j, j + hd/2) rotate
// by angle pos * base^(-2j/hd). dir = +1 forward, -1 transpose (backward).
template <class S>
void rope_rows_ref(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos, double base, int dir);
template <class S>
void rope_rows_omp(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos, double base, int dir);
template <class S>
void rope_rows(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos, double base, int dir = 1);

// Element-wise helpers (parallel over rows where it matters).
template <class S>
void silu_fwd(const S* x, S* y, int64_t n);
template <class S>
void add_vec(const S* a, const S* b, S* y, int64_t n);
template <class S>
void mul_vec(const S* a, const S* b, S* y, int64_t n);
template <class S>
void scale_vec(const S* x, S s, S* y, int64_t n);

// Fused single-row attention for the cached decode path.
// q: one row [n_heads * head_dim], k_cache/v_cache: [c x (n_heads*head_dim)].
// att: scratch [c]. out: [n_heads * head_dim]. Counts attn_score/attn_value
// FLOPs exactly like the per-head matmul formulation.
template <class S>
void attention_step(const S* q, const S* k_cache, const S* v_cache, int c,
                    int n_heads, int head_dim, S* att_scratch, S* out);

bool all_finite(const float* x, int64_t n);
bool all_finite(const double* x, int64_t n);

} // namespace squidlet::kernels
