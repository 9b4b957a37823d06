#include "kernels.hpp"

#include <cmath>

#include "threading.hpp"

namespace squidlet::kernels {

// ------------------------------------------------------------------
// flops

namespace flops {

namespace {
bool g_enabled = false;
Counts g_counts;
Class g_class = Class::other;
} // namespace

uint64_t Counts::total() const {
    uint64_t t = 0;
    for (uint64_t v : by_class) t += v;
    return t;
}

void enable(bool on) { g_enabled = on; }
bool enabled() { return g_enabled; }
void reset() { g_counts = Counts{}; }
const Counts& counts() { return g_counts; }

void add(Class c, uint64_t n) {
    if (g_enabled) g_counts.by_class[static_cast<int>(c)] += n;
}

Scope::Scope(Class c) : prev_(g_class) { g_class = c; }
Scope::~Scope() { g_class = prev_; }

Class current_class() { return g_class; }

} // namespace flops

namespace {

void count_matmul(int m, int k, int n) {
    flops::add(flops::current_class(),
               2ull * static_cast<uint64_t>(m) * static_cast<uint64_t>(k) *
                   static_cast<uint64_t>(n));
}

template <class S>
void matmul_nn_row(const S* a, const S* b, S* c, int i, int k, int n, bool accumulate) {
    S* crow = c + static_cast<int64_t>(i) * n;
    if (!accumulate) {
        for (int j = 0; j < n; ++j) crow[j] = S(0);
    }
    const S* arow = a + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
        const S av = arow[kk];
        const S* brow = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// Fixed-order dot product: eight independent lanes folded pairwise, then
// the scalar tail. The lane pattern vectorizes while keeping one
// deterministic reduction order shared by every caller.
template <class S>
S det_dot(const S* a, const S* b, int k) {
    S lanes[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
    int i = 0;
    for (; i + 8 <= k; i += 8) {
        for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    S acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; i < k; ++i) acc += a[i] * b[i];
    return acc;
}

template <class S>
void matmul_nt_row(const S* a, const S* b, S* c, int i, int k, int n, bool accumulate) {
    const S* arow = a + static_cast<int64_t>(i) * k;
    S* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const S acc = det_dot(arow, b + static_cast<int64_t>(j) * k, k);
        crow[j] = accumulate ? crow[j] + acc : acc;
    }
}

// c[i][j] = sum_kk a[kk][i] * b[kk][j]; a stored [k x m], b stored [k x n]
template <class S>
void matmul_tn_row(const S* a, const S* b, S* c, int i, int k, int m, int n, bool accumulate) {
    S* crow = c + static_cast<int64_t>(i) * n;
    if (!accumulate) {
        for (int j = 0; j < n; ++j) crow[j] = S(0);
    }
    for (int kk = 0; kk < k; ++kk) {
        const S av = a[static_cast<int64_t>(kk) * m + i];
        const S* brow = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <class S>
void softmax_row(const S* xrow, S* yrow, int len, int cols) {
    S maxv = xrow[0];
    for (int j = 1; j < len; ++j) {
        if (xrow[j] > maxv) maxv = xrow[j];
    }
    S sum = S(0);
    for (int j = 0; j < len; ++j) {
        const S e = std::exp(xrow[j] - maxv);
        yrow[j] = e;
        sum += e;
    }
    const S inv = S(1) / sum;
    for (int j = 0; j < len; ++j) yrow[j] *= inv;
    for (int j = len; j < cols; ++j) yrow[j] = S(0);
}

template <class S>
void rms_norm_row(const S* xrow, const S* gain, S* yrow, int cols, S eps, S* inv_out) {
    S ss = S(0);
    for (int j = 0; j < cols; ++j) ss += xrow[j] * xrow[j];
    const S inv = S(1) / std::sqrt(ss / static_cast<S>(cols) + eps);
    for (int j = 0; j < cols; ++j) yrow[j] = xrow[j] * inv * gain[j];
    if (inv_out != nullptr) *inv_out = inv;
}

template <class S>
void rope_row(const S* xrow, S* yrow, int n_heads, int head_dim, int pos, double base, int dir) {
    const int half = head_dim / 2;
    for (int h = 0; h < n_heads; ++h) {
        const S* xh = xrow + h * head_dim;
        S* yh = yrow + h * head_dim;
        for (int j = 0; j < half; ++j) {
            const double freq = std::pow(base, -2.0 * j / head_dim);
            const double angle = dir * pos * freq;
            const S c = static_cast<S>(std::cos(angle));
            const S s = static_cast<S>(std::sin(angle));
            const S x0 = xh[j];
            const S x1 = xh[j + half];
            yh[j] = x0 * c - x1 * s;
            yh[j + half] = x0 * s + x1 * c;
        }
    }
}

} // namespace

// ------------------------------------------------------------------
// matmul

template <class S>
void matmul_nn_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_nn_row(a, b, c, i, k, n, accumulate);
}

template <class S>
void matmul_nn_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < m; ++i) matmul_nn_row(a, b, c, i, k, n, accumulate);
}

template <class S>
void matmul_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    count_matmul(m, k, n);
    if (num_threads() > 1 && m > 1) {
        matmul_nn_omp(a, b, c, m, k, n, accumulate);
    } else {
        matmul_nn_ref(a, b, c, m, k, n, accumulate);
    }
}

template <class S>
void matmul_nt_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n, accumulate);
}

template <class S>
void matmul_nt_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n, accumulate);
}

template <class S>
void matmul_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    count_matmul(m, k, n);
    if (num_threads() > 1 && m > 1) {
        matmul_nt_omp(a, b, c, m, k, n, accumulate);
    } else {
        matmul_nt_ref(a, b, c, m, k, n, accumulate);
    }
}

template <class S>
void matmul_tn_ref(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, k, m, n, accumulate);
}

template <class S>
void matmul_tn_omp(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, k, m, n, accumulate);
}

template <class S>
void matmul_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    count_matmul(m, k, n);
    if (num_threads() > 1 && m > 1) {
        matmul_tn_omp(a, b, c, m, k, n, accumulate);
    } else {
        matmul_tn_ref(a, b, c, m, k, n, accumulate);
    }
}

// ------------------------------------------------------------------
// softmax / rms / rope

template <class S>
void softmax_rows_ref(const S* x, S* y, int rows, int cols, bool causal) {
    for (int i = 0; i < rows; ++i) {
        const int len = causal ? i + 1 : cols;
        softmax_row(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols, len, cols);
    }
}

template <class S>
void softmax_rows_omp(const S* x, S* y, int rows, int cols, bool causal) {
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < rows; ++i) {
        const int len = causal ? i + 1 : cols;
        softmax_row(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols, len, cols);
    }
}

template <class S>
void softmax_rows(const S* x, S* y, int rows, int cols, bool causal) {
    if (num_threads() > 1 && rows > 1) {
        softmax_rows_omp(x, y, rows, cols, causal);
    } else {
        softmax_rows_ref(x, y, rows, cols, causal);
    }
}

template <class S>
void rms_norm_rows_ref(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms) {
    for (int i = 0; i < rows; ++i) {
        rms_norm_row(x + static_cast<int64_t>(i) * cols, gain, y + static_cast<int64_t>(i) * cols,
                     cols, eps, inv_rms ? inv_rms + i : nullptr);
    }
}

template <class S>
void rms_norm_rows_omp(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms) {
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < rows; ++i) {
        rms_norm_row(x + static_cast<int64_t>(i) * cols, gain, y + static_cast<int64_t>(i) * cols,
                     cols, eps, inv_rms ? inv_rms + i : nullptr);
    }
}

template <class S>
void rms_norm_rows(const S* x, const S* gain, S* y, int rows, int cols, S eps, S* inv_rms) {
    if (num_threads() > 1 && rows > 1) {
        rms_norm_rows_omp(x, gain, y, rows, cols, eps, inv_rms);
    } else {
        rms_norm_rows_ref(x, gain, y, rows, cols, eps, inv_rms);
    }
}

template <class S>
void rope_rows_ref(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos,
                   double base, int dir) {
    const int d = n_heads * head_dim;
    for (int i = 0; i < rows; ++i) {
        rope_row(x + static_cast<int64_t>(i) * d, y + static_cast<int64_t>(i) * d,
                 n_heads, head_dim, start_pos + i, base, dir);
    }
}

template <class S>
void rope_rows_omp(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos,
                   double base, int dir) {
    const int d = n_heads * head_dim;
    const int nt = num_threads();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int i = 0; i < rows; ++i) {
        rope_row(x + static_cast<int64_t>(i) * d, y + static_cast<int64_t>(i) * d,
                 n_heads, head_dim, start_pos + i, base, dir);
    }
}

template <class S>
void rope_rows(const S* x, S* y, int rows, int n_heads, int head_dim, int start_pos,
               double base, int dir) {
    if (num_threads() > 1 && rows > 1) {
        rope_rows_omp(x, y, rows, n_heads, head_dim, start_pos, base, dir);
    } else {
        rope_rows_ref(x, y, rows, n_heads, head_dim, start_pos, base, dir);
    }
}

// ------------------------------------------------------------------
// element-wise

template <class S>
void silu_fwd(const S* x, S* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        const S s = S(1) / (S(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

template <class S>
void add_vec(const S* a, const S* b, S* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class S>
void mul_vec(const S* a, const S* b, S* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class S>
void scale_vec(const S* x, S s, S* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] * s;
}

// ------------------------------------------------------------------
// cached-decode attention

template <class S>
void attention_step(const S* q, const S* k_cache, const S* v_cache, int c,
                    int n_heads, int head_dim, S* att_scratch, S* out) {
    const int d = n_heads * head_dim;
    // same rounding as the tensor path's scale(scores, 1/sqrt(hd))
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    flops::add(flops::Class::attn_score,
               2ull * static_cast<uint64_t>(c) * static_cast<uint64_t>(d));
    flops::add(flops::Class::attn_value,
               2ull * static_cast<uint64_t>(c) * static_cast<uint64_t>(d));
    for (int h = 0; h < n_heads; ++h) {
        const S* qh = q + h * head_dim;
        for (int j = 0; j < c; ++j) {
            const S* kh = k_cache + static_cast<int64_t>(j) * d + h * head_dim;
            att_scratch[j] = det_dot(qh, kh, head_dim) * inv_sqrt;
        }
        softmax_row(att_scratch, att_scratch, c, c);
        S* oh = out + h * head_dim;
        for (int t = 0; t < head_dim; ++t) oh[t] = S(0);
        for (int j = 0; j < c; ++j) {
            const S w = att_scratch[j];
            const S* vh = v_cache + static_cast<int64_t>(j) * d + h * head_dim;
            for (int t = 0; t < head_dim; ++t) oh[t] += w * vh[t];
        }
    }
}

bool all_finite(const float* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

bool all_finite(const double* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

// ------------------------------------------------------------------
// explicit instantiations

#define SQUIDLET_INSTANTIATE_KERNELS(S)                                                          \
    template void matmul_nn_ref<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_nn_omp<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_nn<S>(const S*, const S*, S*, int, int, int, bool);                     \
    template void matmul_nt_ref<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_nt_omp<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_nt<S>(const S*, const S*, S*, int, int, int, bool);                     \
    template void matmul_tn_ref<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_tn_omp<S>(const S*, const S*, S*, int, int, int, bool);                 \
    template void matmul_tn<S>(const S*, const S*, S*, int, int, int, bool);                     \
    template void softmax_rows_ref<S>(const S*, S*, int, int, bool);                             \
    template void softmax_rows_omp<S>(const S*, S*, int, int, bool);                             \
    template void softmax_rows<S>(const S*, S*, int, int, bool);                                 \
    template void rms_norm_rows_ref<S>(const S*, const S*, S*, int, int, S, S*);                 \
    template void rms_norm_rows_omp<S>(const S*, const S*, S*, int, int, S, S*);                 \
    template void rms_norm_rows<S>(const S*, const S*, S*, int, int, S, S*);                     \
    template void rope_rows_ref<S>(const S*, S*, int, int, int, int, double, int);               \
    template void rope_rows_omp<S>(const S*, S*, int, int, int, int, double, int);               \
    template void rope_rows<S>(const S*, S*, int, int, int, int, double, int);                   \
    template void silu_fwd<S>(const S*, S*, int64_t);                                            \
    template void add_vec<S>(const S*, const S*, S*, int64_t);                                   \
    template void mul_vec<S>(const S*, const S*, S*, int64_t);                                   \
    template void scale_vec<S>(const S*, S, S*, int64_t);                                        \
    template void attention_step<S>(const S*, const S*, const S*, int, int, int, S*, S*);

SQUIDLET_INSTANTIATE_KERNELS(float)
SQUIDLET_INSTANTIATE_KERNELS(double)

#undef SQUIDLET_INSTANTIATE_KERNELS

} // namespace squidlet::kernels
