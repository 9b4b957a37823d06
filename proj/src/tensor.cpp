#include "tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "errors.hpp"
#include "kernels.hpp"

namespace squidlet {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor shape dimensions must be positive");
        n *= d;
    }
    return n;
}

std::string shape_to_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

} // namespace

// ------------------------------------------------------------------
// TensorT

template <class S>
typename TensorT<S>::Impl& TensorT<S>::ref() const {
    if (!impl_) throw UsageError("operation on an undefined tensor");
    return *impl_;
}

template <class S>
TensorT<S> TensorT<S>::zeros(std::vector<int> shape, bool requires_grad) {
    auto impl = std::make_shared<Impl>();
    impl->data.assign(static_cast<size_t>(shape_numel(shape)), S(0));
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return TensorT(std::move(impl));
}

template <class S>
TensorT<S> TensorT<S>::full(std::vector<int> shape, S value) {
    auto t = zeros(std::move(shape));
    for (auto& v : t.impl_->data) v = value;
    return t;
}

template <class S>
TensorT<S> TensorT<S>::from_data(std::vector<int> shape, std::vector<S> values,
                                 bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw ShapeError("from_data: " + shape_to_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return TensorT(std::move(impl));
}

template <class S>
TensorT<S> TensorT<S>::randn(std::vector<int> shape, Rng& rng, double stddev,
                             bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl_->data) v = static_cast<S>(rng.gauss(0.0, stddev));
    return t;
}

template <class S>
TensorT<S> TensorT<S>::scalar(S value) {
    return from_data({1}, {value});
}

template <class S>
const std::vector<int>& TensorT<S>::shape() const {
    return ref().shape;
}

template <class S>
int TensorT<S>::rank() const {
    return static_cast<int>(ref().shape.size());
}

template <class S>
int TensorT<S>::dim(int i) const {
    return ref().shape.at(static_cast<size_t>(i));
}

template <class S>
int64_t TensorT<S>::numel() const {
    return static_cast<int64_t>(ref().data.size());
}

template <class S>
int TensorT<S>::rows() const {
    auto& sh = ref().shape;
    return sh.size() == 1 ? 1 : sh.at(0);
}

template <class S>
int TensorT<S>::cols() const {
    auto& sh = ref().shape;
    return sh.size() == 1 ? sh.at(0) : sh.at(1);
}

template <class S>
std::string TensorT<S>::shape_str() const {
    return shape_to_str(ref().shape);
}

template <class S>
std::span<S> TensorT<S>::data() {
    return {ref().data.data(), ref().data.size()};
}

template <class S>
std::span<const S> TensorT<S>::data() const {
    return {ref().data.data(), ref().data.size()};
}

template <class S>
S TensorT<S>::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str());
    return ref().data[0];
}

template <class S>
bool TensorT<S>::requires_grad() const {
    return ref().requires_grad;
}

template <class S>
void TensorT<S>::set_requires_grad(bool on) {
    ref().requires_grad = on;
}

template <class S>
bool TensorT<S>::has_grad() const {
    return !ref().grad.empty();
}

template <class S>
std::span<S> TensorT<S>::grad() {
    auto& im = ref();
    if (im.grad.empty()) throw UsageError("grad requested but never populated");
    return {im.grad.data(), im.grad.size()};
}

template <class S>
std::span<const S> TensorT<S>::grad() const {
    auto& im = ref();
    if (im.grad.empty()) throw UsageError("grad requested but never populated");
    return {im.grad.data(), im.grad.size()};
}

template <class S>
void TensorT<S>::ensure_grad() {
    auto& im = ref();
    if (im.grad.empty()) im.grad.assign(im.data.size(), S(0));
}

template <class S>
void TensorT<S>::zero_grad() {
    auto& im = ref();
    for (auto& g : im.grad) g = S(0);
}

template <class S>
TensorT<S> TensorT<S>::clone() const {
    auto& im = ref();
    auto copy = std::make_shared<Impl>();
    copy->shape = im.shape;
    copy->data = im.data;
    copy->requires_grad = im.requires_grad;
    return TensorT(std::move(copy));
}

// ------------------------------------------------------------------
// TapeT

template <class S>
TapeT<S>::TapeT() {
    prev_ = active_;
    active_ = this;
}

template <class S>
TapeT<S>::~TapeT() {
    active_ = prev_;
}

template <class S>
TapeT<S>* TapeT<S>::active() {
    return active_;
}

template <class S>
void TapeT<S>::record(const char* name, std::vector<TensorT<S>> inputs, TensorT<S> output,
                      std::function<void()> backward_fn) {
    nodes_.push_back(Node{name, std::move(inputs), std::move(output), std::move(backward_fn)});
}

template <class S>
void TapeT<S>::backward(const TensorT<S>& loss, S seed) {
    if (loss.numel() != 1) throw UsageError("backward requires a scalar loss");
    bool found = false;
    for (const auto& node : nodes_) {
        if (node.output.id() == loss.id()) {
            found = true;
            break;
        }
    }
    if (!found) throw UsageError("backward on a tensor not produced by this tape");

    TensorT<S> loss_mut = loss;
    loss_mut.ensure_grad();
    loss_mut.grad()[0] += seed;

    // Recording order is topological, so one reverse sweep visits every
    // node once; nodes whose output grad never materialized are off-path.
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output.has_grad()) it->fn();
    }
}

// ------------------------------------------------------------------
// op helpers

namespace {

template <class S>
bool should_record(std::initializer_list<const TensorT<S>*> inputs) {
    if (TapeT<S>::active() == nullptr) return false;
    for (const auto* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

template <class S>
void check_finite(const TensorT<S>& t, const char* op) {
    if (!kernels::all_finite(t.data().data(), t.numel())) {
        throw NumericError(std::string(op) + ": non-finite value in output");
    }
}

template <class S>
void require_rank2(const TensorT<S>& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
    }
}

} // namespace

// ------------------------------------------------------------------
// matmul family

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    auto c = TensorT<S>::zeros({m, n});
    kernels::matmul_nn(a.data().data(), b.data().data(), c.data().data(), m, k, n, false);
    check_finite(c, "matmul");

    if (should_record<S>({&a, &b})) {
        c.set_requires_grad(true);
        TensorT<S> at = a, bt = b, ct = c;
        TapeT<S>::active()->record("matmul", {a, b}, c, [at, bt, ct, m, k, n]() mutable {
            auto dy = ct.grad();
            if (at.requires_grad()) {
                at.ensure_grad();
                kernels::matmul_nt(dy.data(), bt.data().data(), at.grad().data(), m, n, k, true);
            }
            if (bt.requires_grad()) {
                bt.ensure_grad();
                kernels::matmul_tn(at.data().data(), dy.data(), bt.grad().data(), k, m, n, true);
            }
        });
    }
    return c;
}

template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (k != b.dim(1)) {
        throw ShapeError("matmul_nt: inner dimensions disagree: " + a.shape_str() + " vs " +
                         b.shape_str() + " transposed");
    }
    auto c = TensorT<S>::zeros({m, n});
    kernels::matmul_nt(a.data().data(), b.data().data(), c.data().data(), m, k, n, false);
    check_finite(c, "matmul_nt");

    if (should_record<S>({&a, &b})) {
        c.set_requires_grad(true);
        TensorT<S> at = a, bt = b, ct = c;
        TapeT<S>::active()->record("matmul_nt", {a, b}, c, [at, bt, ct, m, k, n]() mutable {
            auto dy = ct.grad();
            if (at.requires_grad()) {
                at.ensure_grad();
                kernels::matmul_nn(dy.data(), bt.data().data(), at.grad().data(), m, n, k, true);
            }
            if (bt.requires_grad()) {
                bt.ensure_grad();
                kernels::matmul_tn(dy.data(), at.data().data(), bt.grad().data(), n, m, k, true);
            }
        });
    }
    return c;
}

// ------------------------------------------------------------------
// element-wise

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    auto y = TensorT<S>::zeros(a.shape());
    kernels::add_vec(a.data().data(), b.data().data(), y.data().data(), a.numel());
    check_finite(y, "add");

    if (should_record<S>({&a, &b})) {
        y.set_requires_grad(true);
        TensorT<S> at = a, bt = b, yt = y;
        TapeT<S>::active()->record("add", {a, b}, y, [at, bt, yt]() mutable {
            auto dy = yt.grad();
            for (TensorT<S>* t : {&at, &bt}) {
                if (!t->requires_grad()) continue;
                t->ensure_grad();
                auto g = t->grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> add_bias(const TensorT<S>& x, const TensorT<S>& b) {
    require_rank2(x, "add_bias");
    if (b.rank() != 1 || b.dim(0) != x.dim(1)) {
        throw ShapeError("add_bias: bias " + b.shape_str() + " does not match " + x.shape_str());
    }
    const int n = x.dim(0), d = x.dim(1);
    auto y = TensorT<S>::zeros(x.shape());
    {
        auto xv = x.data();
        auto bv = b.data();
        auto yv = y.data();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) yv[i * d + j] = xv[i * d + j] + bv[j];
        }
    }
    check_finite(y, "add_bias");

    if (should_record<S>({&x, &b})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, bt = b, yt = y;
        TapeT<S>::active()->record("add_bias", {x, b}, y, [xt, bt, yt, n, d]() mutable {
            auto dy = yt.grad();
            if (xt.requires_grad()) {
                xt.ensure_grad();
                auto g = xt.grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
            }
            if (bt.requires_grad()) {
                bt.ensure_grad();
                auto g = bt.grad();
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < d; ++j) g[j] += dy[i * d + j];
                }
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    auto y = TensorT<S>::zeros(a.shape());
    kernels::mul_vec(a.data().data(), b.data().data(), y.data().data(), a.numel());
    check_finite(y, "mul");

    if (should_record<S>({&a, &b})) {
        y.set_requires_grad(true);
        TensorT<S> at = a, bt = b, yt = y;
        TapeT<S>::active()->record("mul", {a, b}, y, [at, bt, yt]() mutable {
            auto dy = yt.grad();
            if (at.requires_grad()) {
                at.ensure_grad();
                auto g = at.grad();
                auto bv = bt.data();
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bv[i];
            }
            if (bt.requires_grad()) {
                bt.ensure_grad();
                auto g = bt.grad();
                auto av = at.data();
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * av[i];
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> scale(const TensorT<S>& x, double s) {
    auto y = TensorT<S>::zeros(x.shape());
    kernels::scale_vec(x.data().data(), static_cast<S>(s), y.data().data(), x.numel());
    check_finite(y, "scale");

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        const S sv = static_cast<S>(s);
        TapeT<S>::active()->record("scale", {x}, y, [xt, yt, sv]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            auto g = xt.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * sv;
        });
    }
    return y;
}

template <class S>
TensorT<S> silu(const TensorT<S>& x) {
    auto y = TensorT<S>::zeros(x.shape());
    kernels::silu_fwd(x.data().data(), y.data().data(), x.numel());
    check_finite(y, "silu");

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("silu", {x}, y, [xt, yt]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            auto g = xt.grad();
            auto xv = xt.data();
            for (size_t i = 0; i < g.size(); ++i) {
                const S sig = S(1) / (S(1) + std::exp(-xv[i]));
                g[i] += dy[i] * sig * (S(1) + xv[i] * (S(1) - sig));
            }
        });
    }
    return y;
}

// ------------------------------------------------------------------
// normalization / softmax

template <class S>
TensorT<S> rms_norm(const TensorT<S>& x, const TensorT<S>& gain) {
    const int d = x.cols();
    if (gain.rank() != 1 || gain.dim(0) != d) {
        throw ShapeError("rms_norm: gain " + gain.shape_str() + " does not match last dim of " +
                         x.shape_str());
    }
    const int n = x.rows();
    auto y = TensorT<S>::zeros(x.shape());
    std::vector<S> inv_rms(static_cast<size_t>(n));
    kernels::rms_norm_rows(x.data().data(), gain.data().data(), y.data().data(), n, d,
                           static_cast<S>(kRmsNormEps), inv_rms.data());
    check_finite(y, "rms_norm");

    if (should_record<S>({&x, &gain})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, gt = gain, yt = y;
        TapeT<S>::active()->record("rms_norm", {x, gain}, y,
                                   [xt, gt, yt, inv = std::move(inv_rms), n, d]() mutable {
            auto dy = yt.grad();
            auto xv = xt.data();
            auto gv = gt.data();
            if (xt.requires_grad()) {
                xt.ensure_grad();
                auto gx = xt.grad();
                for (int i = 0; i < n; ++i) {
                    const S* xr = xv.data() + static_cast<int64_t>(i) * d;
                    const S* dyr = dy.data() + static_cast<int64_t>(i) * d;
                    S* gr = gx.data() + static_cast<int64_t>(i) * d;
                    S dot = S(0);
                    for (int j = 0; j < d; ++j) dot += dyr[j] * gv[j] * xr[j];
                    const S k = inv[i] * inv[i] * inv[i] * dot / static_cast<S>(d);
                    for (int j = 0; j < d; ++j) gr[j] += dyr[j] * gv[j] * inv[i] - xr[j] * k;
                }
            }
            if (gt.requires_grad()) {
                gt.ensure_grad();
                auto gg = gt.grad();
                for (int i = 0; i < n; ++i) {
                    const S* xr = xv.data() + static_cast<int64_t>(i) * d;
                    const S* dyr = dy.data() + static_cast<int64_t>(i) * d;
                    for (int j = 0; j < d; ++j) gg[j] += dyr[j] * xr[j] * inv[i];
                }
            }
        });
    }
    return y;
}

namespace {

template <class S>
TensorT<S> softmax_impl(const TensorT<S>& x, bool causal, const char* op) {
    require_rank2(x, op);
    const int n = x.dim(0), d = x.dim(1);
    if (causal && n != d) {
        throw ShapeError(std::string(op) + ": expected square matrix, got " + x.shape_str());
    }
    auto y = TensorT<S>::zeros(x.shape());
    kernels::softmax_rows(x.data().data(), y.data().data(), n, d, causal);
    check_finite(y, op);

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record(op, {x}, y, [xt, yt, n, d]() mutable {
            auto dy = yt.grad();
            auto yv = yt.data();
            xt.ensure_grad();
            auto gx = xt.grad();
            // dx_j = y_j * (dy_j - sum_t dy_t * y_t); masked-out entries have
            // y = 0 and drop out on their own
            for (int i = 0; i < n; ++i) {
                const S* yr = yv.data() + static_cast<int64_t>(i) * d;
                const S* dyr = dy.data() + static_cast<int64_t>(i) * d;
                S* gr = gx.data() + static_cast<int64_t>(i) * d;
                S dot = S(0);
                for (int j = 0; j < d; ++j) dot += dyr[j] * yr[j];
                for (int j = 0; j < d; ++j) gr[j] += yr[j] * (dyr[j] - dot);
            }
        });
    }
    return y;
}

} // namespace

template <class S>
TensorT<S> softmax_rows(const TensorT<S>& x) {
    return softmax_impl(x, false, "softmax_rows");
}

template <class S>
TensorT<S> causal_softmax_rows(const TensorT<S>& x) {
    return softmax_impl(x, true, "causal_softmax_rows");
}

// ------------------------------------------------------------------
// rope / transpose / gather / slicing

template <class S>
TensorT<S> rope(const TensorT<S>& x, int n_heads, int start_pos, double base) {
    require_rank2(x, "rope");
    const int n = x.dim(0), d = x.dim(1);
    if (n_heads <= 0 || d % n_heads != 0 || (d / n_heads) % 2 != 0) {
        throw ShapeError("rope: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " even-sized heads");
    }
    const int head_dim = d / n_heads;
    auto y = TensorT<S>::zeros(x.shape());
    kernels::rope_rows(x.data().data(), y.data().data(), n, n_heads, head_dim, start_pos, base, 1);
    check_finite(y, "rope");

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("rope", {x}, y,
                                   [xt, yt, n, n_heads, head_dim, start_pos, base]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            std::vector<S> dx(dy.size());
            kernels::rope_rows(dy.data(), dx.data(), n, n_heads, head_dim, start_pos, base, -1);
            auto g = xt.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += dx[i];
        });
    }
    return y;
}

template <class S>
TensorT<S> transpose(const TensorT<S>& x) {
    require_rank2(x, "transpose");
    const int n = x.dim(0), d = x.dim(1);
    auto y = TensorT<S>::zeros({d, n});
    {
        auto xv = x.data();
        auto yv = y.data();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) yv[static_cast<int64_t>(j) * n + i] = xv[static_cast<int64_t>(i) * d + j];
        }
    }

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("transpose", {x}, y, [xt, yt, n, d]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            auto g = xt.grad();
            for (int j = 0; j < d; ++j) {
                for (int i = 0; i < n; ++i) {
                    g[static_cast<int64_t>(i) * d + j] += dy[static_cast<int64_t>(j) * n + i];
                }
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> embedding_rows(const TensorT<S>& table, const std::vector<int>& ids) {
    require_rank2(table, "embedding_rows");
    const int v = table.dim(0), d = table.dim(1);
    const int t = static_cast<int>(ids.size());
    if (t == 0) throw ShapeError("embedding_rows: empty id list");
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw IndexError("embedding_rows: id " + std::to_string(id) + " outside table of " +
                             std::to_string(v) + " rows");
        }
    }
    auto y = TensorT<S>::zeros({t, d});
    {
        auto tv = table.data();
        auto yv = y.data();
        for (int i = 0; i < t; ++i) {
            const S* src = tv.data() + static_cast<int64_t>(ids[i]) * d;
            S* dst = yv.data() + static_cast<int64_t>(i) * d;
            for (int j = 0; j < d; ++j) dst[j] = src[j];
        }
    }

    if (should_record<S>({&table})) {
        y.set_requires_grad(true);
        TensorT<S> tt = table, yt = y;
        auto ids_copy = ids;
        TapeT<S>::active()->record("embedding_rows", {table}, y,
                                   [tt, yt, ids_copy = std::move(ids_copy), d]() mutable {
            auto dy = yt.grad();
            tt.ensure_grad();
            auto g = tt.grad();
            // serial scatter; ids repeat, order fixed
            for (size_t i = 0; i < ids_copy.size(); ++i) {
                S* dst = g.data() + static_cast<int64_t>(ids_copy[i]) * d;
                const S* src = dy.data() + static_cast<int64_t>(i) * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> slice_rows(const TensorT<S>& x, int start, int count) {
    require_rank2(x, "slice_rows");
    const int n = x.dim(0), d = x.dim(1);
    if (start < 0 || count < 1 || start + count > n) {
        throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + x.shape_str());
    }
    auto y = TensorT<S>::zeros({count, d});
    std::copy_n(x.data().data() + static_cast<int64_t>(start) * d,
                static_cast<int64_t>(count) * d, y.data().data());

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("slice_rows", {x}, y, [xt, yt, start, count, d]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            auto g = xt.grad();
            for (int64_t i = 0; i < static_cast<int64_t>(count) * d; ++i) {
                g[static_cast<int64_t>(start) * d + i] += dy[i];
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> slice_cols(const TensorT<S>& x, int start, int count) {
    require_rank2(x, "slice_cols");
    const int n = x.dim(0), d = x.dim(1);
    if (start < 0 || count < 1 || start + count > d) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + x.shape_str());
    }
    auto y = TensorT<S>::zeros({n, count});
    {
        auto xv = x.data();
        auto yv = y.data();
        for (int i = 0; i < n; ++i) {
            const S* src = xv.data() + static_cast<int64_t>(i) * d + start;
            S* dst = yv.data() + static_cast<int64_t>(i) * count;
            for (int j = 0; j < count; ++j) dst[j] = src[j];
        }
    }

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("slice_cols", {x}, y, [xt, yt, start, count, n, d]() mutable {
            auto dy = yt.grad();
            xt.ensure_grad();
            auto g = xt.grad();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < count; ++j) {
                    g[static_cast<int64_t>(i) * d + start + j] += dy[static_cast<int64_t>(i) * count + j];
                }
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> concat_rows(const TensorT<S>& a, const TensorT<S>& b) {
    require_rank2(a, "concat_rows");
    require_rank2(b, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_rows: widths disagree: " + a.shape_str() + " vs " + b.shape_str());
    }
    const int na = a.dim(0), nb = b.dim(0), d = a.dim(1);
    auto y = TensorT<S>::zeros({na + nb, d});
    std::copy_n(a.data().data(), static_cast<int64_t>(na) * d, y.data().data());
    std::copy_n(b.data().data(), static_cast<int64_t>(nb) * d,
                y.data().data() + static_cast<int64_t>(na) * d);

    if (should_record<S>({&a, &b})) {
        y.set_requires_grad(true);
        TensorT<S> at = a, bt = b, yt = y;
        TapeT<S>::active()->record("concat_rows", {a, b}, y, [at, bt, yt, na, nb, d]() mutable {
            auto dy = yt.grad();
            if (at.requires_grad()) {
                at.ensure_grad();
                auto g = at.grad();
                for (int64_t i = 0; i < static_cast<int64_t>(na) * d; ++i) g[i] += dy[i];
            }
            if (bt.requires_grad()) {
                bt.ensure_grad();
                auto g = bt.grad();
                const int64_t off = static_cast<int64_t>(na) * d;
                for (int64_t i = 0; i < static_cast<int64_t>(nb) * d; ++i) g[i] += dy[off + i];
            }
        });
    }
    return y;
}

template <class S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const int n = parts[0].dim(0);
    int total = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.dim(0) != n) {
            throw ShapeError("concat_cols: row counts disagree: " + parts[0].shape_str() + " vs " +
                             p.shape_str());
        }
        total += p.dim(1);
    }
    auto y = TensorT<S>::zeros({n, total});
    {
        auto yv = y.data();
        int off = 0;
        for (const auto& p : parts) {
            const int d = p.dim(1);
            auto pv = p.data();
            for (int i = 0; i < n; ++i) {
                std::copy_n(pv.data() + static_cast<int64_t>(i) * d, d,
                            yv.data() + static_cast<int64_t>(i) * total + off);
            }
            off += d;
        }
    }

    bool rec = TapeT<S>::active() != nullptr;
    if (rec) {
        rec = false;
        for (const auto& p : parts) rec = rec || p.requires_grad();
    }
    if (rec) {
        y.set_requires_grad(true);
        auto parts_copy = parts;
        TensorT<S> yt = y;
        TapeT<S>::active()->record("concat_cols", parts, y,
                                   [parts_copy = std::move(parts_copy), yt, n, total]() mutable {
            auto dy = yt.grad();
            int off = 0;
            for (auto& p : parts_copy) {
                const int d = p.dim(1);
                if (p.requires_grad()) {
                    p.ensure_grad();
                    auto g = p.grad();
                    for (int i = 0; i < n; ++i) {
                        for (int j = 0; j < d; ++j) {
                            g[static_cast<int64_t>(i) * d + j] +=
                                dy[static_cast<int64_t>(i) * total + off + j];
                        }
                    }
                }
                off += d;
            }
        });
    }
    return y;
}

// ------------------------------------------------------------------
// reductions / loss

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    S acc = S(0);
    for (S v : x.data()) acc += v;
    auto y = TensorT<S>::scalar(acc);
    check_finite(y, "sum");

    if (should_record<S>({&x})) {
        y.set_requires_grad(true);
        TensorT<S> xt = x, yt = y;
        TapeT<S>::active()->record("sum", {x}, y, [xt, yt]() mutable {
            const S dy = yt.grad()[0];
            xt.ensure_grad();
            auto g = xt.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy;
        });
    }
    return y;
}

template <class S>
TensorT<S> cross_entropy_loss(const TensorT<S>& logits, const std::vector<int>& targets,
                              const std::vector<uint8_t>& mask) {
    require_rank2(logits, "cross_entropy_loss");
    const int t = logits.dim(0), v = logits.dim(1);
    if (static_cast<int>(targets.size()) != t || static_cast<int>(mask.size()) != t) {
        throw ShapeError("cross_entropy_loss: expected " + std::to_string(t) +
                         " targets and mask entries");
    }
    int n_masked = 0;
    for (int i = 0; i < t; ++i) {
        if (!mask[i]) continue;
        ++n_masked;
        if (targets[i] < 0 || targets[i] >= v) {
            throw IndexError("cross_entropy_loss: target " + std::to_string(targets[i]) +
                             " at position " + std::to_string(i) + " outside vocab of " +
                             std::to_string(v));
        }
    }
    if (n_masked == 0) throw BatchError("cross_entropy_loss: no masked-in positions");

    // cache softmax probabilities of masked rows for backward
    std::vector<S> probs(static_cast<size_t>(n_masked) * v);
    std::vector<int> rows;
    rows.reserve(static_cast<size_t>(n_masked));
    S total = S(0);
    {
        auto lv = logits.data();
        int r = 0;
        for (int i = 0; i < t; ++i) {
            if (!mask[i]) continue;
            const S* row = lv.data() + static_cast<int64_t>(i) * v;
            S maxv = row[0];
            for (int j = 1; j < v; ++j) {
                if (row[j] > maxv) maxv = row[j];
            }
            S sum_exp = S(0);
            S* prow = probs.data() + static_cast<int64_t>(r) * v;
            for (int j = 0; j < v; ++j) {
                prow[j] = std::exp(row[j] - maxv);
                sum_exp += prow[j];
            }
            const S inv = S(1) / sum_exp;
            for (int j = 0; j < v; ++j) prow[j] *= inv;
            total += std::log(sum_exp) + maxv - row[targets[i]];
            rows.push_back(i);
            ++r;
        }
    }
    auto y = TensorT<S>::scalar(total / static_cast<S>(n_masked));
    check_finite(y, "cross_entropy_loss");

    if (should_record<S>({&logits})) {
        y.set_requires_grad(true);
        TensorT<S> lt = logits, yt = y;
        auto tgt = targets;
        TapeT<S>::active()->record(
            "cross_entropy_loss", {logits}, y,
            [lt, yt, probs = std::move(probs), rows = std::move(rows), tgt = std::move(tgt), v,
             n_masked]() mutable {
                const S dy = yt.grad()[0] / static_cast<S>(n_masked);
                lt.ensure_grad();
                auto g = lt.grad();
                for (size_t r = 0; r < rows.size(); ++r) {
                    const int i = rows[r];
                    const S* prow = probs.data() + static_cast<int64_t>(r) * v;
                    S* grow = g.data() + static_cast<int64_t>(i) * v;
                    for (int j = 0; j < v; ++j) grow[j] += prow[j] * dy;
                    grow[tgt[i]] -= dy;
                }
            });
    }
    return y;
}

// ------------------------------------------------------------------
// explicit instantiations

#define SQUIDLET_INSTANTIATE_TENSOR(S)                                                            \
    template class TensorT<S>;                                                                    \
    template class TapeT<S>;                                                                      \
    template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&);                          \
    template TensorT<S> matmul_nt<S>(const TensorT<S>&, const TensorT<S>&);                       \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                             \
    template TensorT<S> add_bias<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                             \
    template TensorT<S> scale<S>(const TensorT<S>&, double);                                      \
    template TensorT<S> silu<S>(const TensorT<S>&);                                               \
    template TensorT<S> rms_norm<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> softmax_rows<S>(const TensorT<S>&);                                       \
    template TensorT<S> causal_softmax_rows<S>(const TensorT<S>&);                                \
    template TensorT<S> rope<S>(const TensorT<S>&, int, int, double);                             \
    template TensorT<S> transpose<S>(const TensorT<S>&);                                          \
    template TensorT<S> embedding_rows<S>(const TensorT<S>&, const std::vector<int>&);            \
    template TensorT<S> slice_rows<S>(const TensorT<S>&, int, int);                               \
    template TensorT<S> slice_cols<S>(const TensorT<S>&, int, int);                               \
    template TensorT<S> concat_rows<S>(const TensorT<S>&, const TensorT<S>&);                     \
    template TensorT<S> concat_cols<S>(const std::vector<TensorT<S>>&);                           \
    template TensorT<S> sum<S>(const TensorT<S>&);                                                \
    template TensorT<S> cross_entropy_loss<S>(const TensorT<S>&, const std::vector<int>&,        \
                                              const std::vector<uint8_t>&);

SQUIDLET_INSTANTIATE_TENSOR(float)
SQUIDLET_INSTANTIATE_TENSOR(double)

#undef SQUIDLET_INSTANTIATE_TENSOR

} // namespace squidlet
