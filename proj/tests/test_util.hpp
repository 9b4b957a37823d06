#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace squidlet::testutil {

// Central-difference gradient check in double precision. make_loss must
// rebuild the forward pass from current parameter values on every call; it
// runs once under a tape for analytic gradients and twice per probed entry
// for finite differences.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst; // "<tensor index>[<flat index>]"
    int checked = 0;
};

inline GradCheckResult gradcheck(std::vector<TensorT<double>> params,
                                 const std::function<TensorT<double>()>& make_loss,
                                 double h = 1e-3, int max_checks_per_tensor = -1,
                                 uint64_t probe_seed = 17) {
    for (auto& p : params) {
        p.ensure_grad();
        p.zero_grad();
    }
    {
        TapeT<double> tape;
        auto loss = make_loss();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    GradCheckResult result;
    Rng rng(probe_seed);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        const int64_t n = p.numel();
        std::vector<int64_t> indices;
        if (max_checks_per_tensor < 0 || n <= max_checks_per_tensor) {
            for (int64_t i = 0; i < n; ++i) indices.push_back(i);
        } else {
            for (int c = 0; c < max_checks_per_tensor; ++c) {
                indices.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
            }
        }
        for (int64_t i : indices) {
            auto data = p.data();
            const double saved = data[static_cast<size_t>(i)];
            data[static_cast<size_t>(i)] = saved + h;
            const double lp = make_loss().item();
            data[static_cast<size_t>(i)] = saved - h;
            const double lm = make_loss().item();
            data[static_cast<size_t>(i)] = saved;

            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic[pi][static_cast<size_t>(i)];
            const double denom = std::abs(fd) + std::abs(an);
            double rel = 0.0;
            if (std::abs(fd - an) > 1e-8) { // both ~zero: pass
                rel = std::abs(fd - an) / std::max(denom, 1e-12);
            }
            ++result.checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = "param " + std::to_string(pi) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

inline TensorT<double> random_tensor64(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                                       bool requires_grad = true) {
    return TensorT<double>::randn(std::move(shape), rng, stddev, requires_grad);
}

// fixed random weights turning a tensor output into a scalar probe
inline TensorT<double> weighted_sum(const TensorT<double>& x, uint64_t seed) {
    Rng rng(seed);
    auto w = TensorT<double>::randn(x.shape(), rng, 1.0, false);
    return sum(mul(x, w));
}

} // namespace squidlet::testutil
