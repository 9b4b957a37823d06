#include "doctest.h"

#include <cmath>

#include "errors.hpp"
#include "tensor.hpp"
#include "test_util.hpp"

using namespace squidlet;
using namespace squidlet::testutil;
using T64 = TensorT<double>;

TEST_CASE("matmul identity and fixed example") {
    auto eye3 = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(1);
    auto b = Tensor::randn({3, 4}, rng, 1.0);
    auto c = matmul(eye3, b);
    for (int64_t i = 0; i < b.numel(); ++i) {
        CHECK(c.data()[static_cast<size_t>(i)] == b.data()[static_cast<size_t>(i)]);
    }

    auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto eye2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto prod = matmul(a, eye2);
    CHECK(prod.data()[0] == 1.0f);
    CHECK(prod.data()[1] == 2.0f);
    CHECK(prod.data()[2] == 3.0f);
    CHECK(prod.data()[3] == 4.0f);
}

TEST_CASE("matmul random case matches a scalar triple-loop oracle") {
    Rng rng(2);
    auto a = Tensor::randn({4, 5}, rng, 1.0);
    auto b = Tensor::randn({5, 3}, rng, 1.0);
    auto c = matmul(a, b);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 5; ++k) {
                acc += static_cast<double>(a.data()[static_cast<size_t>(i * 5 + k)]) *
                       b.data()[static_cast<size_t>(k * 3 + j)];
            }
            CHECK(c.data()[static_cast<size_t>(i * 3 + j)] == doctest::Approx(acc).epsilon(1e-6));
        }
    }
}

TEST_CASE("matmul dimension error names both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2 x 3]"), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[4 x 2]") != std::string::npos);
    }
}

TEST_CASE("softmax rows: symmetry, stability, and 64-bit oracle") {
    auto flat = softmax_rows(Tensor::zeros({1, 4}));
    for (float v : flat.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));

    auto spiky = softmax_rows(Tensor::from_data({1, 2}, {1000.0f, 0.0f}));
    CHECK(spiky.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(spiky.data()[1] == doctest::Approx(0.0).epsilon(1e-6));

    Rng rng(3);
    auto x = Tensor::randn({3, 7}, rng, 2.0);
    auto y = softmax_rows(x);
    for (int i = 0; i < 3; ++i) {
        double maxv = -1e300;
        for (int j = 0; j < 7; ++j) {
            maxv = std::max(maxv, static_cast<double>(x.data()[static_cast<size_t>(i * 7 + j)]));
        }
        double denom = 0.0;
        for (int j = 0; j < 7; ++j) {
            denom += std::exp(static_cast<double>(x.data()[static_cast<size_t>(i * 7 + j)]) - maxv);
        }
        for (int j = 0; j < 7; ++j) {
            const double expect =
                std::exp(static_cast<double>(x.data()[static_cast<size_t>(i * 7 + j)]) - maxv) /
                denom;
            CHECK(y.data()[static_cast<size_t>(i * 7 + j)] ==
                  doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    Rng rng(4);
    auto x = Tensor::randn({5, 9}, rng, 3.0);
    auto y = softmax_rows(x);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 9; ++j) s += y.data()[static_cast<size_t>(i * 9 + j)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto shifted = x.clone();
    for (int j = 0; j < 9; ++j) shifted.data()[static_cast<size_t>(2 * 9 + j)] += 5.0f;
    auto y2 = softmax_rows(shifted);
    for (int j = 0; j < 9; ++j) {
        CHECK(y2.data()[static_cast<size_t>(2 * 9 + j)] ==
              doctest::Approx(y.data()[static_cast<size_t>(2 * 9 + j)]).epsilon(1e-6));
    }
}

TEST_CASE("rms_norm examples and 64-bit oracle") {
    auto gain = Tensor::full({4}, 1.0f);
    auto ones = rms_norm(Tensor::full({1, 4}, 1.0f), gain);
    for (float v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-5));

    auto zeros = rms_norm(Tensor::zeros({1, 4}), gain);
    for (float v : zeros.data()) CHECK(v == 0.0f);

    Rng rng(5);
    auto x = Tensor::randn({2, 6}, rng, 1.5);
    auto g = Tensor::randn({6}, rng, 1.0);
    auto y = rms_norm(x, g);
    for (int i = 0; i < 2; ++i) {
        double ss = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double v = x.data()[static_cast<size_t>(i * 6 + j)];
            ss += v * v;
        }
        const double inv = 1.0 / std::sqrt(ss / 6.0 + kRmsNormEps);
        for (int j = 0; j < 6; ++j) {
            const double expect = static_cast<double>(x.data()[static_cast<size_t>(i * 6 + j)]) *
                                  inv * g.data()[static_cast<size_t>(j)];
            CHECK(y.data()[static_cast<size_t>(i * 6 + j)] ==
                  doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("cross entropy: perfect prediction, uniform logits, 64-bit oracle") {
    // probability ~1 on targets via huge margin
    auto logits = Tensor::from_data({2, 3}, {50, 0, 0, 0, 50, 0});
    auto loss = cross_entropy_loss(logits, {0, 1}, {1, 1});
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-6));

    const int v = 11;
    auto uniform = Tensor::zeros({3, v});
    auto u_loss = cross_entropy_loss(uniform, {1, 5, 10}, {1, 1, 1});
    CHECK(u_loss.item() == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-6));

    Rng rng(6);
    auto x = Tensor::randn({5, 11}, rng, 2.0);
    std::vector<int> targets = {3, 0, 10, 7, 1};
    std::vector<uint8_t> mask = {1, 0, 1, 1, 0};
    auto l = cross_entropy_loss(x, targets, mask);
    double expect = 0.0;
    int count = 0;
    for (int i = 0; i < 5; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        double maxv = -1e300, denom = 0.0;
        for (int j = 0; j < 11; ++j) {
            maxv = std::max(maxv, static_cast<double>(x.data()[static_cast<size_t>(i * 11 + j)]));
        }
        for (int j = 0; j < 11; ++j) {
            denom += std::exp(static_cast<double>(x.data()[static_cast<size_t>(i * 11 + j)]) - maxv);
        }
        expect += std::log(denom) + maxv -
                  static_cast<double>(
                      x.data()[static_cast<size_t>(i * 11 + targets[static_cast<size_t>(i)])]);
        ++count;
    }
    expect /= count;
    CHECK(l.item() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("cross entropy error paths") {
    auto logits = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(cross_entropy_loss(logits, {0, 1}, {0, 0}), BatchError);
    CHECK_THROWS_AS(cross_entropy_loss(logits, {0, 9}, {1, 1}), IndexError);
}

TEST_CASE("backward: linear and quadratic analytic gradients") {
    Rng rng(7);
    auto x = Tensor::randn({3, 4}, rng, 1.0, true);
    {
        Tape tape;
        auto loss = sum(x);
        tape.backward(loss);
    }
    for (float g : x.grad()) CHECK(g == 1.0f);

    x.zero_grad();
    {
        Tape tape;
        auto loss = sum(mul(x, x));
        tape.backward(loss);
    }
    for (int64_t i = 0; i < x.numel(); ++i) {
        CHECK(x.grad()[static_cast<size_t>(i)] ==
              doctest::Approx(2.0f * x.data()[static_cast<size_t>(i)]).epsilon(1e-6));
    }
}

TEST_CASE("backward through fan-out accumulates") {
    auto x = Tensor::from_data({2}, {3.0f, -1.0f}, true);
    {
        Tape tape;
        auto y = add(x, x);
        auto loss = sum(y);
        tape.backward(loss);
    }
    CHECK(x.grad()[0] == 2.0f);
    CHECK(x.grad()[1] == 2.0f);
}

TEST_CASE("backward on an untaped tensor is a usage error") {
    auto x = Tensor::from_data({1}, {2.0f}, true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(x), UsageError);
}

TEST_CASE("non-finite forward output raises a numeric error") {
    auto huge = Tensor::full({2, 2}, 3e38f);
    CHECK_THROWS_AS(matmul(huge, huge), NumericError);
}

TEST_CASE("gradient check: every primitive against central differences") {
    Rng rng(11);
    const double tol = 1e-4;

    auto check = [&](const char* name, std::vector<T64> params,
                     const std::function<T64()>& loss) {
        auto r = gradcheck(std::move(params), loss);
        INFO(name, ": max rel error ", r.max_rel_error, " at ", r.worst);
        CHECK(r.max_rel_error < tol);
    };

    {
        auto a = random_tensor64({4, 6}, rng), b = random_tensor64({6, 3}, rng);
        check("matmul", {a, b}, [=] { return weighted_sum(matmul(a, b), 21); });
    }
    {
        auto a = random_tensor64({4, 6}, rng), b = random_tensor64({5, 6}, rng);
        check("matmul_nt", {a, b}, [=] { return weighted_sum(matmul_nt(a, b), 22); });
    }
    {
        auto a = random_tensor64({3, 5}, rng), b = random_tensor64({3, 5}, rng);
        check("add", {a, b}, [=] { return weighted_sum(add(a, b), 23); });
        check("mul", {a, b}, [=] { return weighted_sum(mul(a, b), 24); });
    }
    {
        auto x = random_tensor64({4, 5}, rng), b = random_tensor64({5}, rng);
        check("add_bias", {x, b}, [=] { return weighted_sum(add_bias(x, b), 25); });
    }
    {
        auto x = random_tensor64({3, 4}, rng);
        check("scale", {x}, [=] { return weighted_sum(scale(x, -2.5), 26); });
        check("silu", {x}, [=] { return weighted_sum(silu(x), 27); });
        check("transpose", {x}, [=] { return weighted_sum(transpose(x), 28); });
    }
    {
        auto x = random_tensor64({3, 6}, rng), g = random_tensor64({6}, rng);
        check("rms_norm", {x, g}, [=] { return weighted_sum(rms_norm(x, g), 29); });
    }
    {
        auto x = random_tensor64({4, 7}, rng);
        check("softmax_rows", {x}, [=] { return weighted_sum(softmax_rows(x), 30); });
    }
    {
        auto x = random_tensor64({5, 5}, rng);
        check("causal_softmax_rows", {x},
              [=] { return weighted_sum(causal_softmax_rows(x), 31); });
    }
    {
        auto x = random_tensor64({4, 8}, rng);
        check("rope", {x}, [=] { return weighted_sum(rope(x, 2, 3, 10000.0), 32); });
    }
    {
        auto table = random_tensor64({9, 4}, rng);
        std::vector<int> ids = {1, 7, 1, 0};
        check("embedding_rows", {table},
              [=] { return weighted_sum(embedding_rows(table, ids), 33); });
    }
    {
        auto x = random_tensor64({6, 4}, rng);
        check("slice_rows", {x}, [=] { return weighted_sum(slice_rows(x, 2, 3), 34); });
        check("slice_cols", {x}, [=] { return weighted_sum(slice_cols(x, 1, 2), 35); });
    }
    {
        auto a = random_tensor64({2, 4}, rng), b = random_tensor64({3, 4}, rng);
        check("concat_rows", {a, b}, [=] { return weighted_sum(concat_rows(a, b), 36); });
    }
    {
        auto a = random_tensor64({3, 2}, rng), b = random_tensor64({3, 3}, rng);
        check("concat_cols", {a, b}, [=] {
            return weighted_sum(concat_cols<double>({a, b}), 37);
        });
    }
    {
        auto logits = random_tensor64({5, 9}, rng);
        std::vector<int> targets = {0, 3, 8, 2, 5};
        std::vector<uint8_t> mask = {1, 1, 0, 1, 1};
        check("cross_entropy_loss", {logits},
              [=] { return cross_entropy_loss(logits, targets, mask); });
    }
}
