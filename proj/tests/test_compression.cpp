#include "doctest.h"

#include <vector>

#include "compression.hpp"
#include "errors.hpp"

using namespace squidlet;

namespace {

Decoder encoder_model(int d_model, int n_layers, int n_heads, const Tokenizer& tok, uint64_t seed,
                      int max_seq = 640) {
    DecoderConfig cfg{d_model, n_layers, n_heads, 4 * d_model, tok.vocab_size(), max_seq, 10000.0};
    Rng rng(seed);
    return Decoder::init(cfg, rng);
}

} // namespace

TEST_CASE("augment_context appends the canonical memory tail") {
    Tokenizer tok;
    const std::vector<int> ctx = {10, 20, 30, 40};
    const auto aug = augment_context(ctx, 2, tok, 64);
    REQUIRE(aug.size() == 6);
    CHECK(std::vector<int>(aug.begin(), aug.begin() + 4) == ctx);
    CHECK(aug[4] == tok.memory_token_id(0));
    CHECK(aug[5] == tok.memory_token_id(1));

    CHECK(augment_context(ctx, 0, tok, 64) == ctx);
}

TEST_CASE("augment_context rejects overlength input rather than truncating") {
    Tokenizer tok;
    const std::vector<int> ctx(62, 7);
    CHECK_THROWS_AS(augment_context(ctx, 4, tok, 64), TruncationError);
    CHECK_NOTHROW(augment_context(ctx, 2, tok, 64));
}

TEST_CASE("encode_context is exactly the last-n-rows slice of the encoder output") {
    Tokenizer tok;
    auto pi_s = encoder_model(64, 2, 4, tok, 5);
    const std::vector<int> ctx = {5, 6, 7, 8, 9, 10, 11};
    const int n = 8;
    const auto aug = augment_context(ctx, n, tok, 640);
    const auto m = encode_context(pi_s, aug, n, tok);
    CHECK(m.shape() == std::vector<int>{8, 64});

    const auto z = pi_s.forward_hidden(aug);
    const int d = z.dim(1);
    const int offset = (z.dim(0) - n) * d;
    for (int64_t i = 0; i < m.numel(); ++i) {
        CHECK(m.data()[static_cast<size_t>(i)] ==
              z.data()[static_cast<size_t>(offset + i)]);
    }
}

TEST_CASE("encode_context rejects a malformed memory tail") {
    Tokenizer tok;
    auto pi_s = encoder_model(16, 1, 2, tok, 6);
    std::vector<int> aug = {1, 2, 3, tok.memory_token_id(1), tok.memory_token_id(0)};
    CHECK_THROWS_AS(encode_context(pi_s, aug, 2, tok), ContractError);
}

TEST_CASE("memory rows depend on every context position") {
    Tokenizer tok;
    auto pi_s = encoder_model(32, 2, 2, tok, 7);
    const int n = 4;
    std::vector<int> ctx = {50, 60, 70, 80, 90, 100};
    auto m1 = encode_context(pi_s, augment_context(ctx, n, tok, 640), n, tok);
    ctx[0] = 51; // perturb c_1
    auto m2 = encode_context(pi_s, augment_context(ctx, n, tok, 640), n, tok);
    const int d = m1.dim(1);
    for (int row = 0; row < n; ++row) {
        bool changed = false;
        for (int j = 0; j < d; ++j) {
            if (m1.data()[static_cast<size_t>(row * d + j)] !=
                m2.data()[static_cast<size_t>(row * d + j)]) {
                changed = true;
                break;
            }
        }
        CHECK(changed);
    }
}

TEST_CASE("projector: identity configuration passes the input through") {
    const int d = 6;
    Projector phi;
    std::vector<float> eye(static_cast<size_t>(d) * d, 0.0f);
    for (int i = 0; i < d; ++i) eye[static_cast<size_t>(i * d + i)] = 1.0f;
    phi.w1 = Tensor::from_data({d, d}, eye);
    phi.b1 = Tensor::zeros({d});
    phi.w2 = Tensor::from_data({d, d}, eye);
    phi.b2 = Tensor::zeros({d});
    phi.activation = Projector::Activation::identity;

    Rng rng(8);
    auto m = Tensor::randn({3, d}, rng, 1.0);
    auto e = project(phi, m);
    for (int64_t i = 0; i < m.numel(); ++i) {
        CHECK(e.data()[static_cast<size_t>(i)] ==
              doctest::Approx(m.data()[static_cast<size_t>(i)]).epsilon(1e-6));
    }
}

TEST_CASE("projector shapes and row-permutation equivariance") {
    Rng rng(9);
    auto phi = Projector::init(64, 128, 128, rng);
    auto m = Tensor::randn({8, 64}, rng, 1.0);
    auto e = project(phi, m);
    CHECK(e.shape() == std::vector<int>{8, 128});

    // permute rows of m
    const std::vector<int> perm = {3, 0, 7, 1, 5, 2, 6, 4};
    auto mp = Tensor::zeros({8, 64});
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 64; ++j) {
            mp.data()[static_cast<size_t>(i * 64 + j)] =
                m.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 64 + j)];
        }
    }
    auto ep = project(phi, mp);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 128; ++j) {
            CHECK(ep.data()[static_cast<size_t>(i * 128 + j)] ==
                  e.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 128 + j)]);
        }
    }

    auto wrong = Tensor::zeros({2, 32});
    CHECK_THROWS_AS(project(phi, wrong), ShapeError);
}

TEST_CASE("compression ratio is exact rational arithmetic") {
    CHECK(compression_ratio(512, 64).value() == doctest::Approx(8.0));
    CHECK(compression_ratio(512, 64).num == 8);
    CHECK(compression_ratio(512, 64).den == 1);
    CHECK(compression_ratio(7, 7).value() == doctest::Approx(1.0));
    CHECK_THROWS_AS(compression_ratio(10, 0), DivisionError);

    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t l = 1 + static_cast<int64_t>(rng.uniform_int(1000));
        const int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(64));
        const auto r = compression_ratio(l, n);
        CHECK(r.num * n == l * r.den); // cross-multiplied rational identity
        int64_t a = r.num, b = r.den;
        while (b != 0) {
            const int64_t t = a % b;
            a = b;
            b = t;
        }
        CHECK(a == 1); // reduced form
    }
}
