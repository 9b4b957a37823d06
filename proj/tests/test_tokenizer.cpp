#include "doctest.h"

#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tokenizer.hpp"

using namespace squidlet;

namespace {

// random well-formed UTF-8 from random scalar values
std::string random_utf8(Rng& rng, int max_cp) {
    std::string s;
    const int n = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_cp)));
    for (int i = 0; i < n; ++i) {
        uint32_t cp;
        do {
            cp = static_cast<uint32_t>(rng.uniform_int(0x110000));
        } while (cp >= 0xD800 && cp <= 0xDFFF);
        if (cp < 0x80) {
            s.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return s;
}

} // namespace

TEST_CASE("encode basics") {
    Tokenizer tok;
    CHECK(tok.encode("").empty());
    const auto a = tok.encode("A");
    REQUIRE(a.size() == 1);
    CHECK(a[0] == 65);
    for (int id : tok.encode("[memory_0]")) CHECK(id < 256);
}

TEST_CASE("decode basics and control rendering") {
    Tokenizer tok;
    CHECK(tok.decode(std::vector<int>{72, 105}) == "Hi");
    CHECK(tok.decode(std::vector<int>{tok.memory_token_id(0)}) == "[memory_0]");
    CHECK(tok.decode(std::vector<int>{Tokenizer::bos_id(), 65, Tokenizer::eos_id()}) ==
          "[bos]A[eos]");
    CHECK(tok.decode(std::vector<int>{Tokenizer::pad_id()}) == "[pad]");
    CHECK(tok.decode(std::vector<int>{Tokenizer::restore_id()}) == "[restore]");
    CHECK(tok.decode(std::vector<int>{Tokenizer::continue_id()}) == "[continue]");
}

TEST_CASE("decode rejects out-of-vocabulary ids") {
    Tokenizer tok(8);
    CHECK_THROWS_AS(tok.decode(std::vector<int>{tok.vocab_size()}), IndexError);
    CHECK_THROWS_AS(tok.decode(std::vector<int>{-1}), IndexError);
}

TEST_CASE("invalid byte sequences decode to replacement characters") {
    Tokenizer tok;
    // lone continuation byte and a truncated 3-byte lead
    const std::string out = tok.decode(std::vector<int>{0x80, 0xE2, 0x28});
    CHECK(out.find("\xEF\xBF\xBD") != std::string::npos);
    CHECK(out.find('(') != std::string::npos);
}

TEST_CASE("encode/decode round-trips 1000 random UTF-8 strings") {
    Tokenizer tok;
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const std::string s = random_utf8(rng, 64);
        CHECK(tok.decode(tok.encode(s)) == s);
    }
}

TEST_CASE("memory token ids: layout, bounds, and disjointness") {
    Tokenizer tok(64);
    CHECK(tok.vocab_size() == 256 + 5 + 64);
    CHECK(tok.memory_token_ids(0).empty());
    const auto three = tok.memory_token_ids(3);
    CHECK(three == std::vector<int>{261, 262, 263});
    CHECK_THROWS_AS(tok.memory_token_ids(65), CapacityError);

    const auto all = tok.memory_token_ids(64);
    for (size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i] == 261 + static_cast<int>(i));
        CHECK(all[i] >= 256);
        if (i > 0) CHECK(all[i] > all[i - 1]);
    }
}
