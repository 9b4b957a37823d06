#include "tokenizer.hpp"

#include "errors.hpp"

namespace squidlet {

namespace {

// Length of a valid UTF-8 sequence starting at bytes[i], or 0 if invalid.
size_t utf8_sequence_len(const std::string& bytes, size_t i) {
    const unsigned char b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) return 1;
    size_t len;
    unsigned cp_min;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp_min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp_min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp_min = 0x10000;
    } else {
        return 0;
    }
    if (i + len > bytes.size()) return 0;
    unsigned cp = b0 & (0xFFu >> (len + 1));
    for (size_t j = 1; j < len; ++j) {
        const unsigned char b = static_cast<unsigned char>(bytes[i + j]);
        if ((b & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (b & 0x3Fu);
    }
    if (cp < cp_min) return 0;                    // overlong
    if (cp > 0x10FFFF) return 0;
    if (cp >= 0xD800 && cp <= 0xDFFF) return 0;   // surrogates
    return len;
}

constexpr const char* kReplacement = "\xEF\xBF\xBD";

} // namespace

Tokenizer::Tokenizer(int n_max_memory) : n_max_memory_(n_max_memory) {
    if (n_max_memory < 0) throw CapacityError("tokenizer: negative memory-token capacity");
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char b : text) ids.push_back(static_cast<int>(b));
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    out.reserve(ids.size());
    std::string pending; // raw byte run, validated as UTF-8 when flushed

    auto flush_bytes = [&]() {
        size_t i = 0;
        while (i < pending.size()) {
            const size_t len = utf8_sequence_len(pending, i);
            if (len == 0) {
                out += kReplacement;
                ++i;
            } else {
                out.append(pending, i, len);
                i += len;
            }
        }
        pending.clear();
    };

    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw IndexError("decode: id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab_size()));
        }
        if (id < 256) {
            pending.push_back(static_cast<char>(id));
            continue;
        }
        flush_bytes();
        switch (id) {
        case kPadId: out += "[pad]"; break;
        case kBosId: out += "[bos]"; break;
        case kEosId: out += "[eos]"; break;
        case kRestoreId: out += "[restore]"; break;
        case kContinueId: out += "[continue]"; break;
        default:
            out += "[memory_" + std::to_string(id - kFirstMemoryId) + "]";
            break;
        }
    }
    flush_bytes();
    return out;
}

int Tokenizer::memory_token_id(int i) const {
    if (i < 0 || i >= n_max_memory_) {
        throw CapacityError("memory token index " + std::to_string(i) + " exceeds capacity " +
                            std::to_string(n_max_memory_));
    }
    return kFirstMemoryId + i;
}

std::vector<int> Tokenizer::memory_token_ids(int n) const {
    if (n < 0 || n > n_max_memory_) {
        throw CapacityError("requested " + std::to_string(n) + " memory tokens, capacity is " +
                            std::to_string(n_max_memory_));
    }
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ids.push_back(kFirstMemoryId + i);
    return ids;
}

} // namespace squidlet
