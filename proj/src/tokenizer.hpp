#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace squidlet {

// Byte-level tokenizer: ids 0..255 are raw bytes, control and memory-slot
// tokens are appended after. Round-trips any UTF-8 string exactly. Shared
// by both decoders; immutable after construction.
class Tokenizer {
public:
    static constexpr int kPadId = 256;
    static constexpr int kBosId = 257;
    static constexpr int kEosId = 258;
    static constexpr int kRestoreId = 259;
    static constexpr int kContinueId = 260;
    static constexpr int kFirstMemoryId = 261;

    explicit Tokenizer(int n_max_memory = 64);

    int vocab_size() const { return kFirstMemoryId + n_max_memory_; }
    int n_max_memory() const { return n_max_memory_; }

    // one id per byte; never emits control ids
    std::vector<int> encode(std::string_view text) const;

    // bytes back to text (invalid UTF-8 becomes U+FFFD), control ids render
    // as their bracketed names
    std::string decode(std::span<const int> ids) const;

    int memory_token_id(int i) const;
    std::vector<int> memory_token_ids(int n) const;

    static int pad_id() { return kPadId; }
    static int bos_id() { return kBosId; }
    static int eos_id() { return kEosId; }
    static int restore_id() { return kRestoreId; }
    static int continue_id() { return kContinueId; }

private:
    int n_max_memory_;
};

} // namespace squidlet
