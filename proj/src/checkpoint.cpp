#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace squidlet {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<uint32_t>(v));
}

struct Reader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > len) throw CheckpointError("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        return std::bit_cast<float>(u32());
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }
};

uint32_t crc_table_entry(uint32_t i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    return c;
}

} // namespace

uint32_t crc32(const uint8_t* data, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void write_checkpoint_file(const std::string& path, const CheckpointData& data) {
    std::string payload;
    put_u64(payload, data.config_text.size());
    payload += data.config_text;
    put_u64(payload, data.tensors.size());
    for (const auto& [name, tensor] : data.tensors) {
        put_u64(payload, name.size());
        payload += name;
        put_u32(payload, 0); // dtype f32
        put_u32(payload, static_cast<uint32_t>(tensor.rank()));
        for (int i = 0; i < tensor.rank(); ++i) {
            put_u64(payload, static_cast<uint64_t>(tensor.dim(i)));
        }
        for (float v : tensor.data()) put_f32(payload, v);
    }

    std::string file;
    file.append(kCheckpointMagic, 4);
    put_u32(file, data.version);
    put_u32(file, crc32(reinterpret_cast<const uint8_t*>(payload.data()), payload.size()));
    file += payload;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw IoError("checkpoint write failed: " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (file.size() < 12 || std::memcmp(file.data(), kCheckpointMagic, 4) != 0) {
        throw CheckpointError("not a checkpoint file: " + path);
    }
    Reader r{reinterpret_cast<const uint8_t*>(file.data()), file.size(), 4};
    CheckpointData data;
    data.version = r.u32();
    if (data.version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(data.version) +
                              " incompatible with supported version " +
                              std::to_string(kCheckpointVersion));
    }
    const uint32_t stored_crc = r.u32();
    const uint32_t actual_crc =
        crc32(reinterpret_cast<const uint8_t*>(file.data()) + r.pos, file.size() - r.pos);
    if (stored_crc != actual_crc) {
        throw CheckpointError("checkpoint checksum mismatch (file corrupted)");
    }

    const uint64_t cfg_len = r.u64();
    data.config_text = r.bytes(cfg_len);
    const uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = r.u64();
        std::string name = r.bytes(name_len);
        const uint32_t dtype = r.u32();
        if (dtype != 0) {
            throw CheckpointError("tensor '" + name + "': unsupported dtype code " +
                                  std::to_string(dtype));
        }
        const uint32_t rank = r.u32();
        std::vector<int> shape;
        int64_t numel = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            const uint64_t dim = r.u64();
            shape.push_back(static_cast<int>(dim));
            numel *= static_cast<int64_t>(dim);
        }
        std::vector<float> values(static_cast<size_t>(numel));
        for (auto& v : values) v = r.f32();
        data.tensors.emplace_back(std::move(name),
                                  Tensor::from_data(std::move(shape), std::move(values)));
    }
    if (r.pos != file.size()) throw CheckpointError("trailing bytes after checkpoint payload");
    return data;
}

std::vector<std::pair<std::string, std::string>> config_parse_lines(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t start = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        const auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line without '=': " + line);
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        if (end == text.size()) break;
    }
    return out;
}

std::string config_get(const std::string& text, const std::string& key) {
    std::string value;
    bool found = false;
    for (const auto& [k, v] : config_parse_lines(text)) {
        if (k == key) {
            value = v;
            found = true;
        }
    }
    if (!found) throw CheckpointError("checkpoint config missing key '" + key + "'");
    return value;
}

} // namespace squidlet
