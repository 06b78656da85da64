#include "wsaflow/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsaflow/errors.hpp"

namespace wsaflow {

namespace {

constexpr char kMagic[4] = {'W', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kFlagHasOpt = 1u;

void put_u16(std::string& b, uint16_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32s(std::string& b, const float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, data + i, 4);
        put_u32(b, bits);
    }
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw FormatError(std::string("checkpoint: truncated while reading ") + what,
                              (long long)pos);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint16_t(uint8_t(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    std::vector<float> f32s(size_t n, const char* what) {
        need(4 * n, what);
        std::vector<float> out(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t bits = 0;
            for (int j = 0; j < 4; ++j)
                bits |= uint32_t(uint8_t(buf[pos + 4 * i + size_t(j)])) << (8 * j);
            std::memcpy(&out[i], &bits, 4);
        }
        pos += 4 * n;
        return out;
    }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string b;
    b.append(kMagic, 4);
    put_u32(b, kVersion);
    put_u32(b, ckpt.has_opt ? kFlagHasOpt : 0);
    put_u32(b, uint32_t(ckpt.params.size()));
    put_u32(b, ckpt.next_epoch);
    put_u64(b, ckpt.has_opt ? ckpt.opt.step : 0);

    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.params) {
        if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long");
        put_u16(b, uint16_t(name.size()));
        b.append(name);
        b.push_back(char(t.ndim()));
        for (int d = 0; d < t.ndim(); ++d) put_u32(b, uint32_t(t.dim(d)));
        put_u64(b, offset);
        offset += uint64_t(t.size());
    }
    put_u64(b, offset);
    for (const auto& [name, t] : ckpt.params) put_f32s(b, t.value().data(), t.value().size());
    if (ckpt.has_opt) {
        for (const auto& [name, t] : ckpt.params) {
            auto it = ckpt.opt.m.find(name);
            if (it == ckpt.opt.m.end() || it->second.size() != t.value().size())
                throw std::invalid_argument("checkpoint: optimizer state out of sync at " + name);
            put_f32s(b, it->second.data(), it->second.size());
        }
        for (const auto& [name, t] : ckpt.params) {
            auto it = ckpt.opt.v.find(name);
            if (it == ckpt.opt.v.end() || it->second.size() != t.value().size())
                throw std::invalid_argument("checkpoint: optimizer state out of sync at " + name);
            put_f32s(b, it->second.data(), it->second.size());
        }
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(b.data(), std::streamsize(b.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic, expected \"WSCK\"", 0);
    Reader r{buf, 4};
    const uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
    const uint32_t flags = r.u32("flags");
    const uint32_t n_params = r.u32("param count");
    Checkpoint c;
    c.next_epoch = r.u32("next epoch");
    c.has_opt = (flags & kFlagHasOpt) != 0;
    c.opt.step = r.u64("adam step");

    struct Entry {
        std::string name;
        Shape shape;
        uint64_t offset;
        uint64_t count;
    };
    std::vector<Entry> manifest;
    for (uint32_t i = 0; i < n_params; ++i) {
        Entry e;
        const uint16_t len = r.u16("name length");
        r.need(len, "name");
        e.name.assign(buf, r.pos, len);
        r.pos += len;
        r.need(1, "rank");
        const int ndim = uint8_t(buf[r.pos++]);
        uint64_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            e.shape.push_back(int(r.u32("extent")));
            count *= uint64_t(e.shape.back());
        }
        e.offset = r.u64("offset");
        e.count = count;
        manifest.push_back(std::move(e));
    }
    const uint64_t total = r.u64("value count");
    for (const auto& e : manifest)
        if (e.offset + e.count > total)
            throw FormatError("checkpoint: manifest offset past the value blob at " + e.name,
                              (long long)r.pos);
    const auto values = r.f32s(size_t(total), "values");
    for (const auto& e : manifest) {
        std::vector<float> v(values.begin() + long(e.offset), values.begin() + long(e.offset + e.count));
        c.params.emplace(e.name, TensorF::from_data(e.shape, std::move(v), true));
    }
    if (c.has_opt) {
        for (const auto& e : manifest) c.opt.m[e.name] = r.f32s(size_t(e.count), "adam m");
        for (const auto& e : manifest) c.opt.v[e.name] = r.f32s(size_t(e.count), "adam v");
    }
    if (r.pos != buf.size())
        throw FormatError("checkpoint: trailing bytes", (long long)r.pos);
    return c;
}

}  // namespace wsaflow
