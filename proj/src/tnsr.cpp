#include "texadiff/tnsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "texadiff/error.hpp"

namespace texadiff {

namespace {

constexpr std::uint16_t kVersion = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[pos + i]) << (8 * i));
        pos += sizeof(T);
        return v;
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    bool done() const { return pos == buf.size(); }
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("TNSR: truncated file");
    }

    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
};

}  // namespace

std::size_t TnsrFile::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> encode_tnsr(const TnsrFile& file) {
    require(file.dims.size() <= 0xffff, "TNSR: too many dimensions");
    require(file.data.size() == file.element_count(), "TNSR: payload length does not match dims");
    Writer w;
    w.bytes("TNSR", 4);
    w.le<std::uint16_t>(kVersion);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(file.dims.size()));
    for (auto d : file.dims) w.le<std::uint32_t>(d);
    w.out.reserve(w.out.size() + 4 * file.data.size());
    for (float v : file.data) w.f32(v);
    if (!file.manifest.empty()) {
        w.le<std::uint32_t>(static_cast<std::uint32_t>(file.manifest.size()));
        for (const auto& e : file.manifest) {
            require(e.name.size() <= 0xffff, "TNSR: manifest name too long");
            w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
            w.bytes(e.name.data(), e.name.size());
            w.le<std::uint64_t>(e.offset);
            w.le<std::uint16_t>(static_cast<std::uint16_t>(e.dims.size()));
            for (auto d : e.dims) w.le<std::uint32_t>(d);
        }
    }
    return std::move(w.out);
}

TnsrFile decode_tnsr(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(4) != "TNSR") throw IoError("TNSR: bad magic");
    const auto version = r.le<std::uint16_t>();
    if (version != kVersion) throw IoError("TNSR: unsupported version " + std::to_string(version));
    TnsrFile f;
    const auto nd = r.le<std::uint16_t>();
    for (int i = 0; i < nd; ++i) f.dims.push_back(r.le<std::uint32_t>());
    const std::size_t n = f.element_count();
    r.need(4 * n);
    f.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.data[i] = r.f32();
    if (!r.done()) {
        const auto count = r.le<std::uint32_t>();
        for (std::uint32_t i = 0; i < count; ++i) {
            TnsrEntry e;
            e.name = r.str(r.le<std::uint16_t>());
            e.offset = r.le<std::uint64_t>();
            const auto end = r.le<std::uint16_t>();
            std::size_t len = 1;
            for (int d = 0; d < end; ++d) {
                e.dims.push_back(r.le<std::uint32_t>());
                len *= e.dims.back();
            }
            if (e.offset + len > n) throw IoError("TNSR: manifest entry '" + e.name + "' exceeds payload");
            f.manifest.push_back(std::move(e));
        }
        if (!r.done()) throw IoError("TNSR: trailing bytes after manifest");
    }
    return f;
}

void write_tnsr(const std::filesystem::path& path, const TnsrFile& file) {
    const auto bytes = encode_tnsr(file);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

TnsrFile read_tnsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open TNSR file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_tnsr(bytes);
}

}  // namespace texadiff
