#include "ntr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace ntr {

namespace {

constexpr char kMagic[8] = {'N', 'T', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw FormatError("checkpoint: truncated at byte " + std::to_string(pos) + " in " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const CheckpointEntry& e : entries) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(e.dtype == Precision::F32 ? 1 : 0);
        put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (index_t d : e.dims) put_u64(out, static_cast<std::uint64_t>(d));
        const std::size_t expect = static_cast<std::size_t>(e.numel()) *
                                   static_cast<std::size_t>(bytes_per_element(e.dtype));
        if (e.payload.size() != expect)
            throw ArgumentError("write_checkpoint: payload size mismatch for '" + e.name + "'");
        out.insert(out.end(), e.payload.begin(), e.payload.end());
    }
    const std::uint32_t crc =
        static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    put_u32(out, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < 20) throw FormatError("checkpoint: too small to be valid: " + path);
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
    const std::uint32_t actual_crc = static_cast<std::uint32_t>(
        crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
    if (stored_crc != actual_crc)
        throw FormatError("checkpoint: checksum mismatch in " + path);

    Reader r{bytes, 0, path};
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic at byte 0 in " + path);
    r.pos = 8;
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    const std::uint32_t count = r.u32();

    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        e.name = r.str(r.u32());
        const std::uint8_t dtype = r.u8();
        if (dtype > 1) throw FormatError("checkpoint: bad dtype for '" + e.name + "' in " + path);
        e.dtype = dtype == 1 ? Precision::F32 : Precision::F64;
        const std::uint32_t rank = r.u32();
        for (std::uint32_t d = 0; d < rank; ++d) e.dims.push_back(static_cast<index_t>(r.u64()));
        const std::size_t nbytes = static_cast<std::size_t>(e.numel()) *
                                   static_cast<std::size_t>(bytes_per_element(e.dtype));
        r.need(nbytes);
        e.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + nbytes));
        r.pos += nbytes;
        entries.push_back(std::move(e));
    }
    if (r.pos != bytes.size() - 4)
        throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(r.pos) + " in " + path);
    return entries;
}

} // namespace ntr
