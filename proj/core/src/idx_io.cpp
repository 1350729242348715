#include "ntr/data_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <zlib.h>

namespace ntr {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

bool is_gzip(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw FormatError("gzip: inflateInit failed for " + path);
    std::vector<std::uint8_t> out;
    out.reserve(in.size() * 4);
    std::vector<std::uint8_t> buf(1 << 16);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip: corrupt stream in " + path + " (zlib code " + std::to_string(ret) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset, const std::string& path) {
    if (offset + 4 > b.size())
        throw FormatError("IDX: truncated header in " + path + " at byte offset " + std::to_string(offset));
    return (static_cast<std::uint32_t>(b[offset]) << 24) | (static_cast<std::uint32_t>(b[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(b[offset + 2]) << 8) | static_cast<std::uint32_t>(b[offset + 3]);
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write: " + path);
}

} // namespace

IdxData read_idx_file(const std::string& path, std::uint32_t expected_magic) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (is_gzip(bytes)) bytes = gunzip(bytes, path);

    const std::uint32_t magic = read_be32(bytes, 0, path);
    if (expected_magic != 0 && magic != expected_magic) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "IDX: bad magic 0x%08x (expected 0x%08x) at byte offset 0 in ",
                      magic, expected_magic);
        throw FormatError(std::string(buf) + path);
    }
    // Generic IDX: byte 2 is the element type (0x08 = unsigned byte), byte 3
    // the dimension count.
    if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08)
        throw FormatError("IDX: unsupported type code at byte offset 2 in " + path);
    const std::size_t ndims = magic & 0xff;
    if (ndims == 0 || ndims > 4)
        throw FormatError("IDX: implausible dimension count " + std::to_string(ndims) +
                          " at byte offset 3 in " + path);

    IdxData idx;
    index_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::uint32_t extent = read_be32(bytes, 4 + 4 * d, path);
        if (extent == 0) throw FormatError("IDX: zero extent at byte offset " + std::to_string(4 + 4 * d) +
                                           " in " + path);
        idx.dims.push_back(static_cast<index_t>(extent));
        total *= static_cast<index_t>(extent);
    }
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() != header + static_cast<std::size_t>(total))
        throw FormatError("IDX: payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                          std::to_string(total) + " (truncation at byte offset " +
                          std::to_string(bytes.size()) + ") in " + path);
    idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return idx;
}

void write_idx_images(const std::string& path, index_t count, index_t rows, index_t cols,
                      const std::vector<std::uint8_t>& pixels) {
    if (static_cast<index_t>(pixels.size()) != count * rows * cols)
        throw ArgumentError("write_idx_images: pixel count mismatch");
    std::vector<std::uint8_t> out;
    out.reserve(16 + pixels.size());
    append_be32(out, 0x00000803u);
    append_be32(out, static_cast<std::uint32_t>(count));
    append_be32(out, static_cast<std::uint32_t>(rows));
    append_be32(out, static_cast<std::uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    write_file_bytes(path, out);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    append_be32(out, 0x00000801u);
    append_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    write_file_bytes(path, out);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("NTR_DATA_DIR"); env && *env) return env;
    namespace fs = std::filesystem;
    for (const char* candidate : {"data", "../data"}) {
        std::error_code ec;
        if (fs::is_directory(candidate, ec)) return candidate;
    }
    return {};
}

std::string find_dataset_file(const std::string& data_dir, const std::string& dataset,
                              const std::string& base) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(data_dir) / dataset;
    const fs::path plain = dir / base;
    const fs::path gz = dir / (base + ".gz");
    std::error_code ec;
    if (fs::exists(plain, ec)) return plain.string();
    if (fs::exists(gz, ec)) return gz.string();
    throw FormatError("dataset file not found: " + plain.string() + " (or .gz). Fetch it with "
                      "`ntr fetch " + dataset + "` or point NTR_DATA_DIR at the dataset root.");
}

} // namespace ntr
