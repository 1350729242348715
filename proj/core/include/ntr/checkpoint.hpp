#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ntr/network.hpp"

namespace ntr {

/// One serialized tensor: name, precision, dims, little-endian payload.
struct CheckpointEntry {
    std::string name;
    Precision dtype = Precision::F64;
    std::vector<index_t> dims;
    std::vector<std::uint8_t> payload;

    index_t numel() const {
        index_t n = 1;
        for (index_t d : dims) n *= d;
        return n;
    }
};

/// Container layout: magic "NTRCKPT1", u32 version, u32 tensor count, then
/// per tensor (u32 name length, name, u8 dtype, u32 rank, u64 dims...,
/// payload), and a trailing CRC-32 of everything before it. All integers
/// little-endian. Checksum or version mismatches raise FormatError.
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

/// Serializes every trainable tensor of the network, in registry order.
template <typename T>
void save_model(const std::string& path, Network<T>& net) {
    constexpr Precision prec = sizeof(T) == 4 ? Precision::F32 : Precision::F64;
    std::vector<CheckpointEntry> entries;
    for (const ParamRef<T>& p : net.params()) {
        CheckpointEntry e;
        e.name = p.name;
        e.dtype = prec;
        e.dims = p.tensor->shape().dims();
        e.payload.resize(static_cast<std::size_t>(p.tensor->size()) * sizeof(T));
        // Byte-exact on little-endian hosts; the container is defined as LE.
        std::memcpy(e.payload.data(), p.tensor->data().data(), e.payload.size());
        entries.push_back(std::move(e));
    }
    write_checkpoint(path, entries);
}

/// Restores tensors into an already-built network of the same architecture.
/// Entries are matched by name and shape; precision converts if needed.
template <typename T>
void load_model(const std::string& path, Network<T>& net) {
    const std::vector<CheckpointEntry> entries = read_checkpoint(path);
    std::vector<ParamRef<T>> params = net.params();
    if (entries.size() != params.size())
        throw FormatError("checkpoint: has " + std::to_string(entries.size()) + " tensors, model needs " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const CheckpointEntry& e = entries[i];
        ParamRef<T>& p = params[i];
        if (e.name != p.name)
            throw FormatError("checkpoint: tensor " + std::to_string(i) + " is '" + e.name +
                              "', model expects '" + p.name + "'");
        if (e.dims != p.tensor->shape().dims())
            throw FormatError("checkpoint: shape mismatch for '" + e.name + "'");
        auto fill = [&](auto src_tag) {
            using S = decltype(src_tag);
            const S* src = reinterpret_cast<const S*>(e.payload.data());
            T* dst = p.tensor->data().data();
            for (index_t j = 0; j < p.tensor->size(); ++j) dst[j] = static_cast<T>(src[j]);
        };
        if (e.dtype == Precision::F32)
            fill(float{});
        else
            fill(double{});
    }
}

} // namespace ntr
