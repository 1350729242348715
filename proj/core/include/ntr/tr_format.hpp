#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ntr/rng.hpp"
#include "ntr/tensor_ops.hpp"

namespace ntr {

/// Ring of 3rd-order cores; core k has shape (R_k, dim_k, R_{k+1}) and the
/// last bond closes back onto R_1.
template <typename T>
struct TrCores {
    std::vector<Tensor<T>> cores;

    TrCores() = default;
    explicit TrCores(std::vector<Tensor<T>> cs) : cores(std::move(cs)) { validate(); }

    void validate() const {
        if (cores.empty()) throw StructureError("TrCores: core list is empty");
        for (std::size_t k = 0; k < cores.size(); ++k) {
            if (cores[k].rank() != 3)
                throw StructureError("TrCores: core " + std::to_string(k) + " must be 3rd-order, got " +
                                     cores[k].shape().str());
            const Tensor<T>& next = cores[(k + 1) % cores.size()];
            if (cores[k].shape()[2] != next.shape()[0])
                throw StructureError("TrCores: bond mismatch between cores " + std::to_string(k) + " and " +
                                     std::to_string((k + 1) % cores.size()) + ": " +
                                     std::to_string(cores[k].shape()[2]) + " vs " +
                                     std::to_string(next.shape()[0]));
        }
    }

    index_t order() const { return static_cast<index_t>(cores.size()); }

    std::vector<index_t> dims() const {
        std::vector<index_t> d;
        d.reserve(cores.size());
        for (const auto& c : cores) d.push_back(c.shape()[1]);
        return d;
    }

    std::vector<index_t> bond_ranks() const {
        std::vector<index_t> r;
        r.reserve(cores.size());
        for (const auto& c : cores) r.push_back(c.shape()[0]);
        return r;
    }

    index_t param_count() const {
        index_t n = 0;
        for (const auto& c : cores) n += c.size();
        return n;
    }
};

/// Tensor-train chain: boundary matrices plus 3rd-order middle cores.
/// Reference/oracle use only.
template <typename T>
struct TtCores {
    Tensor<T> first;                  // (I_1, R_1)
    std::vector<Tensor<T>> middle;    // (R_{k-1}, I_k, R_k)
    Tensor<T> last;                   // (R_{N-1}, I_N)

    void validate() const {
        if (first.rank() != 2 || last.rank() != 2)
            throw StructureError("TtCores: boundary factors must be matrices");
        index_t r = first.shape()[1];
        for (std::size_t k = 0; k < middle.size(); ++k) {
            if (middle[k].rank() != 3)
                throw StructureError("TtCores: middle core " + std::to_string(k) + " must be 3rd-order");
            if (middle[k].shape()[0] != r)
                throw StructureError("TtCores: chain rank mismatch at middle core " + std::to_string(k));
            r = middle[k].shape()[2];
        }
        if (last.shape()[0] != r) throw StructureError("TtCores: chain rank mismatch at last factor");
    }
};

/// One uniform TR rank per network layer; layers may differ.
struct RankSpec {
    std::vector<index_t> per_layer;

    void validate() const {
        for (index_t r : per_layer)
            if (r < 1) throw StructureError("RankSpec: ranks must be >= 1");
    }
};

/// Full tensor from a TR ring: the trace over the closed chain of bond
/// indices. Evaluated by folding the two half-chains and contracting both
/// boundary bonds at once, which keeps intermediates at
/// O(R^2 * max(prod dims of a half)).
template <typename T>
Tensor<T> tr_reconstruct(const TrCores<T>& c) {
    c.validate();
    const index_t n = c.order();
    if (n == 1) {
        // A(i) = sum_r G(r, i, r)
        const Tensor<T>& g = c.cores[0];
        const index_t r = g.shape()[0], d = g.shape()[1];
        Tensor<T> out{Shape{d}};
        for (index_t i = 0; i < d; ++i) {
            T s = 0;
            for (index_t a = 0; a < r; ++a) s += g.at({a, i, a});
            out[i] = s;
        }
        return out;
    }

    auto fold = [](std::span<const Tensor<T>> cs) {
        Tensor<T> acc = cs[0];
        for (std::size_t k = 1; k < cs.size(); ++k) {
            const int last = static_cast<int>(acc.rank()) - 1;
            acc = contract(acc, {last}, cs[k], {0}); // (R_a, d..., R_mid) x (R_mid, d, R_b)
        }
        return acc;
    };
    const std::size_t mid = c.cores.size() / 2;
    Tensor<T> left = fold(std::span<const Tensor<T>>(c.cores.data(), mid));
    Tensor<T> right = fold(std::span<const Tensor<T>>(c.cores.data() + mid, c.cores.size() - mid));
    // left: (R_1, d_1..d_m, R_mid); right: (R_mid, d_{m+1}..d_n, R_1).
    const int ll = static_cast<int>(left.rank()) - 1;
    const int rl = static_cast<int>(right.rank()) - 1;
    return contract(left, {0, ll}, right, {rl, 0});
}

/// Full tensor from a TT chain (no ring closure).
template <typename T>
Tensor<T> tt_reconstruct(const TtCores<T>& c) {
    c.validate();
    Tensor<T> acc = c.first; // (I_1, R_1)
    for (const auto& g : c.middle) {
        const int last = static_cast<int>(acc.rank()) - 1;
        acc = contract(acc, {last}, g, {0});
    }
    const int last = static_cast<int>(acc.rank()) - 1;
    return contract(acc, {last}, c.last, {0});
}

/// How random_init scales each core.
struct ScalePolicy {
    enum class Kind {
        /// Per-core std chosen so the reconstructed tensor has a target
        /// elementwise variance: std = (target / prod(ranks))^(1/(2N)).
        VarianceMatching,
        /// Fixed per-core standard deviation.
        FixedStd,
    };
    Kind kind = Kind::VarianceMatching;
    double value = 1.0; // target variance, or the fixed std

    static ScalePolicy variance_matching(double target_variance) {
        return {Kind::VarianceMatching, target_variance};
    }
    /// Glorot target for a map with the given fan-in/out.
    static ScalePolicy glorot(index_t fan_in, index_t fan_out) {
        return variance_matching(2.0 / static_cast<double>(fan_in + fan_out));
    }
    static ScalePolicy fixed_std(double s) { return {Kind::FixedStd, s}; }

    /// Resolve the per-core std for a ring with the given bond ranks.
    double core_std(std::span<const index_t> ranks) const {
        if (kind == Kind::FixedStd) return value;
        double log_prod_r = 0.0;
        for (index_t r : ranks) log_prod_r += std::log(static_cast<double>(r));
        const double n = static_cast<double>(ranks.size());
        return std::exp((std::log(value) - log_prod_r) / (2.0 * n));
    }
};

/// Seeded i.i.d. Gaussian TR ring over `dims` with bond ranks `ranks`
/// (ranks[k] = R_k; core k is (R_k, dims[k], R_{k+1 mod N})).
template <typename T>
TrCores<T> random_init(std::span<const index_t> dims, std::span<const index_t> ranks,
                       std::uint64_t seed, const ScalePolicy& policy = {}) {
    if (dims.size() != ranks.size() || dims.empty())
        throw StructureError("random_init: dims and ranks must be non-empty lists of equal length");
    for (index_t r : ranks)
        if (r < 1) throw StructureError("random_init: ranks must be >= 1");

    const double sd = policy.core_std(ranks);
    std::vector<Tensor<T>> cores;
    cores.reserve(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        Rng rng(mix_seed(seed, k));
        Tensor<T> g{Shape{ranks[k], dims[k], ranks[(k + 1) % ranks.size()]}};
        for (auto& v : g.data()) v = static_cast<T>(sd * rng.normal());
        cores.push_back(std::move(g));
    }
    return TrCores<T>(std::move(cores));
}

template <typename T>
TrCores<T> random_init(const std::vector<index_t>& dims, const std::vector<index_t>& ranks,
                       std::uint64_t seed, const ScalePolicy& policy = {}) {
    return random_init<T>(std::span<const index_t>(dims), std::span<const index_t>(ranks), seed, policy);
}

/// Parameter count of a TR-factorized fully-connected layer at uniform rank:
/// (sum I_n + sum O_m) * R^2.
inline index_t tr_param_count_fc(std::span<const index_t> in_dims, std::span<const index_t> out_dims,
                                 index_t rank) {
    index_t s = 0;
    for (index_t d : in_dims) s += d;
    for (index_t d : out_dims) s += d;
    return s * rank * rank;
}

inline index_t tr_param_count_fc(const std::vector<index_t>& i, const std::vector<index_t>& o, index_t r) {
    return tr_param_count_fc(std::span<const index_t>(i), std::span<const index_t>(o), r);
}

/// Parameter count of a TR-factorized convolutional layer at uniform rank:
/// (sum I_n + sum O_m + D^2) * R^2 (the kernel core keeps the D x D window).
inline index_t tr_param_count_conv(index_t kernel, std::span<const index_t> in_dims,
                                   std::span<const index_t> out_dims, index_t rank) {
    index_t s = kernel * kernel;
    for (index_t d : in_dims) s += d;
    for (index_t d : out_dims) s += d;
    return s * rank * rank;
}

inline index_t tr_param_count_conv(index_t k, const std::vector<index_t>& i, const std::vector<index_t>& o,
                                   index_t r) {
    return tr_param_count_conv(k, std::span<const index_t>(i), std::span<const index_t>(o), r);
}

/// original / compressed parameter counts.
inline double compression_ratio(index_t original, index_t compressed) {
    if (compressed <= 0) throw ArgumentError("compression_ratio: compressed count must be positive");
    return static_cast<double>(original) / static_cast<double>(compressed);
}

/// Renders a ratio the way the experiment tables print it: one decimal below
/// 10 (half-up), truncated to an integer at 10 and above. A whole-number
/// one-decimal value drops the ".0".
inline std::string format_cr(double ratio) {
    std::string s;
    if (ratio < 10.0) {
        const long long tenths = std::llround(ratio * 10.0);
        if (tenths % 10 == 0) {
            s = std::to_string(tenths / 10);
        } else {
            s = std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
        }
    } else {
        s = std::to_string(static_cast<long long>(std::floor(ratio)));
    }
    return s + "x";
}

/// Bytes needed to store `count` elements at the given precision.
inline index_t storage_bytes(index_t count, Precision p) {
    if (count < 0) throw ArgumentError("storage_bytes: negative count");
    return count * bytes_per_element(p);
}

/// Both megabyte conventions, since table storage figures are ambiguous
/// between them: decimal MB (10^6) and MiB (2^20).
inline std::string format_storage(index_t bytes) {
    char buf[96];
    const double mb = static_cast<double>(bytes) / 1e6;
    const double mib = static_cast<double>(bytes) / (1024.0 * 1024.0);
    std::snprintf(buf, sizeof(buf), "%.3f MB / %.3f MiB", mb, mib);
    return buf;
}

} // namespace ntr
