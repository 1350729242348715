#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ntr/tensor.hpp"

namespace ntr {

namespace detail {

template <typename T>
using RowMajorMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C(m,n) = A(m,k) * B(k,n), all row-major contiguous.
template <typename T>
void gemm(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
    Eigen::Map<const RowMajorMat<T>> ma(a, m, k);
    Eigen::Map<const RowMajorMat<T>> mb(b, k, n);
    Eigen::Map<RowMajorMat<T>> mc(c, m, n);
    mc.noalias() = ma * mb;
}

inline void check_axes(const Shape& s, std::span<const int> axes, const char* op) {
    std::vector<bool> seen(static_cast<std::size_t>(s.rank()), false);
    for (int a : axes) {
        if (a < 0 || a >= s.rank())
            throw ArgumentError(std::string(op) + ": axis " + std::to_string(a) +
                                " out of range for shape " + s.str());
        if (seen[static_cast<std::size_t>(a)])
            throw ArgumentError(std::string(op) + ": repeated axis " + std::to_string(a));
        seen[static_cast<std::size_t>(a)] = true;
    }
}

/// Copies `src` permuted by `perm` into `dst` (both row-major). Generic
/// N-d transpose: walk output indices, gather from strided input positions.
template <typename T>
void permute_copy(const T* src, const Shape& in_shape, std::span<const int> perm, T* dst) {
    const index_t r = in_shape.rank();
    const std::vector<index_t> in_strides = in_shape.strides();
    std::vector<index_t> out_dims(static_cast<std::size_t>(r));
    std::vector<index_t> gather(static_cast<std::size_t>(r)); // input stride per output axis
    for (index_t j = 0; j < r; ++j) {
        out_dims[static_cast<std::size_t>(j)] = in_shape[perm[static_cast<std::size_t>(j)]];
        gather[static_cast<std::size_t>(j)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    }
    const index_t total = in_shape.numel();
    if (r == 0) {
        dst[0] = src[0];
        return;
    }
    // Fast path: innermost output axis is contiguous in the input.
    const index_t inner = out_dims[static_cast<std::size_t>(r - 1)];
    const bool inner_contig = gather[static_cast<std::size_t>(r - 1)] == 1;
    const index_t outer = total / inner;

#pragma omp parallel for schedule(static)
    for (index_t o = 0; o < outer; ++o) {
        // Decode output outer index into per-axis counters.
        index_t rem = o;
        index_t base = 0;
        for (index_t j = r - 2; j >= 0; --j) {
            const index_t d = out_dims[static_cast<std::size_t>(j)];
            base += (rem % d) * gather[static_cast<std::size_t>(j)];
            rem /= d;
        }
        T* out = dst + o * inner;
        if (inner_contig) {
            std::memcpy(out, src + base, static_cast<std::size_t>(inner) * sizeof(T));
        } else {
            const index_t st = gather[static_cast<std::size_t>(r - 1)];
            for (index_t i = 0; i < inner; ++i) out[i] = src[base + i * st];
        }
    }
}

} // namespace detail

/// Same flat element sequence, new shape. Element counts must match.
template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape new_shape) {
    if (new_shape.numel() != t.shape().numel())
        throw ShapeError("reshape: cannot reshape " + t.shape().str() + " (" +
                         std::to_string(t.shape().numel()) + " elements) to " + new_shape.str() +
                         " (" + std::to_string(new_shape.numel()) + " elements)");
    return Tensor<T>(std::move(new_shape), std::vector<T>(t.data().begin(), t.data().end()));
}

/// Axis reordering: output axis j carries input axis perm[j], so
/// out(i_{perm[0]},...,i_{perm[r-1]}) == in(i_0,...,i_{r-1}).
/// perm must be a permutation of 0..rank-1.
template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::span<const int> perm) {
    const index_t r = t.rank();
    if (static_cast<index_t>(perm.size()) != r)
        throw ArgumentError("permute: perm length " + std::to_string(perm.size()) +
                            " != rank " + std::to_string(r));
    detail::check_axes(t.shape(), perm, "permute");

    std::vector<index_t> out_dims(static_cast<std::size_t>(r));
    for (index_t j = 0; j < r; ++j) out_dims[static_cast<std::size_t>(j)] = t.shape()[perm[static_cast<std::size_t>(j)]];
    Tensor<T> out{Shape(std::move(out_dims))};
    detail::permute_copy(t.data().data(), t.shape(), perm, out.data().data());
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& t, const std::vector<int>& perm) {
    return permute(t, std::span<const int>(perm));
}

/// Inverse of a permutation vector.
inline std::vector<int> inverse_permutation(std::span<const int> perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t j = 0; j < perm.size(); ++j) inv[static_cast<std::size_t>(perm[j])] = static_cast<int>(j);
    return inv;
}

/// General pairwise tensor contraction: sums over the paired axes
/// (modes_a[i] of `a` against modes_b[i] of `b`); the result carries the
/// surviving axes of `a` in their original order followed by the surviving
/// axes of `b` in theirs. The single-mode and double-mode contractions used
/// by the ring chains are thin uses of this with one or two pairs.
template <typename T>
Tensor<T> contract(const Tensor<T>& a, std::span<const int> modes_a,
                   const Tensor<T>& b, std::span<const int> modes_b) {
    if (modes_a.size() != modes_b.size())
        throw ArgumentError("contract: paired mode lists differ in length");
    detail::check_axes(a.shape(), modes_a, "contract");
    detail::check_axes(b.shape(), modes_b, "contract");
    for (std::size_t i = 0; i < modes_a.size(); ++i) {
        if (a.shape()[modes_a[i]] != b.shape()[modes_b[i]])
            throw ShapeError("contract: extent mismatch on pair " + std::to_string(i) + ": " +
                             std::to_string(a.shape()[modes_a[i]]) + " vs " +
                             std::to_string(b.shape()[modes_b[i]]));
    }

    auto surviving = [](const Shape& s, std::span<const int> modes) {
        std::vector<int> surv;
        for (index_t ax = 0; ax < s.rank(); ++ax)
            if (std::find(modes.begin(), modes.end(), static_cast<int>(ax)) == modes.end())
                surv.push_back(static_cast<int>(ax));
        return surv;
    };
    const std::vector<int> surv_a = surviving(a.shape(), modes_a);
    const std::vector<int> surv_b = surviving(b.shape(), modes_b);

    index_t m = 1, k = 1, n = 1;
    std::vector<index_t> out_dims;
    out_dims.reserve(surv_a.size() + surv_b.size());
    for (int ax : surv_a) { m *= a.shape()[ax]; out_dims.push_back(a.shape()[ax]); }
    for (int ax : modes_a) k *= a.shape()[ax];
    for (int ax : surv_b) { n *= b.shape()[ax]; out_dims.push_back(b.shape()[ax]); }

    // Lay out a as (surv_a, modes_a) and b as (modes_b, surv_b), then multiply.
    std::vector<int> perm_a(surv_a);
    perm_a.insert(perm_a.end(), modes_a.begin(), modes_a.end());
    std::vector<int> perm_b(modes_b.begin(), modes_b.end());
    perm_b.insert(perm_b.end(), surv_b.begin(), surv_b.end());

    auto is_identity = [](const std::vector<int>& p) {
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] != static_cast<int>(i)) return false;
        return true;
    };

    std::vector<T> a_buf, b_buf;
    const T* a_mat = a.data().data();
    const T* b_mat = b.data().data();
    if (!is_identity(perm_a)) {
        a_buf.resize(static_cast<std::size_t>(a.size()));
        detail::permute_copy(a.data().data(), a.shape(), perm_a, a_buf.data());
        a_mat = a_buf.data();
    }
    if (!is_identity(perm_b)) {
        b_buf.resize(static_cast<std::size_t>(b.size()));
        detail::permute_copy(b.data().data(), b.shape(), perm_b, b_buf.data());
        b_mat = b_buf.data();
    }

    Tensor<T> out{Shape(std::move(out_dims))};
    detail::gemm(a_mat, b_mat, out.data().data(), m, k, n);
    return out;
}

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const std::vector<int>& modes_a,
                   const Tensor<T>& b, const std::vector<int>& modes_b) {
    return contract(a, std::span<const int>(modes_a), b, std::span<const int>(modes_b));
}

/// Outer product of two or more tensors: result rank is the sum of operand
/// ranks, element = product of operand elements at the split multi-index.
template <typename T>
Tensor<T> outer_product(std::span<const Tensor<T>> operands) {
    if (operands.size() < 2)
        throw ArgumentError("outer_product: need at least 2 operands, got " + std::to_string(operands.size()));
    Tensor<T> acc = operands[0];
    for (std::size_t i = 1; i < operands.size(); ++i) {
        const Tensor<T>& b = operands[i];
        std::vector<index_t> dims = acc.shape().dims();
        dims.insert(dims.end(), b.shape().dims().begin(), b.shape().dims().end());
        Tensor<T> next{Shape(std::move(dims))};
        const index_t na = acc.size(), nb = b.size();
        T* out = next.data().data();
        const T* pa = acc.data().data();
        const T* pb = b.data().data();
#pragma omp parallel for schedule(static)
        for (index_t ia = 0; ia < na; ++ia)
            for (index_t ib = 0; ib < nb; ++ib) out[ia * nb + ib] = pa[ia] * pb[ib];
        acc = std::move(next);
    }
    return acc;
}

template <typename T>
Tensor<T> outer_product(std::initializer_list<Tensor<T>> operands) {
    std::vector<Tensor<T>> v(operands);
    return outer_product(std::span<const Tensor<T>>(v));
}

/// Elementwise activation. Identity returns the input unchanged.
template <typename T>
Tensor<T> apply_activation(const Tensor<T>& t, Activation f) {
    switch (f) {
        case Activation::Identity:
            return t;
        case Activation::Relu: {
            Tensor<T> out{t.shape()};
            const T* in = t.data().data();
            T* o = out.data().data();
            const index_t n = t.size();
#pragma omp parallel for schedule(static)
            for (index_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
            return out;
        }
        case Activation::Tanh: {
            Tensor<T> out{t.shape()};
            const T* in = t.data().data();
            T* o = out.data().data();
            const index_t n = t.size();
#pragma omp parallel for schedule(static)
            for (index_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]);
            return out;
        }
    }
    throw ArgumentError("apply_activation: unknown activation id " +
                        std::to_string(static_cast<int>(f)));
}

/// Output spatial extent of a cross-correlation.
inline index_t conv_out_extent(index_t in, index_t kernel, index_t stride, index_t padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

/// Unfolds (B,H,W,C) into the patch matrix (B*Ho*Wo, D*D*C) for stride/padding.
/// Out-of-image taps read as zero.
template <typename T>
void im2col(const T* x, index_t batch, index_t h, index_t w, index_t c,
            index_t d, index_t stride, index_t padding, T* cols) {
    const index_t ho = conv_out_extent(h, d, stride, padding);
    const index_t wo = conv_out_extent(w, d, stride, padding);
    const index_t row_len = d * d * c;
#pragma omp parallel for schedule(static)
    for (index_t b = 0; b < batch; ++b) {
        const T* img = x + b * h * w * c;
        T* out = cols + b * ho * wo * row_len;
        for (index_t oh = 0; oh < ho; ++oh) {
            for (index_t ow = 0; ow < wo; ++ow) {
                T* row = out + (oh * wo + ow) * row_len;
                const index_t h0 = oh * stride - padding;
                const index_t w0 = ow * stride - padding;
                for (index_t kh = 0; kh < d; ++kh) {
                    const index_t ih = h0 + kh;
                    if (ih < 0 || ih >= h) {
                        std::fill(row + kh * d * c, row + (kh + 1) * d * c, T(0));
                        continue;
                    }
                    for (index_t kw = 0; kw < d; ++kw) {
                        const index_t iw = w0 + kw;
                        T* dst = row + (kh * d + kw) * c;
                        if (iw < 0 || iw >= w) {
                            std::fill(dst, dst + c, T(0));
                        } else {
                            std::memcpy(dst, img + (ih * w + iw) * c, static_cast<std::size_t>(c) * sizeof(T));
                        }
                    }
                }
            }
        }
    }
}

/// Transpose of im2col: scatter-adds patch-matrix rows back into (B,H,W,C).
/// Parallel over batch only; within one image the accumulation order is fixed.
template <typename T>
void col2im(const T* cols, index_t batch, index_t h, index_t w, index_t c,
            index_t d, index_t stride, index_t padding, T* x) {
    const index_t ho = conv_out_extent(h, d, stride, padding);
    const index_t wo = conv_out_extent(w, d, stride, padding);
    const index_t row_len = d * d * c;
    std::fill(x, x + batch * h * w * c, T(0));
#pragma omp parallel for schedule(static)
    for (index_t b = 0; b < batch; ++b) {
        T* img = x + b * h * w * c;
        const T* in = cols + b * ho * wo * row_len;
        for (index_t oh = 0; oh < ho; ++oh) {
            for (index_t ow = 0; ow < wo; ++ow) {
                const T* row = in + (oh * wo + ow) * row_len;
                const index_t h0 = oh * stride - padding;
                const index_t w0 = ow * stride - padding;
                for (index_t kh = 0; kh < d; ++kh) {
                    const index_t ih = h0 + kh;
                    if (ih < 0 || ih >= h) continue;
                    for (index_t kw = 0; kw < d; ++kw) {
                        const index_t iw = w0 + kw;
                        if (iw < 0 || iw >= w) continue;
                        T* dst = img + (ih * w + iw) * c;
                        const T* src = row + (kh * d + kw) * c;
                        for (index_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// 2-D cross-correlation (no kernel flip), the standard CNN convention.
/// x: (H,W,Cin) or batched (B,H,W,Cin); k: (D,D,Cin,Cout).
/// Output: (H~,W~,Cout) with H~ = floor((H+2p-D)/stride)+1, likewise W~.
/// Internally lowered to a patch-matrix product; the nested-loop oracle in the
/// tests is the correctness reference.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, index_t stride, index_t padding) {
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (padding < 0) throw ArgumentError("conv2d: padding must be >= 0");
    if (k.rank() != 4) throw ShapeError("conv2d: kernel must have rank 4 (D,D,Cin,Cout), got " + k.shape().str());
    const bool batched = x.rank() == 4;
    if (!batched && x.rank() != 3)
        throw ShapeError("conv2d: input must have rank 3 (H,W,C) or 4 (B,H,W,C), got " + x.shape().str());

    const index_t b = batched ? x.shape()[0] : 1;
    const index_t h = x.shape()[batched ? 1 : 0];
    const index_t w = x.shape()[batched ? 2 : 1];
    const index_t c = x.shape()[batched ? 3 : 2];
    const index_t d = k.shape()[0];
    if (k.shape()[1] != d) throw ShapeError("conv2d: kernel must be square, got " + k.shape().str());
    if (k.shape()[2] != c)
        throw ShapeError("conv2d: kernel input channels " + std::to_string(k.shape()[2]) +
                         " != input channels " + std::to_string(c));
    if (h + 2 * padding < d || w + 2 * padding < d)
        throw ShapeError("conv2d: kernel larger than padded input");
    const index_t o = k.shape()[3];
    const index_t ho = conv_out_extent(h, d, stride, padding);
    const index_t wo = conv_out_extent(w, d, stride, padding);

    std::vector<T> cols(static_cast<std::size_t>(b * ho * wo * d * d * c));
    detail::im2col(x.data().data(), b, h, w, c, d, stride, padding, cols.data());

    Tensor<T> out{batched ? Shape{b, ho, wo, o} : Shape{ho, wo, o}};
    detail::gemm(cols.data(), k.data().data(), out.data().data(), b * ho * wo, d * d * c, o);
    return out;
}

/// 2x2 max pooling with stride 2, (B,H,W,C) or (H,W,C). `argmax`, when given,
/// receives the flat input offset of each selected element (backward uses it).
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x, std::vector<index_t>* argmax = nullptr) {
    const bool batched = x.rank() == 4;
    if (!batched && x.rank() != 3)
        throw ShapeError("maxpool2x2: input must have rank 3 or 4, got " + x.shape().str());
    const index_t b = batched ? x.shape()[0] : 1;
    const index_t h = x.shape()[batched ? 1 : 0];
    const index_t w = x.shape()[batched ? 2 : 1];
    const index_t c = x.shape()[batched ? 3 : 2];
    if (h < 2 || w < 2) throw ShapeError("maxpool2x2: spatial extent must be >= 2");
    const index_t ho = (h - 2) / 2 + 1;
    const index_t wo = (w - 2) / 2 + 1;

    Tensor<T> out{batched ? Shape{b, ho, wo, c} : Shape{ho, wo, c}};
    if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
    const T* in = x.data().data();
    T* o = out.data().data();
#pragma omp parallel for schedule(static)
    for (index_t bi = 0; bi < b; ++bi) {
        for (index_t oh = 0; oh < ho; ++oh)
            for (index_t ow = 0; ow < wo; ++ow)
                for (index_t ch = 0; ch < c; ++ch) {
                    index_t best = ((bi * h + oh * 2) * w + ow * 2) * c + ch;
                    T best_v = in[best];
                    for (index_t dh = 0; dh < 2; ++dh)
                        for (index_t dw = 0; dw < 2; ++dw) {
                            const index_t idx = ((bi * h + oh * 2 + dh) * w + ow * 2 + dw) * c + ch;
                            if (in[idx] > best_v) { best_v = in[idx]; best = idx; }
                        }
                    const index_t oidx = ((bi * ho + oh) * wo + ow) * c + ch;
                    o[oidx] = best_v;
                    if (argmax) (*argmax)[static_cast<std::size_t>(oidx)] = best;
                }
    }
    return out;
}

} // namespace ntr
