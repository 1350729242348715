#pragma once

// Independent nested-loop references. These stay deliberately naive: they are
// what the fast implementations are checked against, so they must not share
// code with them.

#include <vector>

#include "ntr/rng.hpp"
#include "ntr/tr_format.hpp"

namespace oracle {

using ntr::index_t;
using ntr::Rng;
using ntr::Shape;
using ntr::Tensor;

/// Odometer over a dim list; returns false after the last index.
inline bool next_index(std::vector<index_t>& idx, const std::vector<index_t>& dims) {
    for (std::size_t a = idx.size(); a-- > 0;) {
        if (++idx[a] < dims[a]) return true;
        idx[a] = 0;
    }
    return false;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<T> t{std::move(shape)};
    for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
    return t;
}

/// Pairwise contraction by direct summation.
template <typename T>
Tensor<T> contract_loops(const Tensor<T>& a, const std::vector<int>& ma, const Tensor<T>& b,
                         const std::vector<int>& mb) {
    std::vector<int> surv_a, surv_b;
    for (int ax = 0; ax < a.rank(); ++ax)
        if (std::find(ma.begin(), ma.end(), ax) == ma.end()) surv_a.push_back(ax);
    for (int ax = 0; ax < b.rank(); ++ax)
        if (std::find(mb.begin(), mb.end(), ax) == mb.end()) surv_b.push_back(ax);

    std::vector<index_t> out_dims, k_dims;
    for (int ax : surv_a) out_dims.push_back(a.shape()[ax]);
    for (int ax : surv_b) out_dims.push_back(b.shape()[ax]);
    for (int ax : ma) k_dims.push_back(a.shape()[ax]);

    Tensor<T> out{Shape(out_dims)};
    std::vector<index_t> o(out_dims.size(), 0), k(k_dims.size(), 0);
    std::vector<index_t> ia(static_cast<std::size_t>(a.rank()));
    std::vector<index_t> ib(static_cast<std::size_t>(b.rank()));
    index_t flat = 0;
    if (out.size() == 0) return out;
    do {
        double sum = 0.0;
        std::fill(k.begin(), k.end(), 0);
        do {
            for (std::size_t i = 0; i < surv_a.size(); ++i) ia[static_cast<std::size_t>(surv_a[i])] = o[i];
            for (std::size_t i = 0; i < ma.size(); ++i) ia[static_cast<std::size_t>(ma[i])] = k[i];
            for (std::size_t i = 0; i < surv_b.size(); ++i)
                ib[static_cast<std::size_t>(surv_b[i])] = o[surv_a.size() + i];
            for (std::size_t i = 0; i < mb.size(); ++i) ib[static_cast<std::size_t>(mb[i])] = k[i];
            sum += static_cast<double>(a.at(std::span<const index_t>(ia))) *
                   static_cast<double>(b.at(std::span<const index_t>(ib)));
        } while (!k.empty() && next_index(k, k_dims));
        out[flat++] = static_cast<T>(sum);
    } while (next_index(o, out_dims));
    return out;
}

/// Cross-correlation by direct summation; x (H,W,C), k (D,D,C,O).
template <typename T>
Tensor<T> conv2d_loops(const Tensor<T>& x, const Tensor<T>& w, index_t stride, index_t padding) {
    const index_t h = x.shape()[0], wd = x.shape()[1], c = x.shape()[2];
    const index_t d = w.shape()[0], o = w.shape()[3];
    const index_t ho = (h + 2 * padding - d) / stride + 1;
    const index_t wo = (wd + 2 * padding - d) / stride + 1;
    Tensor<T> out{Shape{ho, wo, o}};
    for (index_t oh = 0; oh < ho; ++oh)
        for (index_t ow = 0; ow < wo; ++ow)
            for (index_t oc = 0; oc < o; ++oc) {
                double sum = 0.0;
                for (index_t kh = 0; kh < d; ++kh)
                    for (index_t kw = 0; kw < d; ++kw)
                        for (index_t ic = 0; ic < c; ++ic) {
                            const index_t ih = oh * stride - padding + kh;
                            const index_t iw = ow * stride - padding + kw;
                            if (ih < 0 || ih >= h || iw < 0 || iw >= wd) continue;
                            sum += static_cast<double>(x.at({ih, iw, ic})) *
                                   static_cast<double>(w.at({kh, kw, ic, oc}));
                        }
                out.at({oh, ow, oc}) = static_cast<T>(sum);
            }
    return out;
}

/// Ring reconstruction as the elementwise multi-rank sum.
template <typename T>
Tensor<T> tr_reconstruct_sum(const ntr::TrCores<T>& c) {
    const std::vector<index_t> dims = c.dims();
    const std::vector<index_t> ranks = c.bond_ranks();
    const std::size_t n = c.cores.size();
    Tensor<T> out{Shape(dims)};
    std::vector<index_t> i(n, 0), r(n, 0);
    index_t flat = 0;
    do {
        double sum = 0.0;
        std::fill(r.begin(), r.end(), 0);
        do {
            double prod = 1.0;
            for (std::size_t k = 0; k < n; ++k)
                prod *= static_cast<double>(c.cores[k].at({r[k], i[k], r[(k + 1) % n]}));
            sum += prod;
        } while (next_index(r, ranks));
        out[flat++] = static_cast<T>(sum);
    } while (next_index(i, dims));
    return out;
}

/// Ring reconstruction as the sum over rank tuples of outer products of the
/// cores' middle fibers.
template <typename T>
Tensor<T> tr_reconstruct_outer(const ntr::TrCores<T>& c) {
    const std::vector<index_t> dims = c.dims();
    const std::vector<index_t> ranks = c.bond_ranks();
    const std::size_t n = c.cores.size();
    Tensor<T> acc{Shape(dims)};
    std::vector<index_t> r(n, 0);
    do {
        std::vector<Tensor<T>> fibers;
        for (std::size_t k = 0; k < n; ++k) {
            Tensor<T> f{Shape{dims[k]}};
            for (index_t i = 0; i < dims[k]; ++i) f[i] = c.cores[k].at({r[k], i, r[(k + 1) % n]});
            fibers.push_back(std::move(f));
        }
        Tensor<T> term = n == 1 ? fibers[0] : ntr::outer_product(std::span<const Tensor<T>>(fibers));
        for (index_t j = 0; j < acc.size(); ++j) acc[j] += term[j];
    } while (next_index(r, ranks));
    return acc;
}

/// Chain reconstruction as the elementwise multi-rank sum.
template <typename T>
Tensor<T> tt_reconstruct_sum(const ntr::TtCores<T>& c) {
    std::vector<index_t> dims{c.first.shape()[0]};
    std::vector<index_t> ranks{c.first.shape()[1]};
    for (const auto& g : c.middle) {
        dims.push_back(g.shape()[1]);
        ranks.push_back(g.shape()[2]);
    }
    dims.push_back(c.last.shape()[1]);
    const std::size_t n = dims.size();

    Tensor<T> out{Shape(dims)};
    std::vector<index_t> i(n, 0), r(ranks.size(), 0);
    index_t flat = 0;
    do {
        double sum = 0.0;
        std::fill(r.begin(), r.end(), 0);
        do {
            double prod = static_cast<double>(c.first.at({i[0], r[0]}));
            for (std::size_t k = 0; k < c.middle.size(); ++k)
                prod *= static_cast<double>(c.middle[k].at({r[k], i[k + 1], r[k + 1]}));
            prod *= static_cast<double>(c.last.at({r[ranks.size() - 1], i[n - 1]}));
            sum += prod;
        } while (next_index(r, ranks));
        out[flat++] = static_cast<T>(sum);
    } while (next_index(i, dims));
    return out;
}

/// Dense fully-connected forward y = W^T x by loops; x (B,I), w (I,O).
template <typename T>
Tensor<T> dense_forward_loops(const Tensor<T>& x, const Tensor<T>& w) {
    const index_t b = x.shape()[0], in = w.shape()[0], out_n = w.shape()[1];
    Tensor<T> y{Shape{b, out_n}};
    for (index_t s = 0; s < b; ++s)
        for (index_t o = 0; o < out_n; ++o) {
            double sum = 0.0;
            for (index_t i = 0; i < in; ++i)
                sum += static_cast<double>(x.at({s, i})) * static_cast<double>(w.at({i, o}));
            y.at({s, o}) = static_cast<T>(sum);
        }
    return y;
}

/// Largest |a-b| / max(1, |a|, |b|) over all elements.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (index_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
        m = std::max(m, std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}));
    }
    return m;
}

} // namespace oracle
