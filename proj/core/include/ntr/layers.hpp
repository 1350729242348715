#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntr/autodiff.hpp"
#include "ntr/tr_format.hpp"

namespace ntr {

/// Chain product of 3rd-order cores with the nonlinearity applied after every
/// contraction: f(...f(f(g1 x g2) x g3)...). With f = identity this is the
/// plain chain product. Result shape (R_first, d_1,...,d_k, R_last).
template <typename T>
Tensor<T> assemble_factorized_core(std::span<const Tensor<T>> cores, Activation f) {
    if (cores.empty()) throw StructureError("assemble_factorized_core: no cores");
    for (const auto& c : cores)
        if (c.rank() != 3) throw StructureError("assemble_factorized_core: cores must be 3rd-order");
    Tensor<T> acc = cores[0];
    for (std::size_t k = 1; k < cores.size(); ++k) {
        if (acc.shape()[acc.rank() - 1] != cores[k].shape()[0])
            throw StructureError("assemble_factorized_core: bond mismatch before core " + std::to_string(k));
        acc = contract(acc, {static_cast<int>(acc.rank()) - 1}, cores[k], {0});
        acc = apply_activation(acc, f);
    }
    return acc;
}

template <typename T>
Tensor<T> assemble_factorized_core(const Tensor<T>& g1, const Tensor<T>& g2, const Tensor<T>& g3,
                                   Activation f) {
    const Tensor<T> cs[3] = {g1, g2, g3};
    return assemble_factorized_core(std::span<const Tensor<T>>(cs, 3), f);
}

/// Named pointer to one trainable tensor; the network registry hands these to
/// the optimizer and the checkpoint writer in a fixed order.
template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
};

/// Tensor-ring fully-connected layer with a nonlinearity after every inner
/// contraction except the final ring-closing one. With inner == Identity this
/// is the plain TR layer (same code path), equal to y = W^T x for the
/// reconstructed weight.
template <typename T>
struct NtrFcLayer {
    using Var = typename Tape<T>::Var;

    std::vector<index_t> in_dims;   // I_1..I_N, prod = I
    std::vector<index_t> out_dims;  // O_1..O_M, prod = O
    TrCores<T> cores;               // N+M cores over in_dims ++ out_dims
    Activation inner = Activation::Tanh;
    std::optional<Tensor<T>> bias;  // (O)

    static NtrFcLayer random(std::vector<index_t> in_dims, std::vector<index_t> out_dims, index_t rank,
                             std::uint64_t seed, Activation inner, bool with_bias) {
        NtrFcLayer l;
        l.in_dims = std::move(in_dims);
        l.out_dims = std::move(out_dims);
        l.inner = inner;
        std::vector<index_t> dims(l.in_dims);
        dims.insert(dims.end(), l.out_dims.begin(), l.out_dims.end());
        const std::vector<index_t> ranks(dims.size(), rank);
        l.cores = random_init<T>(dims, ranks, seed, ScalePolicy::glorot(l.input_size(), l.output_size()));
        if (with_bias) l.bias = Tensor<T>{Shape{l.output_size()}};
        l.validate();
        return l;
    }

    index_t input_size() const {
        index_t n = 1;
        for (index_t d : in_dims) n *= d;
        return n;
    }
    index_t output_size() const {
        index_t n = 1;
        for (index_t d : out_dims) n *= d;
        return n;
    }

    void validate() const {
        if (in_dims.empty() || out_dims.empty())
            throw StructureError("NtrFcLayer: in_dims and out_dims must be non-empty");
        cores.validate();
        const std::size_t n = in_dims.size(), m = out_dims.size();
        if (cores.cores.size() != n + m)
            throw StructureError("NtrFcLayer: expected " + std::to_string(n + m) + " cores, got " +
                                 std::to_string(cores.cores.size()));
        for (std::size_t k = 0; k < n + m; ++k) {
            const index_t want = k < n ? in_dims[k] : out_dims[k - n];
            if (cores.cores[k].shape()[1] != want)
                throw StructureError("NtrFcLayer: core " + std::to_string(k) + " carries dim " +
                                     std::to_string(cores.cores[k].shape()[1]) + ", expected " +
                                     std::to_string(want));
        }
        if (bias && bias->size() != output_size())
            throw StructureError("NtrFcLayer: bias length mismatch");
    }

    index_t weight_param_count() const { return cores.param_count(); }
    index_t bias_param_count() const { return bias ? bias->size() : 0; }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        for (std::size_t k = 0; k < cores.cores.size(); ++k)
            out.push_back({prefix + "/core" + std::to_string(k), &cores.cores[k]});
        if (bias) out.push_back({prefix + "/bias", &*bias});
    }
    index_t num_params() const { return static_cast<index_t>(cores.cores.size()) + (bias ? 1 : 0); }

    /// x: (B, I) or (I). params: core vars in order, then bias var if any.
    Var forward(Tape<T>& tape, Var x, std::span<const Var> params) const {
        const bool batched = tape.value(x).rank() == 2;
        if (!batched && tape.value(x).rank() != 1)
            throw ShapeError("NtrFcLayer: input must be (B,I) or (I)");
        if (tape.value(x).shape()[batched ? 1 : 0] != input_size())
            throw ShapeError("NtrFcLayer: input length " +
                             std::to_string(tape.value(x).shape()[batched ? 1 : 0]) + " != " +
                             std::to_string(input_size()));
        const index_t b = batched ? tape.value(x).shape()[0] : 1;
        const int n = static_cast<int>(in_dims.size());
        const int m = static_cast<int>(out_dims.size());

        std::vector<index_t> xdims{b};
        xdims.insert(xdims.end(), in_dims.begin(), in_dims.end());
        Var t = tape.reshape(x, Shape(std::move(xdims)));

        // Input half of the ring: consume i_k and the trailing bond.
        for (int k = 0; k < n; ++k) {
            const int rank_t = static_cast<int>(tape.value(t).rank());
            if (k == 0)
                t = tape.contract(t, params[0], {1}, {1});
            else
                t = tape.contract(t, params[static_cast<std::size_t>(k)], {1, rank_t - 1}, {1, 0});
            t = tape.activation(t, inner); // never last: the output half follows
        }
        // Output half: grow o_j, consume the trailing bond; the final core
        // also closes the ring over R_1 and takes no activation after it.
        for (int j = 0; j < m - 1; ++j) {
            const int rank_t = static_cast<int>(tape.value(t).rank());
            t = tape.contract(t, params[static_cast<std::size_t>(n + j)], {rank_t - 1}, {0});
            t = tape.activation(t, inner);
        }
        {
            const int rank_t = static_cast<int>(tape.value(t).rank());
            t = tape.contract(t, params[static_cast<std::size_t>(n + m - 1)], {1, rank_t - 1}, {2, 0});
        }
        t = tape.reshape(t, batched ? Shape{b, output_size()} : Shape{output_size()});
        if (bias) t = tape.add_bias(t, params[static_cast<std::size_t>(n + m)]);
        return t;
    }

    /// Convenience forward without gradient bookkeeping.
    Tensor<T> forward(const Tensor<T>& x) const {
        Tape<T> tape;
        std::vector<Var> vars = bind_const(tape);
        Tensor<T> out = tape.value(forward(tape, tape.leaf(x), vars));
        if (!out.all_finite()) throw NumericError("NtrFcLayer: non-finite output");
        return out;
    }

    /// Dense (I, O) weight via ring reconstruction; the identity-activation
    /// oracle in the tests compares forward() against this.
    Tensor<T> reconstruct_weight() const {
        Tensor<T> w = tr_reconstruct(cores); // (I_1..I_N, O_1..O_M)
        return ntr::reshape(w, Shape{input_size(), output_size()});
    }

    std::vector<Var> bind_const(Tape<T>& tape) const {
        std::vector<Var> vars;
        for (const auto& c : cores.cores) vars.push_back(tape.leaf(c));
        if (bias) vars.push_back(tape.leaf(*bias));
        return vars;
    }
};

/// Tensor-ring convolutional layer. The ring is V (R1,D,D,R2) -> input cores
/// (R2 ... R3) -> output cores (R3 ... R1). Forward runs the three-stage
/// procedure: channel contraction with the assembled input core, grouped
/// cross-correlation with the permuted kernel core, and the ring-closing
/// contraction with the assembled output core; the inner nonlinearity fires
/// after the first two stages only.
template <typename T>
struct NtrConvLayer {
    using Var = typename Tape<T>::Var;

    index_t kernel = 3; // D
    std::vector<index_t> in_dims;   // channel factorization, prod = I
    std::vector<index_t> out_dims;  // prod = O
    Tensor<T> kernel_core;          // V: (R1, D, D, R2)
    std::vector<Tensor<T>> in_cores;
    std::vector<Tensor<T>> out_cores;
    index_t stride = 1;
    index_t padding = 0;
    Activation inner = Activation::Tanh;
    /// Assemble the input side with the nonlinear chain (only meaningful when
    /// it is stored as more than one core).
    bool factorized_input = true;
    /// The output side assembles as a plain chain product unless enabled.
    bool nonlinear_output_assembly = false;
    std::optional<Tensor<T>> bias; // (O)

    static NtrConvLayer random(index_t kernel, std::vector<index_t> in_dims,
                               std::vector<index_t> out_dims, index_t rank, index_t stride,
                               index_t padding, std::uint64_t seed, Activation inner, bool with_bias) {
        NtrConvLayer l;
        l.kernel = kernel;
        l.in_dims = std::move(in_dims);
        l.out_dims = std::move(out_dims);
        l.stride = stride;
        l.padding = padding;
        l.inner = inner;

        const index_t i = l.input_channels(), o = l.output_channels();
        const std::size_t n_cores = 1 + l.in_dims.size() + l.out_dims.size();
        const std::vector<index_t> ranks(n_cores, rank);
        const double sd =
            ScalePolicy::glorot(kernel * kernel * i, kernel * kernel * o).core_std(ranks);
        std::size_t core_idx = 0;
        auto gaussian = [&](Shape shape) {
            Rng rng(mix_seed(seed, core_idx++));
            Tensor<T> t{std::move(shape)};
            for (auto& v : t.data()) v = static_cast<T>(sd * rng.normal());
            return t;
        };
        l.kernel_core = gaussian(Shape{rank, kernel, kernel, rank});
        for (index_t d : l.in_dims) l.in_cores.push_back(gaussian(Shape{rank, d, rank}));
        for (index_t d : l.out_dims) l.out_cores.push_back(gaussian(Shape{rank, d, rank}));
        if (with_bias) l.bias = Tensor<T>{Shape{o}};
        l.validate();
        return l;
    }

    index_t input_channels() const {
        index_t n = 1;
        for (index_t d : in_dims) n *= d;
        return n;
    }
    index_t output_channels() const {
        index_t n = 1;
        for (index_t d : out_dims) n *= d;
        return n;
    }

    void validate() const {
        if (in_dims.empty() || out_dims.empty())
            throw StructureError("NtrConvLayer: in_dims and out_dims must be non-empty");
        if (kernel_core.rank() != 4 || kernel_core.shape()[1] != kernel || kernel_core.shape()[2] != kernel)
            throw StructureError("NtrConvLayer: kernel core must be (R1,D,D,R2)");
        if (in_cores.size() != in_dims.size() || out_cores.size() != out_dims.size())
            throw StructureError("NtrConvLayer: core count does not match dim factorization");
        index_t bond = kernel_core.shape()[3]; // R2
        auto walk = [&bond](const std::vector<Tensor<T>>& cs, const std::vector<index_t>& dims,
                            const char* side) {
            for (std::size_t k = 0; k < cs.size(); ++k) {
                if (cs[k].rank() != 3)
                    throw StructureError(std::string("NtrConvLayer: ") + side + " core " +
                                         std::to_string(k) + " must be 3rd-order");
                if (cs[k].shape()[0] != bond)
                    throw StructureError(std::string("NtrConvLayer: ring bond mismatch at ") + side +
                                         " core " + std::to_string(k));
                if (cs[k].shape()[1] != dims[k])
                    throw StructureError(std::string("NtrConvLayer: ") + side + " core " +
                                         std::to_string(k) + " carries wrong dim");
                bond = cs[k].shape()[2];
            }
        };
        walk(in_cores, in_dims, "input");
        walk(out_cores, out_dims, "output");
        if (bond != kernel_core.shape()[0])
            throw StructureError("NtrConvLayer: ring does not close (last bond " + std::to_string(bond) +
                                 " vs R1 " + std::to_string(kernel_core.shape()[0]) + ")");
        if (bias && bias->size() != output_channels())
            throw StructureError("NtrConvLayer: bias length mismatch");
    }

    index_t weight_param_count() const {
        index_t n = kernel_core.size();
        for (const auto& c : in_cores) n += c.size();
        for (const auto& c : out_cores) n += c.size();
        return n;
    }
    index_t bias_param_count() const { return bias ? bias->size() : 0; }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "/kernel_core", &kernel_core});
        for (std::size_t k = 0; k < in_cores.size(); ++k)
            out.push_back({prefix + "/in_core" + std::to_string(k), &in_cores[k]});
        for (std::size_t k = 0; k < out_cores.size(); ++k)
            out.push_back({prefix + "/out_core" + std::to_string(k), &out_cores[k]});
        if (bias) out.push_back({prefix + "/bias", &*bias});
    }
    index_t num_params() const {
        return 1 + static_cast<index_t>(in_cores.size() + out_cores.size()) + (bias ? 1 : 0);
    }

    /// x: (B,H,W,I) or (H,W,I). params: kernel core, input cores, output
    /// cores, then bias if any.
    Var forward(Tape<T>& tape, Var x, std::span<const Var> params) const {
        const bool batched = tape.value(x).rank() == 4;
        if (!batched && tape.value(x).rank() != 3)
            throw ShapeError("NtrConvLayer: input must be (B,H,W,C) or (H,W,C)");
        Var xb = batched ? x
                         : tape.reshape(x, Shape{1, tape.value(x).shape()[0], tape.value(x).shape()[1],
                                                 tape.value(x).shape()[2]});
        const index_t b = tape.value(xb).shape()[0];
        const index_t h = tape.value(xb).shape()[1];
        const index_t w = tape.value(xb).shape()[2];
        if (tape.value(xb).shape()[3] != input_channels())
            throw ShapeError("NtrConvLayer: input channels " + std::to_string(tape.value(xb).shape()[3]) +
                             " != " + std::to_string(input_channels()));

        const index_t r1 = kernel_core.shape()[0];
        const index_t r2 = kernel_core.shape()[3];
        const index_t r3 = out_cores.front().shape()[0];

        // Assembled input core U: (R2, I, R3).
        Var u = assemble(tape, params.subspan(1, in_cores.size()),
                         factorized_input ? inner : Activation::Identity);
        u = tape.reshape(u, Shape{r2, input_channels(), r3});

        // Stage 1: consume input channels. Z1: (B,H,W,R2,R3).
        Var z1 = tape.activation(tape.contract(xb, u, {3}, {1}), inner);

        // Stage 2: grouped cross-correlation with the permuted kernel core.
        // R3 rides along as a batch-like group; R2 is consumed as channels.
        Var z1g = tape.reshape(tape.permute(z1, {0, 4, 1, 2, 3}), Shape{b * r3, h, w, r2});
        Var vp = tape.permute(params[0], {1, 2, 3, 0}); // (D,D,R2,R1)
        Var z2 = tape.activation(tape.conv2d(z1g, vp, stride, padding), inner);
        const index_t ho = tape.value(z2).shape()[1];
        const index_t wo = tape.value(z2).shape()[2];
        Var z2g = tape.reshape(z2, Shape{b, r3, ho, wo, r1});

        // Stage 3: close the ring over (R1, R3); no activation afterwards.
        Var ut = assemble(tape, params.subspan(1 + in_cores.size(), out_cores.size()),
                          nonlinear_output_assembly ? inner : Activation::Identity);
        ut = tape.reshape(ut, Shape{r3, output_channels(), r1});
        Var y = tape.contract(z2g, ut, {1, 4}, {0, 2}); // (B,Ho,Wo,O)

        if (bias) y = tape.add_bias(y, params[params.size() - 1]);
        if (!batched) y = tape.reshape(y, Shape{ho, wo, output_channels()});
        return y;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tape<T> tape;
        std::vector<Var> vars = bind_const(tape);
        Tensor<T> out = tape.value(forward(tape, tape.leaf(x), vars));
        if (!out.all_finite()) throw NumericError("NtrConvLayer: non-finite output");
        return out;
    }

    /// Dense (D,D,I,O) kernel from the ring; the identity-activation oracle
    /// compares forward() against conv2d with this kernel.
    Tensor<T> reconstruct_kernel() const {
        Tensor<T> u = assemble_factorized_core(std::span<const Tensor<T>>(in_cores), Activation::Identity);
        u = ntr::reshape(u, Shape{kernel_core.shape()[3], input_channels(), out_cores.front().shape()[0]});
        Tensor<T> ut = assemble_factorized_core(std::span<const Tensor<T>>(out_cores), Activation::Identity);
        ut = ntr::reshape(ut, Shape{out_cores.front().shape()[0], output_channels(), kernel_core.shape()[0]});
        Tensor<T> t = contract(kernel_core, {3}, u, {0});  // (R1,D,D,I,R3)
        return contract(t, {0, 4}, ut, {2, 0});            // (D,D,I,O)
    }

    std::vector<Var> bind_const(Tape<T>& tape) const {
        std::vector<Var> vars;
        vars.push_back(tape.leaf(kernel_core));
        for (const auto& c : in_cores) vars.push_back(tape.leaf(c));
        for (const auto& c : out_cores) vars.push_back(tape.leaf(c));
        if (bias) vars.push_back(tape.leaf(*bias));
        return vars;
    }

private:
    static Var assemble(Tape<T>& tape, std::span<const Var> cores, Activation f) {
        Var acc = cores[0];
        for (std::size_t k = 1; k < cores.size(); ++k) {
            const int last = static_cast<int>(tape.value(acc).rank()) - 1;
            acc = tape.contract(acc, cores[k], {last}, {0});
            acc = tape.activation(acc, f);
        }
        return acc;
    }
};

/// Plain fully-connected layer, the "Original" rows of the tables.
template <typename T>
struct DenseFcLayer {
    using Var = typename Tape<T>::Var;

    Tensor<T> weight; // (I, O); y = W^T x
    std::optional<Tensor<T>> bias;

    static DenseFcLayer random(index_t in, index_t out, std::uint64_t seed, bool with_bias) {
        DenseFcLayer l;
        l.weight = Tensor<T>{Shape{in, out}};
        Rng rng(mix_seed(seed, 0xfc));
        const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
        for (auto& v : l.weight.data()) v = static_cast<T>(sd * rng.normal());
        if (with_bias) l.bias = Tensor<T>{Shape{out}};
        return l;
    }

    index_t input_size() const { return weight.shape()[0]; }
    index_t output_size() const { return weight.shape()[1]; }
    index_t weight_param_count() const { return weight.size(); }
    index_t bias_param_count() const { return bias ? bias->size() : 0; }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "/weight", &weight});
        if (bias) out.push_back({prefix + "/bias", &*bias});
    }
    index_t num_params() const { return 1 + (bias ? 1 : 0); }

    Var forward(Tape<T>& tape, Var x, std::span<const Var> params) const {
        const bool batched = tape.value(x).rank() == 2;
        Var y = batched ? tape.contract(x, params[0], {1}, {0})
                        : tape.contract(x, params[0], {0}, {0});
        if (bias) y = tape.add_bias(y, params[1]);
        return y;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tape<T> tape;
        std::vector<Var> vars;
        vars.push_back(tape.leaf(weight));
        if (bias) vars.push_back(tape.leaf(*bias));
        return tape.value(forward(tape, tape.leaf(x), vars));
    }
};

/// Plain convolutional layer.
template <typename T>
struct ConvBaselineLayer {
    using Var = typename Tape<T>::Var;

    Tensor<T> weight; // (D,D,C,O)
    std::optional<Tensor<T>> bias;
    index_t stride = 1;
    index_t padding = 0;

    static ConvBaselineLayer random(index_t kernel, index_t in_ch, index_t out_ch, index_t stride,
                                    index_t padding, std::uint64_t seed, bool with_bias) {
        ConvBaselineLayer l;
        l.weight = Tensor<T>{Shape{kernel, kernel, in_ch, out_ch}};
        l.stride = stride;
        l.padding = padding;
        Rng rng(mix_seed(seed, 0xc0));
        const double fan = static_cast<double>(kernel * kernel * (in_ch + out_ch));
        const double sd = std::sqrt(2.0 / fan);
        for (auto& v : l.weight.data()) v = static_cast<T>(sd * rng.normal());
        if (with_bias) l.bias = Tensor<T>{Shape{out_ch}};
        return l;
    }

    index_t weight_param_count() const { return weight.size(); }
    index_t bias_param_count() const { return bias ? bias->size() : 0; }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "/kernel", &weight});
        if (bias) out.push_back({prefix + "/bias", &*bias});
    }
    index_t num_params() const { return 1 + (bias ? 1 : 0); }

    Var forward(Tape<T>& tape, Var x, std::span<const Var> params) const {
        const bool batched = tape.value(x).rank() == 4;
        Var xb = batched ? x
                         : tape.reshape(x, Shape{1, tape.value(x).shape()[0], tape.value(x).shape()[1],
                                                 tape.value(x).shape()[2]});
        Var y = tape.conv2d(xb, params[0], stride, padding);
        if (bias) y = tape.add_bias(y, params[1]);
        if (!batched) {
            const Shape& s = tape.value(y).shape();
            y = tape.reshape(y, Shape{s[1], s[2], s[3]});
        }
        return y;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tape<T> tape;
        std::vector<Var> vars;
        vars.push_back(tape.leaf(weight));
        if (bias) vars.push_back(tape.leaf(*bias));
        return tape.value(forward(tape, tape.leaf(x), vars));
    }
};

} // namespace ntr
