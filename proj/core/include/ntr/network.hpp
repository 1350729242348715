#pragma once

#include <variant>
#include <vector>

#include "ntr/layers.hpp"

namespace ntr {

/// Stateless inter-layer pieces.
struct ReluLayer {};
struct MaxPool2Layer {};
struct FlattenLayer {};

/// A feed-forward stack of compressed/baseline layers and the glue between
/// them. Owns all trainable tensors; each training step re-registers them as
/// tape leaves so one tape serves exactly one forward/backward pass.
template <typename T>
class Network {
public:
    using Var = typename Tape<T>::Var;
    using Layer = std::variant<DenseFcLayer<T>, NtrFcLayer<T>, ConvBaselineLayer<T>, NtrConvLayer<T>,
                               ReluLayer, MaxPool2Layer, FlattenLayer>;

    void add(Layer l) { layers_.push_back(std::move(l)); }

    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    Layer& layer(std::size_t i) { return layers_[i]; }

    /// Named references to every trainable tensor, in forward order.
    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> refs;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const std::string prefix = "layer" + std::to_string(i);
            std::visit(
                [&](auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (requires(L& x, std::vector<ParamRef<T>>& v) { x.collect_params(v, prefix); })
                        l.collect_params(refs, prefix);
                },
                layers_[i]);
        }
        return refs;
    }

    index_t weight_param_count() const {
        index_t n = 0;
        for (const auto& lay : layers_)
            std::visit(
                [&](const auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (requires(const L& x) { x.weight_param_count(); })
                        n += l.weight_param_count();
                },
                lay);
        return n;
    }

    index_t bias_param_count() const {
        index_t n = 0;
        for (const auto& lay : layers_)
            std::visit(
                [&](const auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (requires(const L& x) { x.bias_param_count(); })
                        n += l.bias_param_count();
                },
                lay);
        return n;
    }

    struct ForwardResult {
        Var output;
        std::vector<Var> param_vars; // aligned with params()
    };

    /// Registers all parameters on the tape (as grad-requiring leaves when
    /// `train`) and runs the stack.
    ForwardResult forward(Tape<T>& tape, Var input, bool train = true) {
        ForwardResult res;
        Var x = input;
        for (auto& lay : layers_) {
            std::visit(
                [&](auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<L, ReluLayer>) {
                        x = tape.activation(x, Activation::Relu);
                    } else if constexpr (std::is_same_v<L, MaxPool2Layer>) {
                        x = tape.maxpool2(x);
                    } else if constexpr (std::is_same_v<L, FlattenLayer>) {
                        const Shape& s = tape.value(x).shape();
                        x = tape.reshape(x, Shape{s[0], tape.value(x).size() / s[0]});
                    } else {
                        std::vector<ParamRef<T>> refs;
                        l.collect_params(refs, "");
                        std::vector<Var> vars;
                        vars.reserve(refs.size());
                        for (auto& r : refs) {
                            Var v = tape.leaf(*r.tensor, train);
                            vars.push_back(v);
                            res.param_vars.push_back(v);
                        }
                        x = l.forward(tape, x, vars);
                    }
                },
                lay);
        }
        res.output = x;
        return res;
    }

    /// Logits without gradient bookkeeping.
    Tensor<T> predict(const Tensor<T>& input) {
        Tape<T> tape;
        return tape.value(forward(tape, tape.leaf(input), /*train=*/false).output);
    }

private:
    std::vector<Layer> layers_;
};

/// Fraction of rows whose argmax logit matches the label.
template <typename T>
double accuracy(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.shape()[0] != static_cast<index_t>(labels.size()))
        throw ShapeError("accuracy: logits/labels mismatch");
    const index_t b = logits.shape()[0], c = logits.shape()[1];
    index_t hits = 0;
    for (index_t i = 0; i < b; ++i) {
        const T* row = logits.data().data() + i * c;
        index_t best = 0;
        for (index_t j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

} // namespace ntr
