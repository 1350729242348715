#pragma once

#include "ntr/config.hpp"
#include "ntr/network.hpp"

namespace ntr {

/// Instantiates the configured architecture with seeded initialization.
/// Compressed modes build tensor-ring layers from the per-layer specs;
/// original mode builds the dense baselines. Inter-layer activations are relu
/// and pooling is 2x2/stride-2, per the experimental protocol.
template <typename T>
Network<T> build_network(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::vector<ArchLayer>& table = architecture_layers(cfg.arch);
    const bool compressed = cfg.mode != "original";
    const Activation inner = cfg.effective_inner();

    Network<T> net;
    const bool conv_input = table.front().kind == ArchLayer::Kind::Conv;
    if (!conv_input) net.add(FlattenLayer{}); // image batches flatten into (B, pixels)

    bool flattened = !conv_input;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const ArchLayer& a = table[i];
        const std::uint64_t layer_seed = mix_seed(seed, 0x6c617900ull + i);

        if (a.kind == ArchLayer::Kind::Conv) {
            if (compressed) {
                const LayerSpec& spec = cfg.layers[i];
                net.add(NtrConvLayer<T>::random(a.kernel, spec.in_dims, spec.out_dims, spec.rank,
                                                a.stride, a.padding, layer_seed, inner, cfg.use_bias));
            } else {
                net.add(ConvBaselineLayer<T>::random(a.kernel, a.in, a.out, a.stride, a.padding,
                                                     layer_seed, cfg.use_bias));
            }
            net.add(ReluLayer{});
            net.add(MaxPool2Layer{});
        } else {
            if (!flattened) {
                net.add(FlattenLayer{});
                flattened = true;
            }
            if (compressed && a.compressible) {
                const LayerSpec& spec = cfg.layers[i];
                net.add(NtrFcLayer<T>::random(spec.in_dims, spec.out_dims, spec.rank, layer_seed,
                                              inner, cfg.use_bias));
            } else {
                net.add(DenseFcLayer<T>::random(a.in, a.out, layer_seed, cfg.use_bias));
            }
            if (i + 1 < table.size()) net.add(ReluLayer{});
        }
    }
    return net;
}

} // namespace ntr
