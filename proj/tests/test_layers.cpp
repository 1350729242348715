#include <doctest.h>

#include "ntr/layers.hpp"
#include "ntr/network.hpp"
#include "oracles.hpp"

using namespace ntr;
using oracle::max_rel_diff;
using Var = Tape<double>::Var;

TEST_SUITE("layers") {

TEST_CASE("identity-activation ntr-fc equals the reconstructed dense layer") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        NtrFcLayer<double> layer =
            NtrFcLayer<double>::random({2, 3}, {2, 2}, 2, 100 + trial, Activation::Identity, false);
        Tensor<double> x = oracle::random_tensor<double>(Shape{4, 6}, rng);
        Tensor<double> got = layer.forward(x);
        Tensor<double> want = oracle::dense_forward_loops(x, layer.reconstruct_weight());
        CHECK(max_rel_diff(got, want) < 1e-10);
    }
}

TEST_CASE("all-zero cores give zero output for activations fixing zero") {
    for (Activation f : {Activation::Identity, Activation::Tanh, Activation::Relu}) {
        NtrFcLayer<double> layer;
        layer.in_dims = {2, 2};
        layer.out_dims = {3};
        layer.inner = f;
        std::vector<Tensor<double>> cores;
        cores.emplace_back(Shape{2, 2, 2});
        cores.emplace_back(Shape{2, 2, 2});
        cores.emplace_back(Shape{2, 3, 2});
        layer.cores = TrCores<double>(std::move(cores));
        Rng rng(5);
        Tensor<double> x = oracle::random_tensor<double>(Shape{2, 4}, rng);
        Tensor<double> y = layer.forward(x);
        for (index_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
    }
}

TEST_CASE("ntr-fc accepts the 57x layer-1 shapes") {
    NtrFcLayer<double> layer =
        NtrFcLayer<double>::random({4, 7, 4, 7}, {4, 8, 4, 8}, 16, 1, Activation::Tanh, true);
    CHECK(layer.input_size() == 784);
    CHECK(layer.output_size() == 1024);
    CHECK(layer.weight_param_count() == tr_param_count_fc({4, 7, 4, 7}, {4, 8, 4, 8}, 16));
    Rng rng(7);
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, 784}, rng, 0.5);
    Tensor<double> y = layer.forward(x);
    CHECK(y.shape() == Shape{2, 1024});
    CHECK(y.all_finite());
}

TEST_CASE("ntr-fc input validation and single-sample path") {
    NtrFcLayer<double> layer = NtrFcLayer<double>::random({2, 2}, {3}, 2, 9, Activation::Tanh, false);
    Rng rng(9);
    Tensor<double> bad = oracle::random_tensor<double>(Shape{2, 5}, rng);
    CHECK_THROWS_AS(layer.forward(bad), ShapeError);

    Tensor<double> batch = oracle::random_tensor<double>(Shape{1, 4}, rng);
    Tensor<double> single{Shape{4}};
    for (index_t i = 0; i < 4; ++i) single[i] = batch[i];
    Tensor<double> yb = layer.forward(batch);
    Tensor<double> ys = layer.forward(single);
    CHECK(ys.shape() == Shape{3});
    for (index_t i = 0; i < 3; ++i) CHECK(ys[i] == yb[i]); // identical code path, bit-exact
}

TEST_CASE("inner activation fires exactly N+M-1 times in ntr-fc") {
    NtrFcLayer<double> layer =
        NtrFcLayer<double>::random({2, 3, 2}, {2, 2}, 2, 11, Activation::Tanh, true);
    Rng rng(11);
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, 12}, rng);
    Tape<double> tape;
    auto vars = layer.bind_const(tape);
    layer.forward(tape, tape.leaf(x), vars);
    CHECK(tape.activation_applications() == 4); // N + M - 1 = 3 + 2 - 1
}

TEST_CASE("trn mode is ntrn with identity inside, bit-exactly") {
    NtrFcLayer<double> ntrn = NtrFcLayer<double>::random({2, 2}, {2, 2}, 3, 21, Activation::Tanh, true);
    for (index_t i = 0; i < ntrn.bias->size(); ++i) (*ntrn.bias)[i] = 0.1 * static_cast<double>(i + 1);
    NtrFcLayer<double> trn = ntrn;
    trn.inner = Activation::Identity;
    Rng rng(13);
    Tensor<double> x = oracle::random_tensor<double>(Shape{3, 4}, rng);
    // Same cores, same code path; only the pointwise map differs.
    Tensor<double> a = ntrn.forward(x);
    Tensor<double> b = trn.forward(x);
    CHECK(a.shape() == b.shape());
    // And the identity run equals the dense oracle while the tanh run does not.
    Tensor<double> dense = oracle::dense_forward_loops(x, trn.reconstruct_weight());
    Tensor<double> bias_bcast{dense.shape()};
    for (index_t r = 0; r < dense.shape()[0]; ++r)
        for (index_t c = 0; c < dense.shape()[1]; ++c)
            bias_bcast.at({r, c}) = dense.at({r, c}) + (*trn.bias)[c];
    CHECK(max_rel_diff(b, bias_bcast) < 1e-10);
}

TEST_CASE("identity-activation ntr-conv equals conv2d with the reconstructed kernel") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        NtrConvLayer<double> layer =
            NtrConvLayer<double>::random(3, {2, 2}, {4}, 2, 1, 0, 300 + trial, Activation::Identity,
                                         false);
        Tensor<double> x = oracle::random_tensor<double>(Shape{6, 6, 4}, rng);
        Tensor<double> got = layer.forward(x);
        Tensor<double> want = oracle::conv2d_loops(x, layer.reconstruct_kernel(), 1, 0);
        CHECK(got.shape() == want.shape());
        CHECK(max_rel_diff(got, want) < 1e-10);
    }
}

TEST_CASE("identity-activation ntr-conv with stride, padding and batching") {
    Rng rng(19);
    NtrConvLayer<double> layer =
        NtrConvLayer<double>::random(3, {3}, {2, 2}, 2, 2, 1, 77, Activation::Identity, false);
    Tensor<double> xb = oracle::random_tensor<double>(Shape{2, 7, 6, 3}, rng);
    Tensor<double> got = layer.forward(xb);
    Tensor<double> kernel = layer.reconstruct_kernel();
    for (index_t s = 0; s < 2; ++s) {
        Tensor<double> x{Shape{7, 6, 3}};
        std::copy(xb.data().begin() + s * x.size(), xb.data().begin() + (s + 1) * x.size(),
                  x.data().begin());
        Tensor<double> want = oracle::conv2d_loops(x, kernel, 2, 1);
        Tensor<double> slice{want.shape()};
        std::copy(got.data().begin() + s * want.size(), got.data().begin() + (s + 1) * want.size(),
                  slice.data().begin());
        CHECK(max_rel_diff(slice, want) < 1e-10);
    }
}

TEST_CASE("rank-1 unit ring with 1x1 kernel scales channels") {
    // V, U, Ut all ones at rank 1: W(0,0,i,o) = 1, so the output is the
    // channel sum replicated over output channels.
    NtrConvLayer<double> layer;
    layer.kernel = 1;
    layer.in_dims = {2};
    layer.out_dims = {3};
    layer.kernel_core = Tensor<double>::full(Shape{1, 1, 1, 1}, 1.0);
    layer.in_cores.push_back(Tensor<double>::full(Shape{1, 2, 1}, 1.0));
    layer.out_cores.push_back(Tensor<double>::full(Shape{1, 3, 1}, 1.0));
    layer.inner = Activation::Identity;
    layer.validate();
    Rng rng(23);
    Tensor<double> x = oracle::random_tensor<double>(Shape{4, 4, 2}, rng);
    Tensor<double> y = layer.forward(x);
    for (index_t h = 0; h < 4; ++h)
        for (index_t w = 0; w < 4; ++w)
            for (index_t o = 0; o < 3; ++o)
                CHECK(y.at({h, w, o}) ==
                      doctest::Approx(x.at({h, w, 0}) + x.at({h, w, 1})).epsilon(1e-12));
}

TEST_CASE("cnn layer-2 shapes are accepted") {
    NtrConvLayer<double> layer =
        NtrConvLayer<double>::random(3, {4, 4}, {4, 8}, 6, 1, 0, 5, Activation::Tanh, true);
    CHECK(layer.input_channels() == 16);
    CHECK(layer.output_channels() == 32);
    CHECK(layer.weight_param_count() == tr_param_count_conv(3, {4, 4}, {4, 8}, 6));
    Rng rng(29);
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, 13, 13, 16}, rng, 0.5);
    Tensor<double> y = layer.forward(x);
    CHECK(y.shape() == Shape{2, 11, 11, 32});
    CHECK(y.all_finite());
}

TEST_CASE("inner activation fires exactly twice in the non-factorized conv forward") {
    NtrConvLayer<double> layer =
        NtrConvLayer<double>::random(3, {3}, {4}, 2, 1, 0, 31, Activation::Tanh, false);
    REQUIRE(layer.in_cores.size() == 1);
    Rng rng(31);
    Tensor<double> x = oracle::random_tensor<double>(Shape{1, 5, 5, 3}, rng);
    Tape<double> tape;
    auto vars = layer.bind_const(tape);
    layer.forward(tape, tape.leaf(x), vars);
    CHECK(tape.activation_applications() == 2);
}

TEST_CASE("factorized input side adds one activation per extra core") {
    NtrConvLayer<double> layer =
        NtrConvLayer<double>::random(3, {2, 2, 2}, {4}, 2, 1, 0, 33, Activation::Tanh, false);
    REQUIRE(layer.in_cores.size() == 3);
    Rng rng(33);
    Tensor<double> x = oracle::random_tensor<double>(Shape{1, 5, 5, 8}, rng);
    Tape<double> tape;
    auto vars = layer.bind_const(tape);
    layer.forward(tape, tape.leaf(x), vars);
    CHECK(tape.activation_applications() == 4); // 2 stages + 2 assembly contractions
}

TEST_CASE("assemble_factorized_core") {
    Rng rng(37);
    Tensor<double> g1 = oracle::random_tensor<double>(Shape{2, 3, 2}, rng);
    Tensor<double> g2 = oracle::random_tensor<double>(Shape{2, 4, 3}, rng);
    Tensor<double> g3 = oracle::random_tensor<double>(Shape{3, 2, 2}, rng);

    SUBCASE("identity equals the plain chain contraction") {
        Tensor<double> got = assemble_factorized_core(g1, g2, g3, Activation::Identity);
        CHECK(got.shape() == Shape{2, 3, 4, 2, 2});
        Tensor<double> want = oracle::contract_loops(oracle::contract_loops(g1, {2}, g2, {0}),
                                                     std::vector<int>{3}, g3, std::vector<int>{0});
        CHECK(max_rel_diff(got, want) < 1e-12);
    }

    SUBCASE("delta cores pass g1 through") {
        // g2, g3 as Kronecker deltas over the bond: result(r,i,j,k,s) =
        // g1(r,i,s') routed through identity links. Use bond-2 deltas with
        // dim 1 so the chain just relabels.
        Tensor<double> d2{Shape{2, 1, 2}};
        d2.at({0, 0, 0}) = 1.0;
        d2.at({1, 0, 1}) = 1.0;
        Tensor<double> d3{Shape{2, 1, 2}};
        d3.at({0, 0, 0}) = 1.0;
        d3.at({1, 0, 1}) = 1.0;
        Tensor<double> got = assemble_factorized_core(g1, d2, d3, Activation::Identity);
        CHECK(got.shape() == Shape{2, 3, 1, 1, 2});
        for (index_t r = 0; r < 2; ++r)
            for (index_t i = 0; i < 3; ++i)
                for (index_t s = 0; s < 2; ++s)
                    CHECK(got.at({r, i, 0, 0, s}) == doctest::Approx(g1.at({r, i, s})).epsilon(1e-12));
    }

    SUBCASE("zero cores give a zero tensor under zero-fixing activations") {
        Tensor<double> z1{Shape{2, 3, 2}}, z2{Shape{2, 4, 3}}, z3{Shape{3, 2, 2}};
        Tensor<double> got = assemble_factorized_core(z1, z2, z3, Activation::Tanh);
        for (index_t i = 0; i < got.size(); ++i) CHECK(got[i] == 0.0);
    }
}

TEST_CASE("dense layers: identity weight and loop oracle") {
    DenseFcLayer<double> layer;
    layer.weight = Tensor<double>{Shape{3, 3}};
    for (index_t i = 0; i < 3; ++i) layer.weight.at({i, i}) = 1.0;
    Rng rng(41);
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, 3}, rng);
    Tensor<double> y = layer.forward(x);
    for (index_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));

    DenseFcLayer<double> rnd = DenseFcLayer<double>::random(5, 4, 7, false);
    Tensor<double> x2 = oracle::random_tensor<double>(Shape{3, 5}, rng);
    CHECK(max_rel_diff(rnd.forward(x2), oracle::dense_forward_loops(x2, rnd.weight)) < 1e-12);
}

TEST_CASE("conv baseline layer matches the loop oracle") {
    ConvBaselineLayer<double> layer = ConvBaselineLayer<double>::random(3, 2, 4, 1, 0, 3, false);
    Rng rng(43);
    Tensor<double> x = oracle::random_tensor<double>(Shape{5, 5, 2}, rng);
    CHECK(max_rel_diff(layer.forward(x), oracle::conv2d_loops(x, layer.weight, 1, 0)) < 1e-12);
}

TEST_CASE("mlp original architecture accepted end to end") {
    Network<double> net;
    net.add(FlattenLayer{});
    net.add(DenseFcLayer<double>::random(784, 1024, 1, true));
    net.add(ReluLayer{});
    net.add(DenseFcLayer<double>::random(1024, 512, 2, true));
    net.add(ReluLayer{});
    net.add(DenseFcLayer<double>::random(512, 10, 3, true));
    Rng rng(47);
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, 28, 28, 1}, rng, 0.2);
    Tensor<double> logits = net.predict(x);
    CHECK(logits.shape() == Shape{2, 10});
    CHECK(net.weight_param_count() == 1332224);
    CHECK(net.bias_param_count() == 1024 + 512 + 10);
}

TEST_CASE("layer parameter counts match the closed forms exactly") {
    NtrFcLayer<double> fc = NtrFcLayer<double>::random({4, 8, 4, 8}, {8, 8, 8}, 14, 1, Activation::Tanh, true);
    CHECK(fc.weight_param_count() == 9408);
    CHECK(fc.bias_param_count() == 512);
    NtrConvLayer<double> cv =
        NtrConvLayer<double>::random(3, {1}, {4, 4}, 2, 1, 0, 1, Activation::Tanh, true);
    CHECK(cv.weight_param_count() == 72);
    CHECK(cv.bias_param_count() == 16);
}

} // TEST_SUITE
