#include <doctest.h>

#include "ntr/tensor_ops.hpp"
#include "oracles.hpp"

using namespace ntr;
using oracle::max_rel_diff;

TEST_SUITE("tensor_ops") {

TEST_CASE("reshape keeps the flat sequence") {
    Tensor<double> t{Shape{2, 3}, {1, 2, 3, 4, 5, 6}};
    Tensor<double> r = reshape(t, Shape{3, 2});
    CHECK(r.shape() == Shape{3, 2});
    // Row-major: first row of the (3,2) view is the first two flat elements.
    CHECK(r.at({0, 0}) == 1.0);
    CHECK(r.at({0, 1}) == 2.0);
    CHECK(r.at({1, 0}) == 3.0);

    Tensor<double> same = reshape(t, Shape{2, 3});
    for (index_t i = 0; i < t.size(); ++i) CHECK(same[i] == t[i]);
}

TEST_CASE("reshape of the mlp input vector") {
    Rng rng(3);
    Tensor<double> v = oracle::random_tensor<double>(Shape{784}, rng);
    Tensor<double> t = reshape(v, Shape{4, 7, 4, 7});
    CHECK(t.shape() == Shape{4, 7, 4, 7});
    for (index_t i = 0; i < v.size(); ++i) CHECK(t[i] == v[i]);
    CHECK_THROWS_AS(reshape(v, Shape{4, 7, 4, 6}), ShapeError);
}

TEST_CASE("permute follows the kernel-core convention") {
    // (R1,D,D,R2) with perm (1,2,3,0) -> (D,D,R2,R1), out(d1,d2,a2,a1) = in(a1,d1,d2,a2).
    Rng rng(5);
    Tensor<double> v = oracle::random_tensor<double>(Shape{2, 3, 3, 4}, rng);
    Tensor<double> p = permute(v, {1, 2, 3, 0});
    CHECK(p.shape() == Shape{3, 3, 4, 2});
    for (index_t a1 = 0; a1 < 2; ++a1)
        for (index_t d1 = 0; d1 < 3; ++d1)
            for (index_t d2 = 0; d2 < 3; ++d2)
                for (index_t a2 = 0; a2 < 4; ++a2)
                    CHECK(p.at({d1, d2, a2, a1}) == v.at({a1, d1, d2, a2}));
}

TEST_CASE("permute: identity and inverse round-trip") {
    Rng rng(7);
    Tensor<double> v = oracle::random_tensor<double>(Shape{2, 3, 4}, rng);
    Tensor<double> id = permute(v, {0, 1, 2});
    for (index_t i = 0; i < v.size(); ++i) CHECK(id[i] == v[i]);

    const std::vector<int> perm{2, 0, 1};
    Tensor<double> back = permute(permute(v, perm), inverse_permutation(perm));
    for (index_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]); // bit-exact

    CHECK_THROWS_AS(permute(v, std::vector<int>{0, 1, 1}), ArgumentError);
    CHECK_THROWS_AS(permute(v, std::vector<int>{0, 1, 3}), ArgumentError);
}

TEST_CASE("contract: all-ones reduction is a row sum") {
    Tensor<double> a{Shape{2, 2}, {1, 2, 3, 4}};
    Tensor<double> b = Tensor<double>::full(Shape{2, 1, 1}, 1.0);
    Tensor<double> c = contract(a, {1}, b, {0});
    CHECK(c.shape() == Shape{2, 1, 1});
    CHECK(c[0] == doctest::Approx(3.0));
    CHECK(c[1] == doctest::Approx(7.0));
}

TEST_CASE("contract: double-mode pairing matches the loop oracle") {
    Rng rng(11);
    Tensor<double> a = oracle::random_tensor<double>(Shape{3, 4, 5}, rng);
    Tensor<double> b = oracle::random_tensor<double>(Shape{4, 2, 5}, rng);
    Tensor<double> got = contract(a, {1, 2}, b, {0, 2});
    Tensor<double> want = oracle::contract_loops(a, {1, 2}, b, {0, 2});
    CHECK(got.shape() == Shape{3, 2});
    CHECK(max_rel_diff(got, want) < 1e-12);
}

TEST_CASE("contract: kronecker-delta core is a no-op up to axis order") {
    // delta(i, j, 0) = [i == j]; contracting axis k against it relabels the
    // axis and moves it to the end.
    Rng rng(13);
    const index_t n = 4;
    Tensor<double> x = oracle::random_tensor<double>(Shape{2, n, 3}, rng);
    Tensor<double> delta{Shape{n, n, 1}};
    for (index_t i = 0; i < n; ++i) delta.at({i, i, 0}) = 1.0;
    Tensor<double> y = contract(x, {1}, delta, {0}); // (2,3,n,1)
    CHECK(y.shape() == Shape{2, 3, n, 1});
    for (index_t a = 0; a < 2; ++a)
        for (index_t b = 0; b < 3; ++b)
            for (index_t i = 0; i < n; ++i) CHECK(y.at({a, b, i, 0}) == doctest::Approx(x.at({a, i, b})));
}

TEST_CASE("contract error paths") {
    Tensor<double> a{Shape{2, 3}};
    Tensor<double> b{Shape{4, 2}};
    CHECK_THROWS_AS(contract(a, {1}, b, {0}), ShapeError);        // 3 vs 4
    CHECK_THROWS_AS(contract(a, {2}, b, {0}), ArgumentError);     // axis out of range
    CHECK_THROWS_AS(contract(a, {0, 0}, b, {0, 1}), ArgumentError); // repeated axis
    CHECK_THROWS_AS(contract(a, {0, 1}, b, {0}), ArgumentError);  // list length mismatch
}

TEST_CASE("contract agrees with the loop oracle on random instances") {
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const index_t ra = 1 + static_cast<index_t>(rng.below(3));
        const index_t rb = 1 + static_cast<index_t>(rng.below(3));
        std::vector<index_t> da, db;
        for (index_t i = 0; i < ra; ++i) da.push_back(1 + static_cast<index_t>(rng.below(5)));
        for (index_t i = 0; i < rb; ++i) db.push_back(1 + static_cast<index_t>(rng.below(5)));
        // Pair one random axis from each (extent forced equal).
        const int ax_a = static_cast<int>(rng.below(static_cast<std::uint64_t>(ra)));
        const int ax_b = static_cast<int>(rng.below(static_cast<std::uint64_t>(rb)));
        db[static_cast<std::size_t>(ax_b)] = da[static_cast<std::size_t>(ax_a)];
        Tensor<double> a = oracle::random_tensor<double>(Shape(da), rng);
        Tensor<double> b = oracle::random_tensor<double>(Shape(db), rng);
        Tensor<double> got = contract(a, {ax_a}, b, {ax_b});
        Tensor<double> want = oracle::contract_loops(a, {ax_a}, b, {ax_b});
        CHECK(max_rel_diff(got, want) < 1e-12);
    }
}

TEST_CASE("contract is bilinear") {
    Rng rng(19);
    const double alpha = 0.7, beta = -1.3;
    Tensor<double> a1 = oracle::random_tensor<double>(Shape{3, 4}, rng);
    Tensor<double> a2 = oracle::random_tensor<double>(Shape{3, 4}, rng);
    Tensor<double> b = oracle::random_tensor<double>(Shape{4, 2}, rng);
    Tensor<double> mix{Shape{3, 4}};
    for (index_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a1[i] + beta * a2[i];
    Tensor<double> lhs = contract(mix, {1}, b, {0});
    Tensor<double> r1 = contract(a1, {1}, b, {0});
    Tensor<double> r2 = contract(a2, {1}, b, {0});
    Tensor<double> rhs{lhs.shape()};
    for (index_t i = 0; i < rhs.size(); ++i) rhs[i] = alpha * r1[i] + beta * r2[i];
    CHECK(max_rel_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("outer product basics") {
    Tensor<double> u{Shape{2}, {1, 2}};
    Tensor<double> v{Shape{2}, {3, 4}};
    Tensor<double> uv = outer_product({u, v});
    CHECK(uv.shape() == Shape{2, 2});
    CHECK(uv.at({0, 0}) == 3.0);
    CHECK(uv.at({0, 1}) == 4.0);
    CHECK(uv.at({1, 0}) == 6.0);
    CHECK(uv.at({1, 1}) == 8.0);

    // All-ones operand replicates along a new axis.
    Tensor<double> ones = Tensor<double>::full(Shape{3}, 1.0);
    Tensor<double> rep = outer_product({u, ones});
    for (index_t i = 0; i < 2; ++i)
        for (index_t j = 0; j < 3; ++j) CHECK(rep.at({i, j}) == u[i]);

    std::vector<Tensor<double>> solo{u};
    CHECK_THROWS_AS(outer_product(std::span<const Tensor<double>>(solo)), ArgumentError);
}

TEST_CASE("outer product of three vectors matches nested loops") {
    Rng rng(23);
    Tensor<double> u = oracle::random_tensor<double>(Shape{2}, rng);
    Tensor<double> v = oracle::random_tensor<double>(Shape{2}, rng);
    Tensor<double> w = oracle::random_tensor<double>(Shape{2}, rng);
    Tensor<double> got = outer_product({u, v, w});
    for (index_t i = 0; i < 2; ++i)
        for (index_t j = 0; j < 2; ++j)
            for (index_t k = 0; k < 2; ++k)
                CHECK(got.at({i, j, k}) == doctest::Approx(u[i] * v[j] * w[k]).epsilon(1e-12));
}

TEST_CASE("conv2d output geometry") {
    Rng rng(29);
    Tensor<double> x = oracle::random_tensor<double>(Shape{28, 28, 1}, rng);
    Tensor<double> k = oracle::random_tensor<double>(Shape{3, 3, 1, 16}, rng);
    Tensor<double> y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == Shape{26, 26, 16});
    CHECK_THROWS_AS(conv2d(oracle::random_tensor<double>(Shape{2, 2, 1}, rng), k, 1, 0), ShapeError);
}

TEST_CASE("conv2d: unit 1x1 kernel is the identity") {
    Rng rng(31);
    Tensor<double> x = oracle::random_tensor<double>(Shape{5, 4, 1}, rng);
    Tensor<double> k = Tensor<double>::full(Shape{1, 1, 1, 1}, 1.0);
    Tensor<double> y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == x.shape());
    for (index_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d matches the loop oracle, incl. stride and padding") {
    Rng rng(37);
    for (int trial = 0; trial < 40; ++trial) {
        const index_t h = 3 + static_cast<index_t>(rng.below(5));
        const index_t w = 3 + static_cast<index_t>(rng.below(5));
        const index_t c = 1 + static_cast<index_t>(rng.below(3));
        const index_t o = 1 + static_cast<index_t>(rng.below(3));
        const index_t d = 1 + static_cast<index_t>(rng.below(3));
        const index_t stride = 1 + static_cast<index_t>(rng.below(2));
        const index_t pad = static_cast<index_t>(rng.below(2));
        if (h + 2 * pad < d || w + 2 * pad < d) continue;
        Tensor<double> x = oracle::random_tensor<double>(Shape{h, w, c}, rng);
        Tensor<double> k = oracle::random_tensor<double>(Shape{d, d, c, o}, rng);
        Tensor<double> got = conv2d(x, k, stride, pad);
        Tensor<double> want = oracle::conv2d_loops(x, k, stride, pad);
        CHECK(max_rel_diff(got, want) < 1e-12);
    }
}

TEST_CASE("conv2d batched equals per-sample") {
    Rng rng(41);
    Tensor<double> xb = oracle::random_tensor<double>(Shape{3, 6, 5, 2}, rng);
    Tensor<double> k = oracle::random_tensor<double>(Shape{3, 3, 2, 4}, rng);
    Tensor<double> yb = conv2d(xb, k, 1, 1);
    for (index_t s = 0; s < 3; ++s) {
        Tensor<double> x{Shape{6, 5, 2}};
        std::copy(xb.data().begin() + s * 60, xb.data().begin() + (s + 1) * 60, x.data().begin());
        Tensor<double> y = conv2d(x, k, 1, 1);
        for (index_t i = 0; i < y.size(); ++i)
            CHECK(y[i] == yb[s * y.size() + i]); // bit-exact: same kernels, same order
    }
}

TEST_CASE("apply_activation") {
    Tensor<double> t{Shape{3}, {-1, 0, 2}};
    Tensor<double> r = apply_activation(t, Activation::Relu);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);

    Tensor<double> z = Tensor<double>::scalar(0.0);
    CHECK(apply_activation(z, Activation::Tanh)[0] == 0.0);

    Rng rng(43);
    Tensor<double> x = oracle::random_tensor<double>(Shape{4, 5}, rng);
    Tensor<double> same = apply_activation(x, Activation::Identity);
    for (index_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]); // bit-exact

    CHECK_THROWS_AS(apply_activation(x, static_cast<Activation>(42)), ArgumentError);
}

TEST_CASE("maxpool2x2 basics") {
    // One channel, 4x4: picks the max of each 2x2 block.
    Tensor<double> x{Shape{1, 4, 4, 1},
                     {1, 2, 3, 4,
                      5, 6, 7, 8,
                      9, 10, 11, 12,
                      13, 14, 15, 16}};
    std::vector<index_t> argmax;
    Tensor<double> y = maxpool2x2(x, &argmax);
    CHECK(y.shape() == Shape{1, 2, 2, 1});
    CHECK(y[0] == 6.0);
    CHECK(y[1] == 8.0);
    CHECK(y[2] == 14.0);
    CHECK(y[3] == 16.0);
    CHECK(argmax[0] == 5);

    // Odd extents drop the trailing row/column.
    Tensor<double> odd{Shape{1, 5, 5, 1}};
    CHECK(maxpool2x2(odd).shape() == Shape{1, 2, 2, 1});
}

} // TEST_SUITE
