#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ntr/rng.hpp"
#include "ntr/tensor_ops.hpp"

namespace ntr {

namespace detail {

/// Rank of `v` within the sorted order of `xs`.
inline int sorted_position(const std::vector<int>& xs, int v) {
    int pos = 0;
    for (int x : xs)
        if (x < v) ++pos;
    return pos;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data().data();
    const T* s = src.data().data();
    const index_t n = dst.size();
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n; ++i) d[i] += s[i];
}

/// C(m,n) += or = A^T(m,k-major) * B: A is (k,m) row-major.
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
    Eigen::Map<const RowMajorMat<T>> ma(a, k, m);
    Eigen::Map<const RowMajorMat<T>> mb(b, k, n);
    Eigen::Map<RowMajorMat<T>> mc(c, m, n);
    mc.noalias() = ma.transpose() * mb;
}

/// C(m,n) = A(m,k) * B^T: B is (n,k) row-major.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
    Eigen::Map<const RowMajorMat<T>> ma(a, m, k);
    Eigen::Map<const RowMajorMat<T>> mb(b, n, k);
    Eigen::Map<RowMajorMat<T>> mc(c, m, n);
    mc.noalias() = ma * mb.transpose();
}

} // namespace detail

/// Linear tape of hand-written backward rules over the primitive set the
/// layers use. One tape per training step / thread; nodes are created in
/// forward order and swept strictly in reverse, so gradient accumulation
/// order is fixed and runs are bit-reproducible in 64-bit mode.
template <typename T>
class Tape {
public:
    struct Var {
        std::int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor<T> value, bool requires_grad = false) {
        return push(std::move(value), requires_grad);
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }

    bool requires_grad(Var v) const { return node(v).requires_grad; }

    /// Gradient of the backward() target w.r.t. v.
    const Tensor<T>& grad(Var v) const {
        if (!ran_backward_) throw StateError("Tape::grad: backward() has not run on this tape");
        const Node& n = node(v);
        if (!n.grad) throw StateError("Tape::grad: variable has no gradient (not on the loss path)");
        return *n.grad;
    }

    bool has_grad(Var v) const { return ran_backward_ && node(v).grad.has_value(); }

    std::size_t size() const { return nodes_.size(); }

    /// Non-identity activation applications recorded so far. Layer tests use
    /// this counter to pin where the inner nonlinearity fires.
    int activation_applications() const { return activation_count_; }

    /// Smallest |input| feeding an activation of the given kind; +inf if none.
    /// Gradient checks re-roll inputs that sit on the relu kink.
    double min_abs_preactivation(Activation kind) const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& [act, parent] : activation_inputs_)
            if (act == kind)
                for (T v : nodes_[static_cast<std::size_t>(parent)].value.data())
                    m = std::min(m, static_cast<double>(std::abs(static_cast<double>(v))));
        return m;
    }

    // ---- recorded operations -------------------------------------------

    /// Pairwise contraction; see ntr::contract for the output axis order.
    Var contract(Var a, Var b, std::vector<int> ma, std::vector<int> mb) {
        Tensor<T> out = ntr::contract(value(a), ma, value(b), mb);

        const auto surviving = [](const Shape& s, const std::vector<int>& modes) {
            std::vector<int> r;
            for (index_t ax = 0; ax < s.rank(); ++ax)
                if (std::find(modes.begin(), modes.end(), static_cast<int>(ax)) == modes.end())
                    r.push_back(static_cast<int>(ax));
            return r;
        };
        const std::vector<int> surv_a = surviving(value(a).shape(), ma);
        const std::vector<int> surv_b = surviving(value(b).shape(), mb);

        Var ov = push(std::move(out), requires_grad(a) || requires_grad(b));
        if (!node(ov).requires_grad) return ov;

        node(ov).backward = [this, a, b, ma, mb, surv_a, surv_b](const Tensor<T>& g) {
            const int n_sa = static_cast<int>(surv_a.size());
            const index_t ra = value(a).rank();
            const index_t rb = value(b).rank();
            if (requires_grad(a)) {
                // Pair g's b-part with B's surviving axes; what is left of B
                // are the contracted dims, appearing in ascending B-axis order.
                std::vector<int> g_modes(surv_b.size());
                for (std::size_t i = 0; i < surv_b.size(); ++i)
                    g_modes[i] = n_sa + static_cast<int>(i);
                Tensor<T> tmp = ntr::contract(g, g_modes, value(b), surv_b);
                std::vector<int> perm(static_cast<std::size_t>(ra));
                for (std::size_t p = 0; p < ma.size(); ++p)
                    perm[static_cast<std::size_t>(ma[p])] = n_sa + detail::sorted_position(mb, mb[p]);
                for (std::size_t i = 0; i < surv_a.size(); ++i)
                    perm[static_cast<std::size_t>(surv_a[i])] = static_cast<int>(i);
                accumulate(a, ntr::permute(tmp, perm));
            }
            if (requires_grad(b)) {
                std::vector<int> g_modes(surv_a.size());
                for (std::size_t i = 0; i < surv_a.size(); ++i) g_modes[i] = static_cast<int>(i);
                Tensor<T> tmp = ntr::contract(value(a), surv_a, g, g_modes);
                const int n_ma = static_cast<int>(ma.size());
                std::vector<int> perm(static_cast<std::size_t>(rb));
                for (std::size_t p = 0; p < mb.size(); ++p)
                    perm[static_cast<std::size_t>(mb[p])] = detail::sorted_position(ma, ma[p]);
                for (std::size_t i = 0; i < surv_b.size(); ++i)
                    perm[static_cast<std::size_t>(surv_b[i])] = n_ma + static_cast<int>(i);
                accumulate(b, ntr::permute(tmp, perm));
            }
        };
        return ov;
    }

    Var reshape(Var a, Shape s) {
        Shape in_shape = value(a).shape();
        Var ov = push(ntr::reshape(value(a), std::move(s)), requires_grad(a));
        if (node(ov).requires_grad)
            node(ov).backward = [this, a, in_shape](const Tensor<T>& g) {
                accumulate(a, ntr::reshape(g, in_shape));
            };
        return ov;
    }

    Var permute(Var a, std::vector<int> perm) {
        Var ov = push(ntr::permute(value(a), perm), requires_grad(a));
        if (node(ov).requires_grad) {
            std::vector<int> inv = inverse_permutation(perm);
            node(ov).backward = [this, a, inv](const Tensor<T>& g) {
                accumulate(a, ntr::permute(g, inv));
            };
        }
        return ov;
    }

    /// Elementwise nonlinearity. Identity is a no-op returning `a` itself.
    Var activation(Var a, Activation f) {
        if (f == Activation::Identity) return a;
        Var ov = push(apply_activation(value(a), f), requires_grad(a));
        ++activation_count_;
        activation_inputs_.emplace_back(f, a.id);
        if (!node(ov).requires_grad) return ov;
        if (f == Activation::Relu) {
            // relu'(0) := 0.
            node(ov).backward = [this, a, ov](const Tensor<T>& g) {
                const Tensor<T>& out = value(ov);
                Tensor<T> dx{out.shape()};
                const index_t n = out.size();
                const T* gp = g.data().data();
                const T* op = out.data().data();
                T* dp = dx.data().data();
#pragma omp parallel for schedule(static)
                for (index_t i = 0; i < n; ++i) dp[i] = op[i] > T(0) ? gp[i] : T(0);
                accumulate(a, std::move(dx));
            };
        } else { // Tanh
            node(ov).backward = [this, a, ov](const Tensor<T>& g) {
                const Tensor<T>& out = value(ov);
                Tensor<T> dx{out.shape()};
                const index_t n = out.size();
                const T* gp = g.data().data();
                const T* op = out.data().data();
                T* dp = dx.data().data();
#pragma omp parallel for schedule(static)
                for (index_t i = 0; i < n; ++i) dp[i] = gp[i] * (T(1) - op[i] * op[i]);
                accumulate(a, std::move(dx));
            };
        }
        return ov;
    }

    /// Batched cross-correlation; x: (B,H,W,C), k: (D,D,C,O).
    Var conv2d(Var x, Var k, index_t stride, index_t padding) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& kv = value(k);
        if (xv.rank() != 4) throw ShapeError("Tape::conv2d: input must be batched (B,H,W,C)");
        Tensor<T> out = ntr::conv2d(xv, kv, stride, padding);

        const index_t b = xv.shape()[0], h = xv.shape()[1], w = xv.shape()[2], c = xv.shape()[3];
        const index_t d = kv.shape()[0], o = kv.shape()[3];
        const index_t ho = out.shape()[1], wo = out.shape()[2];

        Var ov = push(std::move(out), requires_grad(x) || requires_grad(k));
        if (!node(ov).requires_grad) return ov;

        // The unfolded patch matrix is shared by both gradients; recompute it
        // once here instead of threading it out of the forward call.
        auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b * ho * wo * d * d * c));
        detail::im2col(xv.data().data(), b, h, w, c, d, stride, padding, cols->data());

        node(ov).backward = [this, x, k, cols, b, h, w, c, d, o, ho, wo, stride, padding](const Tensor<T>& g) {
            const index_t rows = b * ho * wo;
            const index_t patch = d * d * c;
            if (requires_grad(k)) {
                Tensor<T> dk{Shape{d, d, c, o}};
                detail::gemm_tn(cols->data(), g.data().data(), dk.data().data(), patch, rows, o);
                accumulate(k, std::move(dk));
            }
            if (requires_grad(x)) {
                std::vector<T> dcols(static_cast<std::size_t>(rows * patch));
                detail::gemm_nt(g.data().data(), value(k).data().data(), dcols.data(), rows, o, patch);
                Tensor<T> dx{Shape{b, h, w, c}};
                detail::col2im(dcols.data(), b, h, w, c, d, stride, padding, dx.data().data());
                accumulate(x, std::move(dx));
            }
        };
        return ov;
    }

    /// out = a + bias broadcast over the last axis.
    Var add_bias(Var a, Var bias) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(bias);
        if (bv.rank() != 1 || av.rank() < 1 || av.shape()[av.rank() - 1] != bv.shape()[0])
            throw ShapeError("add_bias: bias " + bv.shape().str() + " does not match last axis of " +
                             av.shape().str());
        Tensor<T> out{av.shape()};
        const index_t o = bv.shape()[0];
        const index_t rows = av.size() / o;
        {
            const T* ap = av.data().data();
            const T* bp = bv.data().data();
            T* op = out.data().data();
#pragma omp parallel for schedule(static)
            for (index_t r = 0; r < rows; ++r)
                for (index_t j = 0; j < o; ++j) op[r * o + j] = ap[r * o + j] + bp[j];
        }
        Var ov = push(std::move(out), requires_grad(a) || requires_grad(bias));
        if (!node(ov).requires_grad) return ov;
        node(ov).backward = [this, a, bias, rows, o](const Tensor<T>& g) {
            if (requires_grad(a)) accumulate(a, Tensor<T>(g));
            if (requires_grad(bias)) {
                Tensor<T> db{Shape{o}};
                const T* gp = g.data().data();
                T* dp = db.data().data();
                for (index_t r = 0; r < rows; ++r)
                    for (index_t j = 0; j < o; ++j) dp[j] += gp[r * o + j];
                accumulate(bias, std::move(db));
            }
        };
        return ov;
    }

    /// Elementwise sum of same-shape tensors.
    Var add(Var a, Var b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        if (av.shape() != bv.shape()) throw ShapeError("Tape::add: shape mismatch");
        Tensor<T> out{av.shape()};
        const index_t n = out.size();
        const T* ap = av.data().data();
        const T* bp = bv.data().data();
        T* op = out.data().data();
#pragma omp parallel for schedule(static)
        for (index_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];
        Var ov = push(std::move(out), requires_grad(a) || requires_grad(b));
        if (!node(ov).requires_grad) return ov;
        node(ov).backward = [this, a, b](const Tensor<T>& g) {
            if (requires_grad(a)) accumulate(a, Tensor<T>(g));
            if (requires_grad(b)) accumulate(b, Tensor<T>(g));
        };
        return ov;
    }

    /// 2x2/stride-2 max pooling over (B,H,W,C).
    Var maxpool2(Var a) {
        const Tensor<T>& av = value(a);
        if (av.rank() != 4) throw ShapeError("Tape::maxpool2: input must be batched (B,H,W,C)");
        auto argmax = std::make_shared<std::vector<index_t>>();
        Tensor<T> out = maxpool2x2(av, argmax.get());
        Shape in_shape = av.shape();
        Var ov = push(std::move(out), requires_grad(a));
        if (!node(ov).requires_grad) return ov;
        node(ov).backward = [this, a, argmax, in_shape](const Tensor<T>& g) {
            Tensor<T> dx{in_shape};
            T* dp = dx.data().data();
            const T* gp = g.data().data();
            for (std::size_t i = 0; i < argmax->size(); ++i)
                dp[(*argmax)[i]] += gp[static_cast<index_t>(i)];
            accumulate(a, std::move(dx));
        };
        return ov;
    }

    /// Mean over the batch of -log softmax(logits)[label], stabilized with
    /// log-sum-exp. Returns a scalar variable.
    Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
        const Tensor<T>& lv = value(logits);
        if (lv.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be (B,C)");
        const index_t b = lv.shape()[0], c = lv.shape()[1];
        if (static_cast<index_t>(labels.size()) != b)
            throw ShapeError("softmax_cross_entropy: label count mismatch");
        for (int y : labels)
            if (y < 0 || y >= c)
                throw ArgumentError("softmax_cross_entropy: label " + std::to_string(y) +
                                    " out of range [0," + std::to_string(c) + ")");

        auto probs = std::make_shared<Tensor<T>>(Shape{b, c});
        const T* lp = lv.data().data();
        T* pp = probs->data().data();
        double loss = 0.0;
        for (index_t i = 0; i < b; ++i) {
            const T* row = lp + i * c;
            T m = row[0];
            for (index_t j = 1; j < c; ++j) m = std::max(m, row[j]);
            double sum = 0.0;
            for (index_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j] - m));
            const double lse = static_cast<double>(m) + std::log(sum);
            for (index_t j = 0; j < c; ++j)
                pp[i * c + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
            loss += lse - static_cast<double>(row[labels[static_cast<std::size_t>(i)]]);
        }
        loss /= static_cast<double>(b);

        Var ov = push(Tensor<T>::scalar(static_cast<T>(loss)), requires_grad(logits));
        if (!node(ov).requires_grad) return ov;
        node(ov).backward = [this, logits, probs, labels, b, c](const Tensor<T>& g) {
            const T scale = g[0] / static_cast<T>(b);
            Tensor<T> dl{Shape{b, c}};
            const T* pp = probs->data().data();
            T* dp = dl.data().data();
            for (index_t i = 0; i < b; ++i) {
                for (index_t j = 0; j < c; ++j) dp[i * c + j] = pp[i * c + j] * scale;
                dp[i * c + labels[static_cast<std::size_t>(i)]] -= scale;
            }
            accumulate(logits, std::move(dl));
        };
        return ov;
    }

    /// Reverse sweep from a scalar loss. Gradients of every reachable
    /// grad-requiring node become available through grad().
    void backward(Var loss) {
        Node& ln = node(loss);
        if (ln.value.size() != 1)
            throw ArgumentError("Tape::backward: loss must be a scalar, got shape " + ln.value.shape().str());
        if (!ln.requires_grad)
            throw StateError("Tape::backward: loss does not depend on any grad-requiring leaf");
        if (ran_backward_) throw StateError("Tape::backward: already ran on this tape");
        ln.grad = Tensor<T>::full(ln.value.shape(), T(1));
        for (std::int32_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad && n.backward) n.backward(*n.grad);
        }
        ran_backward_ = true;
    }

    /// Test hook: records a node with a caller-supplied backward rule. Used
    /// by the corrupted-backward negative control in the gradient-check
    /// tests; not part of normal operation.
    Var push_custom(Tensor<T> value, bool requires_grad,
                    std::function<void(Tape&, const Tensor<T>&)> backward) {
        Var ov = push(std::move(value), requires_grad);
        if (backward)
            node(ov).backward = [this, fn = std::move(backward)](const Tensor<T>& g) { fn(*this, g); };
        return ov;
    }

    void accumulate(Var v, Tensor<T>&& g) {
        Node& n = node(v);
        if (!n.requires_grad) return;
        if (!n.grad) {
            n.grad = std::move(g);
        } else {
            detail::add_inplace(*n.grad, g);
        }
    }

private:
    struct Node {
        Tensor<T> value;
        std::optional<Tensor<T>> grad;
        bool requires_grad = false;
        std::function<void(const Tensor<T>&)> backward;
    };

    Var push(Tensor<T> value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Node& node(Var v) {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw StateError("Tape: invalid variable id");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw StateError("Tape: invalid variable id");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    std::vector<Node> nodes_;
    std::vector<std::pair<Activation, std::int32_t>> activation_inputs_;
    int activation_count_ = 0;
    bool ran_backward_ = false;
};

/// Result of a finite-difference sweep.
struct GradCheckReport {
    double max_rel_error = 0.0;
    index_t elements_checked = 0;
};

/// Central-difference comparison of analytic gradients over every element of
/// `params` (or a seeded random subsample once the total exceeds
/// `max_checks`). build_loss must construct the scalar loss from the given
/// parameter variables on a fresh tape each call. Relative error is
/// |a - n| / max(1e-8, |a| + |n|). Meaningful in 64-bit mode only.
template <typename T, typename BuildLoss>
GradCheckReport grad_check(std::span<Tensor<T>* const> params, BuildLoss&& build_loss,
                           double eps = 1e-5, std::uint64_t seed = 0, index_t max_checks = 10000) {
    static_assert(std::is_same_v<T, double>, "grad_check requires 64-bit mode");

    const auto eval_loss = [&](bool want_grads) {
        Tape<T> tape;
        std::vector<typename Tape<T>::Var> vars;
        vars.reserve(params.size());
        for (Tensor<T>* p : params) vars.push_back(tape.leaf(*p, want_grads));
        typename Tape<T>::Var loss = build_loss(tape, std::span<const typename Tape<T>::Var>(vars));
        if (want_grads) tape.backward(loss);
        std::vector<Tensor<T>> grads;
        if (want_grads) {
            for (auto v : vars)
                grads.push_back(tape.has_grad(v) ? tape.grad(v) : Tensor<T>(tape.value(v).shape()));
        }
        return std::pair<double, std::vector<Tensor<T>>>(static_cast<double>(tape.value(loss)[0]),
                                                         std::move(grads));
    };

    const auto [loss0, analytic] = eval_loss(true);
    (void)loss0;

    index_t total = 0;
    for (Tensor<T>* p : params) total += p->size();

    std::vector<std::pair<std::size_t, index_t>> targets; // (param index, element)
    if (total <= max_checks) {
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (index_t e = 0; e < params[pi]->size(); ++e) targets.emplace_back(pi, e);
    } else {
        Rng rng(mix_seed(seed, 0x67726164ull));
        for (index_t i = 0; i < max_checks; ++i) {
            index_t flat = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(total)));
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                if (flat < params[pi]->size()) {
                    targets.emplace_back(pi, flat);
                    break;
                }
                flat -= params[pi]->size();
            }
        }
    }

    GradCheckReport report;
    for (const auto& [pi, e] : targets) {
        T& slot = (*params[pi])[e];
        const T saved = slot;
        slot = saved + static_cast<T>(eps);
        const double lp = eval_loss(false).first;
        slot = saved - static_cast<T>(eps);
        const double lm = eval_loss(false).first;
        slot = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = static_cast<double>(analytic[pi][e]);
        const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.elements_checked;
    }
    return report;
}

} // namespace ntr
