#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ntr/config.hpp"
#include "ntr/data_io.hpp"
#include "ntr/model_builder.hpp"
#include "ntr/network.hpp"

namespace ntr {

/// Batch-mean softmax cross-entropy as a standalone value (the taped version
/// lives on Tape).
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::vector<int> labels) {
    Tape<T> tape;
    return static_cast<double>(
        tape.value(tape.softmax_cross_entropy(tape.leaf(logits), std::move(labels)))[0]);
}

/// Adam / SGD-with-momentum over a fixed parameter list. State layout follows
/// the registry order, so updates are deterministic.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, const std::vector<ParamRef<T>>& params) : cfg_(std::move(cfg)) {
        if (cfg_.id != "adam" && cfg_.id != "sgd-momentum")
            throw ArgumentError("Optimizer: unknown id '" + cfg_.id + "' (adam|sgd-momentum)");
        for (const auto& p : params) {
            m_.emplace_back(p.tensor->shape());
            if (cfg_.id == "adam") v_.emplace_back(p.tensor->shape());
        }
    }

    void step(const std::vector<ParamRef<T>>& params, const std::vector<Tensor<T>>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ArgumentError("Optimizer::step: parameter/gradient count mismatch");
        const double lr = cfg_.learning_rate();
        if (cfg_.id == "adam") {
            ++t_;
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
            for (std::size_t i = 0; i < params.size(); ++i) {
                T* p = params[i].tensor->data().data();
                const T* g = grads[i].data().data();
                T* m = m_[i].data().data();
                T* v = v_[i].data().data();
                const index_t n = params[i].tensor->size();
                const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
                const T eps = static_cast<T>(cfg_.eps);
                for (index_t j = 0; j < n; ++j) {
                    m[j] = b1 * m[j] + (T(1) - b1) * g[j];
                    v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
                    const T mhat = m[j] / static_cast<T>(bc1);
                    const T vhat = v[j] / static_cast<T>(bc2);
                    p[j] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + eps);
                }
            }
        } else {
            for (std::size_t i = 0; i < params.size(); ++i) {
                T* p = params[i].tensor->data().data();
                const T* g = grads[i].data().data();
                T* m = m_[i].data().data();
                const index_t n = params[i].tensor->size();
                const T mu = static_cast<T>(cfg_.momentum);
                for (index_t j = 0; j < n; ++j) {
                    m[j] = mu * m[j] + g[j];
                    p[j] -= static_cast<T>(lr) * m[j];
                }
            }
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_; // adam only
    std::int64_t t_ = 0;
};

/// Accuracy over a dataset, evaluated in fixed order.
template <typename T>
double evaluate(Network<T>& net, const Dataset<T>& ds, index_t batch_size = 256) {
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.shuffle = false;
    double hits = 0.0;
    for_each_batch<T>(ds, plan, 0, [&](const Tensor<T>& images, const std::vector<int>& labels) {
        const Tensor<T> logits = net.predict(images);
        hits += accuracy(logits, labels) * static_cast<double>(labels.size());
    });
    return hits / static_cast<double>(ds.size());
}

struct EpochRecord {
    index_t epoch = 0; // 1-based
    double loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrialResult {
    std::uint64_t seed = 0;
    bool diverged = false;
    std::string error;
    double final_test_acc = 0.0;
    std::vector<EpochRecord> epochs;
};

/// Multi-trial aggregates in accuracy fractions; the low <= mean <= high
/// ordering and the exact recomputability from `accuracies` are invariants.
struct TrialStats {
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0; // population std over trials
    double high = 0.0;
    double low = 0.0;
    int diverged = 0;

    static TrialStats compute(const std::vector<double>& accs) {
        TrialStats s;
        s.accuracies = accs;
        if (accs.empty()) return s;
        double sum = 0.0;
        s.high = accs[0];
        s.low = accs[0];
        for (double a : accs) {
            sum += a;
            s.high = std::max(s.high, a);
            s.low = std::min(s.low, a);
        }
        s.mean = sum / static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - s.mean) * (a - s.mean);
        s.stddev = std::sqrt(var / static_cast<double>(accs.size()));
        return s;
    }
};

template <typename T>
struct RunHooks {
    std::function<void(index_t trial, std::uint64_t seed)> on_trial_start;
    std::function<void(index_t trial, const EpochRecord&)> on_epoch;
    std::function<void(index_t trial, const TrialResult&, Network<T>&)> on_trial_end;
};

/// Trains one model for the configured number of epochs. Throws NumericError
/// out of the epoch loop when the loss goes non-finite.
template <typename T>
TrialResult train_trial(Network<T>& net, const ExperimentConfig& cfg, std::uint64_t seed,
                        const Dataset<T>& train_ds, const Dataset<T>& test_ds,
                        const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    TrialResult result;
    result.seed = seed;

    std::vector<ParamRef<T>> params = net.params();
    Optimizer<T> opt(cfg.train.optimizer, params);

    BatchPlan plan;
    plan.batch_size = cfg.train.batch_size;
    plan.seed = mix_seed(seed, 0x7368756full);
    plan.shuffle = cfg.train.shuffle;
    plan.drop_last = cfg.train.drop_last;

    for (index_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        double loss_sum = 0.0;
        double acc_sum = 0.0;
        index_t seen = 0;
        for_each_batch<T>(train_ds, plan, epoch - 1,
                          [&](const Tensor<T>& images, const std::vector<int>& labels) {
            Tape<T> tape;
            auto fwd = net.forward(tape, tape.leaf(images), /*train=*/true);
            auto loss_var = tape.softmax_cross_entropy(fwd.output, labels);
            const double loss = static_cast<double>(tape.value(loss_var)[0]);
            if (!std::isfinite(loss))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            tape.backward(loss_var);

            std::vector<Tensor<T>> grads;
            grads.reserve(fwd.param_vars.size());
            for (auto v : fwd.param_vars)
                grads.push_back(tape.has_grad(v) ? tape.grad(v) : Tensor<T>(tape.value(v).shape()));
            opt.step(params, grads);

            const index_t b = static_cast<index_t>(labels.size());
            loss_sum += loss * static_cast<double>(b);
            acc_sum += accuracy(tape.value(fwd.output), labels) * static_cast<double>(b);
            seen += b;
        });

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(seen);
        rec.train_acc = acc_sum / static_cast<double>(seen);
        rec.test_acc = evaluate(net, test_ds);
        result.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.final_test_acc = result.epochs.empty() ? 0.0 : result.epochs.back().test_acc;
    return result;
}

template <typename T>
struct RunResult {
    TrialStats stats;
    std::vector<TrialResult> trials;
};

/// One independent trial per configured seed: fresh init, full training,
/// final test accuracy. A diverged trial is recorded and excluded from the
/// aggregates, never silently dropped.
template <typename T>
RunResult<T> run_trials(const ExperimentConfig& cfg, const Dataset<T>& train_ds,
                        const Dataset<T>& test_ds, const RunHooks<T>& hooks = {}) {
    cfg.validate();
    RunResult<T> out;
    std::vector<double> accs;
    for (std::size_t t = 0; t < cfg.train.seeds.size(); ++t) {
        const std::uint64_t seed = cfg.train.seeds[t];
        if (hooks.on_trial_start) hooks.on_trial_start(static_cast<index_t>(t), seed);
        Network<T> net = build_network<T>(cfg, seed);
        TrialResult res;
        try {
            res = train_trial<T>(net, cfg, seed, train_ds, test_ds,
                                 hooks.on_epoch
                                     ? std::function<void(const EpochRecord&)>(
                                           [&](const EpochRecord& r) { hooks.on_epoch(static_cast<index_t>(t), r); })
                                     : std::function<void(const EpochRecord&)>{});
        } catch (const NumericError& e) {
            res.seed = seed;
            res.diverged = true;
            res.error = e.what();
        }
        if (!res.diverged) accs.push_back(res.final_test_acc);
        if (hooks.on_trial_end) hooks.on_trial_end(static_cast<index_t>(t), res, net);
        out.trials.push_back(std::move(res));
    }
    out.stats = TrialStats::compute(accs);
    out.stats.diverged = static_cast<int>(out.trials.size() - accs.size());
    return out;
}

} // namespace ntr
