#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pauselab/errors.hpp"
#include "pauselab/graph.hpp"
#include "pauselab/model.hpp"
#include "pauselab/pause.hpp"
#include "pauselab/rng.hpp"

namespace pauselab {

enum class Precision : uint8_t { f32, f64 };
enum class Schedule : uint8_t { constant, cosine };

struct TrainConfig {
    double learning_rate = 1e-3;
    int warmup_steps = 100;
    int total_steps = 1000;
    int batch_size = 8;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> grad_clip_norm = 1.0;
    Precision precision = Precision::f32;
    Schedule schedule = Schedule::constant;
    int window = 256;
    int threads = 1;

    void validate() const {
        if (batch_size < 1) {
            throw ConfigError("batch_size must be >= 1");
        }
        if (warmup_steps > total_steps) {
            throw ConfigError("warmup_steps must not exceed total_steps");
        }
        if (warmup_steps < 0 || total_steps < 0 || window < 1 || threads < 1) {
            throw ConfigError("train config values out of range");
        }
    }
};

/// Linear ramp 0 -> learning_rate over warmup_steps, then constant (or cosine
/// decay to zero at total_steps when selected). warmup_steps == 0 means the
/// rate is constant from step 0.
inline double lr_schedule(long long step, const TrainConfig& cfg) {
    if (step < 0) {
        throw RangeError("schedule step must be >= 0");
    }
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return cfg.learning_rate * static_cast<double>(step) / cfg.warmup_steps;
    }
    if (cfg.schedule == Schedule::cosine && cfg.total_steps > cfg.warmup_steps) {
        const double t = static_cast<double>(step - cfg.warmup_steps) /
                         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
        const double clamped = t > 1.0 ? 1.0 : t;
        return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * clamped));
    }
    return cfg.learning_rate;
}

/// Bias-corrected Adam with optional global-norm clipping applied before the
/// moment updates. Gradients are read from Tensor::grad; callers zero grads
/// between steps (accumulation across micro-batches stays possible).
template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<NamedParam<T>> params, const TrainConfig& cfg)
        : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps),
          clip_(cfg.grad_clip_norm) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor->numel(), T(0));
            v_[i].assign(params_[i].tensor->numel(), T(0));
        }
    }

    long long step_count() const { return t_; }

    void step(double lr_t) {
        for (const auto& p : params_) {
            p.tensor->ensure_grad();
            if (!all_finite(p.tensor->grad)) {
                throw NumericError("non-finite gradient in parameter '" + p.name +
                                   "' at optimizer step " + std::to_string(t_ + 1));
            }
        }
        double scale = 1.0;
        if (clip_.has_value()) {
            double sq = 0.0;
            for (const auto& p : params_) {
                for (T g : p.tensor->grad) {
                    sq += static_cast<double>(g) * static_cast<double>(g);
                }
            }
            const double norm = std::sqrt(sq);
            if (norm > *clip_) {
                scale = *clip_ / norm;
            }
        }
        t_ += 1;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& t = *params_[i].tensor;
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (size_t j = 0; j < t.data.size(); ++j) {
                const double g = static_cast<double>(t.grad[j]) * scale;
                const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * g;
                const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * g * g;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double update = lr_t * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
                t.data[j] = static_cast<T>(static_cast<double>(t.data[j]) - update);
            }
        }
    }

private:
    std::vector<NamedParam<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double beta1_, beta2_, eps_;
    std::optional<double> clip_;
    long long t_ = 0;
};

/// Runs the batch elements of one training step, possibly across threads.
/// Each element backpropagates into its own gradient buffer; buffers are then
/// combined by pairwise tree reduction in element-index order, so the result
/// is bit-identical for any thread count.
template <typename T>
class BatchRunner {
public:
    BatchRunner(std::vector<Tensor<T>*> params, int threads)
        : params_(std::move(params)), threads_(threads < 1 ? 1 : threads) {}

    struct Outcome {
        double loss_sum = 0.0; // sum of raw per-element loss sums
        long long n_terms = 0;
    };

    /// build(b, graph) constructs element b's loss; inv_norm scales the root
    /// that gradients flow from (the per-predicted-token mean uses
    /// inv_norm = 1 / total target terms in the batch).
    template <typename BuildLoss>
    Outcome run(int batch, double inv_norm, BuildLoss&& build) {
        prepare_buffers(batch);
        std::vector<double> losses(static_cast<size_t>(batch), 0.0);
        std::vector<long long> terms(static_cast<size_t>(batch), 0);

        std::atomic<int> cursor{0};
        std::exception_ptr first_error = nullptr;
        std::mutex error_mutex;

        auto worker = [&]() {
            while (true) {
                const int b = cursor.fetch_add(1);
                if (b >= batch) {
                    return;
                }
                try {
                    Graph<T> g;
                    GradSink<T> sink;
                    for (size_t p = 0; p < params_.size(); ++p) {
                        sink.slots.emplace(params_[p], &bufs_[static_cast<size_t>(b)][p]);
                    }
                    LossNodes<T> ln = build(b, g);
                    losses[static_cast<size_t>(b)] = static_cast<double>(g.value(ln.sum)[0]);
                    terms[static_cast<size_t>(b)] = ln.n_terms;
                    if (ln.n_terms > 0) {
                        const NodeId root = g.scale(ln.sum, static_cast<T>(inv_norm));
                        g.backward(root, &sink);
                    }
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                    cursor.store(batch);
                    return;
                }
            }
        };

        const int n_workers = std::min(threads_, batch);
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(n_workers));
            for (int w = 0; w < n_workers; ++w) {
                pool.emplace_back(worker);
            }
            for (auto& th : pool) {
                th.join();
            }
        }
        if (first_error) {
            std::rethrow_exception(first_error);
        }

        reduce_tree(batch);

        Outcome out;
        for (int b = 0; b < batch; ++b) {
            out.loss_sum += losses[static_cast<size_t>(b)];
            out.n_terms += terms[static_cast<size_t>(b)];
        }
        return out;
    }

private:
    std::vector<Tensor<T>*> params_;
    int threads_;
    std::vector<std::vector<std::vector<T>>> bufs_; // [element][param]

    void prepare_buffers(int batch) {
        if (static_cast<int>(bufs_.size()) < batch) {
            bufs_.resize(static_cast<size_t>(batch));
        }
        for (int b = 0; b < batch; ++b) {
            auto& per_param = bufs_[static_cast<size_t>(b)];
            per_param.resize(params_.size());
            for (size_t p = 0; p < params_.size(); ++p) {
                per_param[p].assign(params_[p]->numel(), T(0));
            }
        }
    }

    void reduce_tree(int batch) {
        std::vector<int> live(static_cast<size_t>(batch));
        for (int b = 0; b < batch; ++b) {
            live[static_cast<size_t>(b)] = b;
        }
        while (live.size() > 1) {
            std::vector<int> next;
            next.reserve((live.size() + 1) / 2);
            for (size_t j = 0; j + 1 < live.size(); j += 2) {
                const int a = live[j], b = live[j + 1];
                for (size_t p = 0; p < params_.size(); ++p) {
                    T* dst = bufs_[static_cast<size_t>(a)][p].data();
                    const T* src = bufs_[static_cast<size_t>(b)][p].data();
                    const size_t n = bufs_[static_cast<size_t>(a)][p].size();
                    for (size_t i = 0; i < n; ++i) {
                        dst[i] += src[i];
                    }
                }
                next.push_back(a);
            }
            if (live.size() % 2 == 1) {
                next.push_back(live.back());
            }
            live.swap(next);
        }
        for (size_t p = 0; p < params_.size(); ++p) {
            params_[p]->ensure_grad();
            const T* src = bufs_[static_cast<size_t>(live[0])][p].data();
            for (size_t i = 0; i < params_[p]->grad.size(); ++i) {
                params_[p]->grad[i] += src[i];
            }
        }
    }
};

struct CurvePoint {
    long long step = 0;
    double loss = 0.0; // per-predicted-token mean
    double lr = 0.0;
    long long tokens_seen = 0;
};

/// Writes "step,loss,lr,tokens_seen" rows.
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

enum class PretrainMode : uint8_t { standard, pause };
enum class FinetuneMode : uint8_t { standard, pause };

struct PretrainResult {
    std::vector<CurvePoint> curve;
    long long tokens_seen = 0;       // tokens fed to the model
    long long meaningful_tokens = 0; // non-pause among them
    double final_loss = 0.0;
};

/// Shared pretraining loop. Both modes consume the corpus in fixed-length
/// contiguous windows and feed the model exactly window tokens per element
/// per step, so the token budget matches by construction; pause mode inserts
/// round(fraction * window) pauses per window (trim keeps the fed length at
/// `window`) and skips loss terms whose target is a pause.
template <typename T>
PretrainResult train_pretrain(ModelParams<T>& model, std::span<const uint16_t> corpus,
                              const TrainConfig& tc, PretrainMode mode, InjectConfig inject) {
    tc.validate();
    const long long need = static_cast<long long>(tc.total_steps) * tc.batch_size * tc.window;
    if (static_cast<long long>(corpus.size()) < need) {
        throw BudgetError("corpus has " + std::to_string(corpus.size()) + " tokens but " +
                          std::to_string(need) + " are needed for " +
                          std::to_string(tc.total_steps) + " steps");
    }
    inject.window = tc.window;
    inject.seed = tc.seed;

    std::vector<NamedParam<T>> named;
    model.for_each_param([&](const std::string& n, Tensor<T>& t) { named.push_back({n, &t}); });
    AdamOptimizer<T> opt(named, tc);
    BatchRunner<T> runner(model.param_list(), tc.threads);

    PretrainResult res;
    res.curve.reserve(static_cast<size_t>(tc.total_steps));

    for (int step = 0; step < tc.total_steps; ++step) {
        std::vector<PausedSequence> paused;
        std::vector<std::vector<int>> raw;
        long long total_terms = 0;
        for (int b = 0; b < tc.batch_size; ++b) {
            const size_t w_idx = static_cast<size_t>(step) * tc.batch_size + b;
            const auto window = corpus.subspan(w_idx * static_cast<size_t>(tc.window),
                                               static_cast<size_t>(tc.window));
            if (mode == PretrainMode::pause) {
                PausedSequence seq = inject_window(window, inject, w_idx);
                total_terms += static_cast<long long>(seq.tokens.size()) - 1 -
                               static_cast<long long>(seq.ignore_set.size());
                res.tokens_seen += static_cast<long long>(seq.tokens.size());
                res.meaningful_tokens +=
                    static_cast<long long>(seq.tokens.size()) - seq.n_pauses;
                paused.push_back(std::move(seq));
            } else {
                std::vector<int> tokens(window.begin(), window.end());
                total_terms += static_cast<long long>(tokens.size()) - 1;
                res.tokens_seen += static_cast<long long>(tokens.size());
                res.meaningful_tokens += static_cast<long long>(tokens.size());
                raw.push_back(std::move(tokens));
            }
        }
        const double inv = total_terms > 0 ? 1.0 / static_cast<double>(total_terms) : 0.0;

        typename BatchRunner<T>::Outcome out;
        try {
            out = runner.run(tc.batch_size, inv, [&](int b, Graph<T>& g) {
                if (mode == PretrainMode::pause) {
                    return pause_pretrain_loss(model, g, paused[static_cast<size_t>(b)]);
                }
                return standard_pretrain_loss(model, g, raw[static_cast<size_t>(b)]);
            });
            opt.step(lr_schedule(step, tc));
        } catch (const NumericError& e) {
            throw NumericError("pretrain step " + std::to_string(step) + " aborted: " + e.what());
        }
        for (Tensor<T>* p : model.param_list()) {
            p->zero_grad();
        }
        const double mean = out.n_terms > 0 ? out.loss_sum / static_cast<double>(out.n_terms) : 0.0;
        res.curve.push_back({step, mean, lr_schedule(step, tc), res.tokens_seen});
        res.final_loss = mean;
    }
    return res;
}

struct FinetuneResult {
    std::vector<CurvePoint> curve;
    long long tokens_seen = 0;
    double final_loss = 0.0;
};

/// Finetuning loop over (prefix, target) examples with a fixed delay count.
/// Epoch order is a deterministic per-seed shuffle; standard mode runs the
/// undelayed loss path and requires m_ft == 0.
template <typename T>
FinetuneResult train_finetune(ModelParams<T>& model, const std::vector<FinetuneExample>& examples,
                              const TrainConfig& tc, FinetuneMode mode, int m_ft, int pause_id,
                              Placement placement) {
    tc.validate();
    if (examples.empty()) {
        throw ConfigError("finetuning needs at least one example");
    }
    if (mode == FinetuneMode::standard && m_ft != 0) {
        throw ConfigError("standard finetuning requires m_ft == 0, got " + std::to_string(m_ft));
    }
    for (size_t i = 0; i < examples.size(); ++i) {
        const long long len = static_cast<long long>(examples[i].prefix.size()) + m_ft +
                              static_cast<long long>(examples[i].target.size());
        if (len > model.config.max_positions) {
            throw LengthError("example " + std::to_string(i) + " needs " + std::to_string(len) +
                              " positions, max_positions is " +
                              std::to_string(model.config.max_positions));
        }
    }

    std::vector<NamedParam<T>> named;
    model.for_each_param([&](const std::string& n, Tensor<T>& t) { named.push_back({n, &t}); });
    AdamOptimizer<T> opt(named, tc);
    BatchRunner<T> runner(model.param_list(), tc.threads);

    std::vector<int> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    size_t cursor = order.size(); // trigger shuffle on first use
    long long epoch = 0;

    FinetuneResult res;
    res.curve.reserve(static_cast<size_t>(tc.total_steps));

    for (int step = 0; step < tc.total_steps; ++step) {
        std::vector<const FinetuneExample*> batch;
        long long total_terms = 0;
        for (int b = 0; b < tc.batch_size; ++b) {
            if (cursor >= order.size()) {
                Rng rng(derive_seed(tc.seed, "shuffle", static_cast<uint64_t>(epoch)));
                rng.shuffle(order);
                cursor = 0;
                epoch += 1;
            }
            const FinetuneExample* ex = &examples[static_cast<size_t>(order[cursor++])];
            total_terms += static_cast<long long>(ex->target.size());
            res.tokens_seen += static_cast<long long>(ex->prefix.size()) + m_ft +
                               static_cast<long long>(ex->target.size());
            batch.push_back(ex);
        }
        const double inv = 1.0 / static_cast<double>(total_terms);

        typename BatchRunner<T>::Outcome out;
        try {
            out = runner.run(tc.batch_size, inv, [&](int b, Graph<T>& g) {
                if (mode == FinetuneMode::pause) {
                    return pause_finetune_loss(model, g, *batch[static_cast<size_t>(b)], m_ft,
                                               pause_id, placement);
                }
                return standard_finetune_loss(model, g, *batch[static_cast<size_t>(b)]);
            });
            opt.step(lr_schedule(step, tc));
        } catch (const NumericError& e) {
            throw NumericError("finetune step " + std::to_string(step) + " aborted: " + e.what());
        }
        for (Tensor<T>* p : model.param_list()) {
            p->zero_grad();
        }
        const double mean = out.loss_sum / static_cast<double>(out.n_terms);
        res.curve.push_back({step, mean, lr_schedule(step, tc), res.tokens_seen});
        res.final_loss = mean;
    }
    return res;
}

} // namespace pauselab
