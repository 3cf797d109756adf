// Microbenchmarks for the pieces that dominate training time: the matmul
// kernels, a full forward, and a forward+backward training step.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pauselab/graph.hpp"
#include "pauselab/mask.hpp"
#include "pauselab/model.hpp"
#include "pauselab/pause.hpp"
#include "pauselab/tensor.hpp"

using namespace pauselab;

namespace {

std::vector<float> random_buf(size_t n, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> d(-1.f, 1.f);
    std::vector<float> out(n);
    for (float& x : out) {
        x = d(rng);
    }
    return out;
}

void bm_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto a = random_buf(static_cast<size_t>(n) * n, 1);
    const auto b = random_buf(static_cast<size_t>(n) * n, 2);
    std::vector<float> c(static_cast<size_t>(n) * n);
    for (auto _ : state) {
        std::fill(c.begin(), c.end(), 0.f);
        mm_nn_acc(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

ModelParams<float> desk_model() {
    ModelConfig cfg;
    cfg.n_layers = 4;
    cfg.n_heads = 4;
    cfg.d_model = 128;
    cfg.d_attn = 32;
    cfg.d_ff = 512;
    cfg.max_positions = 512;
    cfg.vocab_size = 32;
    return ModelParams<float>::init(cfg, 42);
}

void bm_forward(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    const ModelParams<float> model = desk_model();
    std::vector<int> tokens(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        tokens[static_cast<size_t>(i)] = i % model.config.vocab_size;
    }
    const AttentionMask mask = build_causal_mask(k);
    for (auto _ : state) {
        Graph<float> g;
        benchmark::DoNotOptimize(g.value(model.forward(g, tokens, mask)).data());
    }
}

void bm_train_step(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    ModelParams<float> model = desk_model();
    std::vector<int> tokens(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        tokens[static_cast<size_t>(i)] = i % model.config.vocab_size;
    }
    for (auto _ : state) {
        Graph<float> g;
        const auto loss = standard_pretrain_loss(model, g, tokens);
        g.backward(g.scale(loss.sum, 1.f / static_cast<float>(loss.n_terms)));
        for (Tensor<float>* p : model.param_list()) {
            p->zero_grad();
        }
    }
}

} // namespace

BENCHMARK(bm_matmul)->Arg(128)->Arg(256);
BENCHMARK(bm_forward)->Arg(64)->Arg(256);
BENCHMARK(bm_train_step)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
