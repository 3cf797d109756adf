#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pauselab/graph.hpp"
#include "pauselab/mask.hpp"
#include "pauselab/rng.hpp"
#include "pauselab/tensor.hpp"

namespace pauselab {

enum class Activation : uint8_t { gelu, relu };

inline const char* activation_name(Activation a) {
    return a == Activation::gelu ? "gelu" : "relu";
}

struct ModelConfig {
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 128;
    int d_attn = 32; // conventionally d_model / n_heads
    int d_ff = 512;
    int max_positions = 512;
    int vocab_size = 0;
    Activation activation = Activation::gelu;
    bool tied_unembed = false;
    float layer_norm_eps = 1e-5f;

    void validate() const {
        if (n_layers < 0 || n_heads <= 0 || d_model <= 0 || d_attn <= 0 || d_ff <= 0 ||
            max_positions <= 0 || vocab_size <= 0) {
            throw ConfigError("model config extents must be positive");
        }
    }

    bool same_shape(const ModelConfig& o) const {
        return n_layers == o.n_layers && n_heads == o.n_heads && d_model == o.d_model &&
               d_attn == o.d_attn && d_ff == o.d_ff && max_positions == o.max_positions &&
               vocab_size == o.vocab_size && tied_unembed == o.tied_unembed;
    }
};

/// Exact analytic parameter counts per component.
struct ParamCounts {
    long long token_embedding = 0;
    long long position_embedding = 0;
    long long unembedding = 0;
    long long attention = 0;
    long long feedforward = 0;
    long long layer_norm = 0;

    long long total() const {
        return token_embedding + position_embedding + unembedding + attention + feedforward +
               layer_norm;
    }
};

inline ParamCounts count_params(const ModelConfig& cfg) {
    cfg.validate();
    const long long v = cfg.vocab_size, d = cfg.d_model, a = cfg.d_attn;
    ParamCounts c;
    c.token_embedding = v * d;
    c.position_embedding = static_cast<long long>(cfg.max_positions) * d;
    c.unembedding = cfg.tied_unembed ? 0 : d * v;
    c.attention = static_cast<long long>(cfg.n_layers) * cfg.n_heads * 4 * a * d;
    c.feedforward = static_cast<long long>(cfg.n_layers) * (d * cfg.d_ff + cfg.d_ff + cfg.d_ff * d + d);
    c.layer_norm = static_cast<long long>(cfg.n_layers) * 4 * d;
    return c;
}

/// Decoder-only transformer: token+position embeddings, per-head attention
/// with a caller-supplied mask, GELU/ReLU feedforward, post-norm residual
/// blocks, linear unembedding to logits.
template <typename T>
struct ModelParams {
    ModelConfig config;

    Tensor<T> tok_embed; // |V| x D
    Tensor<T> pos_embed; // max_positions x D
    Tensor<T> unembed;   // D x |V| (absent when tied)

    struct HeadParams {
        Tensor<T> w_query; // D x D_attn
        Tensor<T> w_key;   // D x D_attn
        Tensor<T> w_value; // D x D_attn
        Tensor<T> w_out;   // D_attn x D
    };
    struct LayerParams {
        std::vector<HeadParams> heads;
        Tensor<T> ff_w1; // D x d_ff
        Tensor<T> ff_b1; // d_ff
        Tensor<T> ff_w2; // d_ff x D
        Tensor<T> ff_b2; // D
        Tensor<T> ln1_gamma, ln1_beta; // D, after attention residual
        Tensor<T> ln2_gamma, ln2_beta; // D, after feedforward residual
    };
    std::vector<LayerParams> layers;

    /// Stable iteration order; fixes checkpoint record order and init draws.
    template <typename Fn>
    void for_each_param(Fn&& fn) {
        fn("tok_embed", tok_embed);
        fn("pos_embed", pos_embed);
        if (!config.tied_unembed) {
            fn("unembed", unembed);
        }
        for (size_t l = 0; l < layers.size(); ++l) {
            const std::string lp = "layer" + std::to_string(l) + ".";
            for (size_t h = 0; h < layers[l].heads.size(); ++h) {
                const std::string hp = lp + "head" + std::to_string(h) + ".";
                fn(hp + "w_query", layers[l].heads[h].w_query);
                fn(hp + "w_key", layers[l].heads[h].w_key);
                fn(hp + "w_value", layers[l].heads[h].w_value);
                fn(hp + "w_out", layers[l].heads[h].w_out);
            }
            fn(lp + "ff_w1", layers[l].ff_w1);
            fn(lp + "ff_b1", layers[l].ff_b1);
            fn(lp + "ff_w2", layers[l].ff_w2);
            fn(lp + "ff_b2", layers[l].ff_b2);
            fn(lp + "ln1_gamma", layers[l].ln1_gamma);
            fn(lp + "ln1_beta", layers[l].ln1_beta);
            fn(lp + "ln2_gamma", layers[l].ln2_gamma);
            fn(lp + "ln2_beta", layers[l].ln2_beta);
        }
    }

    std::vector<Tensor<T>*> param_list() {
        std::vector<Tensor<T>*> out;
        for_each_param([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
        return out;
    }

    size_t n_scalars() {
        size_t n = 0;
        for_each_param([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
        return n;
    }

    /// Weights ~ Normal(0, 0.02^2); layer-norm gamma 1, beta 0; biases 0.
    /// Deterministic per seed.
    static ModelParams init(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        const int d = cfg.d_model, a = cfg.d_attn;
        p.tok_embed = Tensor<T>::zeros({cfg.vocab_size, d}, true);
        p.pos_embed = Tensor<T>::zeros({cfg.max_positions, d}, true);
        if (!cfg.tied_unembed) {
            p.unembed = Tensor<T>::zeros({d, cfg.vocab_size}, true);
        }
        p.layers.resize(cfg.n_layers);
        for (auto& layer : p.layers) {
            layer.heads.resize(cfg.n_heads);
            for (auto& head : layer.heads) {
                head.w_query = Tensor<T>::zeros({d, a}, true);
                head.w_key = Tensor<T>::zeros({d, a}, true);
                head.w_value = Tensor<T>::zeros({d, a}, true);
                head.w_out = Tensor<T>::zeros({a, d}, true);
            }
            layer.ff_w1 = Tensor<T>::zeros({d, cfg.d_ff}, true);
            layer.ff_b1 = Tensor<T>::zeros({cfg.d_ff}, true);
            layer.ff_w2 = Tensor<T>::zeros({cfg.d_ff, d}, true);
            layer.ff_b2 = Tensor<T>::zeros({d}, true);
            layer.ln1_gamma = Tensor<T>::full({d}, T(1), true);
            layer.ln1_beta = Tensor<T>::zeros({d}, true);
            layer.ln2_gamma = Tensor<T>::full({d}, T(1), true);
            layer.ln2_beta = Tensor<T>::zeros({d}, true);
        }

        Rng rng(seed);
        p.for_each_param([&](const std::string& name, Tensor<T>& t) {
            const bool is_bias = name.ends_with("ff_b1") || name.ends_with("ff_b2");
            const bool is_ln = name.find("ln1_") != std::string::npos ||
                               name.find("ln2_") != std::string::npos;
            if (is_bias || is_ln) {
                return; // keep the constructed values
            }
            for (T& x : t.data) {
                x = static_cast<T>(rng.normal(0.0, 0.02));
            }
        });
        return p;
    }

    /// Row k of the result is tok_embed[tokens[k]] + pos_embed[k] (0-indexed
    /// positions).
    NodeId embed(Graph<T>& g, std::span<const int> tokens) const {
        const int k = static_cast<int>(tokens.size());
        if (k == 0) {
            throw LengthError("embed: empty token sequence");
        }
        if (k > config.max_positions) {
            throw LengthError("sequence length " + std::to_string(k) + " exceeds max_positions " +
                              std::to_string(config.max_positions));
        }
        std::vector<int> ids(tokens.begin(), tokens.end());
        for (int id : ids) {
            if (id < 0 || id >= config.vocab_size) {
                throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(config.vocab_size));
            }
        }
        std::vector<int> positions(tokens.size());
        for (int i = 0; i < k; ++i) {
            positions[i] = i;
        }
        // for_each_param is non-const; leaf registration needs mutable tensors.
        auto& self = const_cast<ModelParams&>(*this);
        const NodeId tok = g.gather_rows(g.leaf(self.tok_embed), std::move(ids));
        const NodeId pos = g.gather_rows(g.leaf(self.pos_embed), std::move(positions));
        return g.add(tok, pos);
    }

    /// Multi-head attention with residual and post-layer-norm:
    /// LN(v + sum_h softmax(Q K^T / sqrt(D_attn), mask) V W_out).
    NodeId attention_block(Graph<T>& g, NodeId v_in, int layer, const AttentionMask& mask) const {
        const int k = g.shape(v_in)[0];
        if (mask.n_query != k || mask.n_key != k) {
            throw ShapeError("attention mask " + std::to_string(mask.n_query) + "x" +
                             std::to_string(mask.n_key) + " does not match sequence length " +
                             std::to_string(k));
        }
        auto& lp = const_cast<ModelParams&>(*this).layers[layer];
        const T inv_sqrt = T(1) / std::sqrt(T(config.d_attn));
        NodeId summed = -1;
        for (int h = 0; h < config.n_heads; ++h) {
            auto& hp = lp.heads[h];
            const NodeId q = g.matmul(v_in, g.leaf(hp.w_query));
            const NodeId kk = g.matmul(v_in, g.leaf(hp.w_key));
            const NodeId vv = g.matmul(v_in, g.leaf(hp.w_value));
            const NodeId scores = g.scale(g.matmul_nt(q, kk), inv_sqrt);
            const NodeId weights = g.softmax_rows(scores, &mask);
            const NodeId mixed = g.matmul(weights, vv);
            const NodeId head_out = g.matmul(mixed, g.leaf(hp.w_out));
            summed = h == 0 ? head_out : g.add(summed, head_out);
        }
        const NodeId residual = g.add(v_in, summed);
        return g.layer_norm(residual, g.leaf(lp.ln1_gamma), g.leaf(lp.ln1_beta),
                            T(config.layer_norm_eps));
    }

    /// Row-wise MLP with residual and post-layer-norm: LN(FF(a) + a).
    NodeId feedforward_block(Graph<T>& g, NodeId a, int layer) const {
        auto& lp = const_cast<ModelParams&>(*this).layers[layer];
        const NodeId pre = g.add_row_bias(g.matmul(a, g.leaf(lp.ff_w1)), g.leaf(lp.ff_b1));
        const NodeId act = config.activation == Activation::gelu ? g.gelu(pre) : g.relu(pre);
        const NodeId ff = g.add_row_bias(g.matmul(act, g.leaf(lp.ff_w2)), g.leaf(lp.ff_b2));
        const NodeId residual = g.add(a, ff);
        return g.layer_norm(residual, g.leaf(lp.ln2_gamma), g.leaf(lp.ln2_beta),
                            T(config.layer_norm_eps));
    }

    /// Full forward to logits (K x |V|). Row k parameterizes the distribution
    /// of token k+1.
    NodeId forward(Graph<T>& g, std::span<const int> tokens, const AttentionMask& mask) const {
        NodeId x = embed(g, tokens);
        for (int l = 0; l < config.n_layers; ++l) {
            x = attention_block(g, x, l, mask);
            x = feedforward_block(g, x, l);
        }
        auto& self = const_cast<ModelParams&>(*this);
        if (config.tied_unembed) {
            return g.matmul_nt(x, g.leaf(self.tok_embed));
        }
        return g.matmul(x, g.leaf(self.unembed));
    }

    /// Forward without building gradient state for leaves (evaluation path
    /// shares the same graph code; parameters stay read-only).
    std::vector<T> forward_values(std::span<const int> tokens, const AttentionMask& mask) const {
        Graph<T> g;
        const NodeId logits = forward(g, tokens, mask);
        return g.value(logits);
    }
};

} // namespace pauselab
