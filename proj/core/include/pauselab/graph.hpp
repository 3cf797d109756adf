#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pauselab/errors.hpp"
#include "pauselab/mask.hpp"
#include "pauselab/tensor.hpp"

namespace pauselab {

using NodeId = int;

/// Routes leaf-gradient accumulation away from Tensor::grad and into external
/// buffers. The trainer uses one sink per batch element so per-example
/// gradients can be reduced in a fixed order regardless of thread schedule.
template <typename T>
struct GradSink {
    std::unordered_map<const Tensor<T>*, std::vector<T>*> slots;

    std::vector<T>* find(const Tensor<T>* t) const {
        auto it = slots.find(t);
        return it == slots.end() ? nullptr : it->second;
    }
};

/// Reverse-mode tape over dense tensors. Forward values are computed eagerly
/// as nodes are created, so the node list is topologically ordered by
/// construction and backward() is a single reverse sweep.
///
/// Semantics:
///  - interior adjoints are reset on every backward() call;
///  - leaf gradients accumulate into Tensor::grad (explicit zero_grad to reset),
///    so calling backward twice on the same graph doubles leaf grads;
///  - any non-finite value in a forward result or a leaf gradient throws
///    NumericError with the offending op and node id.
///
/// A graph and its tensors belong to one thread; distinct graphs may run on
/// distinct threads against shared read-only parameters.
template <typename T>
class Graph {
public:
    const Shape& shape(NodeId id) const { return nodes_[id].value.shape; }
    const std::vector<T>& value(NodeId id) const { return nodes_[id].value.data; }
    const std::vector<T>& adjoint(NodeId id) const { return nodes_[id].adjoint; }
    size_t node_count() const { return nodes_.size(); }

    bool check_finite = true;

    // -- node constructors ---------------------------------------------------

    /// Registers an external tensor (value copied; the tensor itself is not
    /// touched until backward, so evaluation forwards can share parameters
    /// read-only across threads). Every registered requires_grad leaf gets a
    /// gradient on backward, zero when no path reaches the root.
    NodeId leaf(Tensor<T>& t) {
        Node n;
        n.op = Op::leaf;
        n.leaf_ref = &t;
        n.value.shape = t.shape;
        n.value.data = t.data;
        return push(std::move(n), "leaf");
    }

    NodeId constant(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("constant data length does not match " + shape_str(shape));
        }
        Node n;
        n.op = Op::constant;
        n.value.shape = std::move(shape);
        n.value.data = std::move(data);
        return push(std::move(n), "constant");
    }

    /// C = A(m x k) * B(k x n)
    NodeId matmul(NodeId a, NodeId b) {
        require_rank2(a, "matmul lhs");
        require_rank2(b, "matmul rhs");
        const int m = shape(a)[0], k = shape(a)[1];
        const int k2 = shape(b)[0], nn = shape(b)[1];
        if (k != k2) {
            throw ShapeError("matmul inner extents differ: " + shape_str(shape(a)) + " vs " +
                             shape_str(shape(b)));
        }
        Node n;
        n.op = Op::matmul;
        n.in = {a, b};
        n.value.shape = {m, nn};
        n.value.data.assign(static_cast<size_t>(m) * nn, T(0));
        mm_nn_acc(value(a).data(), value(b).data(), n.value.data.data(), m, k, nn);
        return push(std::move(n), "matmul");
    }

    /// C = A(m x k) * B(n x k)^T
    NodeId matmul_nt(NodeId a, NodeId b) {
        require_rank2(a, "matmul_nt lhs");
        require_rank2(b, "matmul_nt rhs");
        const int m = shape(a)[0], k = shape(a)[1];
        const int nn = shape(b)[0], k2 = shape(b)[1];
        if (k != k2) {
            throw ShapeError("matmul_nt inner extents differ: " + shape_str(shape(a)) + " vs " +
                             shape_str(shape(b)));
        }
        Node n;
        n.op = Op::matmul_nt;
        n.in = {a, b};
        n.value.shape = {m, nn};
        n.value.data.assign(static_cast<size_t>(m) * nn, T(0));
        mm_nt_acc(value(a).data(), value(b).data(), n.value.data.data(), m, k, nn);
        return push(std::move(n), "matmul_nt");
    }

    NodeId add(NodeId a, NodeId b) {
        if (shape(a) != shape(b)) {
            throw ShapeError("add shapes differ: " + shape_str(shape(a)) + " vs " +
                             shape_str(shape(b)));
        }
        Node n;
        n.op = Op::add;
        n.in = {a, b};
        n.value.shape = shape(a);
        n.value.data.resize(value(a).size());
        for (size_t i = 0; i < n.value.data.size(); ++i) {
            n.value.data[i] = value(a)[i] + value(b)[i];
        }
        return push(std::move(n), "add");
    }

    /// x(K x N) + bias(N) broadcast over rows.
    NodeId add_row_bias(NodeId x, NodeId bias) {
        require_rank2(x, "add_row_bias input");
        if (shape(bias).size() != 1 || shape(bias)[0] != shape(x)[1]) {
            throw ShapeError("bias shape " + shape_str(shape(bias)) + " does not match columns of " +
                             shape_str(shape(x)));
        }
        const int rows = shape(x)[0], cols = shape(x)[1];
        Node n;
        n.op = Op::add_row_bias;
        n.in = {x, bias};
        n.value.shape = shape(x);
        n.value.data.resize(value(x).size());
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                n.value.data[static_cast<size_t>(i) * cols + j] =
                    value(x)[static_cast<size_t>(i) * cols + j] + value(bias)[j];
            }
        }
        return push(std::move(n), "add_row_bias");
    }

    NodeId scale(NodeId x, T c) {
        Node n;
        n.op = Op::scale;
        n.in = {x};
        n.c = c;
        n.value.shape = shape(x);
        n.value.data.resize(value(x).size());
        for (size_t i = 0; i < n.value.data.size(); ++i) {
            n.value.data[i] = c * value(x)[i];
        }
        return push(std::move(n), "scale");
    }

    /// Row-wise softmax with numerically stable max subtraction. Masked
    /// entries come out exactly 0. `mask` (optional) must outlive the graph.
    NodeId softmax_rows(NodeId x, const AttentionMask* mask = nullptr) {
        require_rank2(x, "softmax_rows input");
        const int rows = shape(x)[0], cols = shape(x)[1];
        if (mask != nullptr && (mask->n_query != rows || mask->n_key != cols)) {
            throw ShapeError("mask " + std::to_string(mask->n_query) + "x" +
                             std::to_string(mask->n_key) + " does not match logits " +
                             shape_str(shape(x)));
        }
        Node n;
        n.op = Op::softmax_rows;
        n.in = {x};
        n.mask = mask;
        n.value.shape = shape(x);
        n.value.data.assign(value(x).size(), T(0));
        for (int i = 0; i < rows; ++i) {
            const T* xr = value(x).data() + static_cast<size_t>(i) * cols;
            T* pr = n.value.data.data() + static_cast<size_t>(i) * cols;
            T mx = T(0);
            bool any = false;
            for (int j = 0; j < cols; ++j) {
                if (mask == nullptr || mask->at(i, j)) {
                    mx = any ? (xr[j] > mx ? xr[j] : mx) : xr[j];
                    any = true;
                }
            }
            if (!any) {
                throw MaskError("softmax_rows: row " + std::to_string(i) + " fully masked");
            }
            T sum = T(0);
            for (int j = 0; j < cols; ++j) {
                if (mask == nullptr || mask->at(i, j)) {
                    pr[j] = std::exp(xr[j] - mx);
                    sum += pr[j];
                }
            }
            const T inv = T(1) / sum;
            for (int j = 0; j < cols; ++j) {
                pr[j] *= inv;
            }
        }
        return push(std::move(n), "softmax_rows");
    }

    /// Per-row mean-0 variance-1 normalization (population variance, eps
    /// inside the square root), then elementwise gamma/beta. x may be rank-1
    /// (one vector) or rank-2 (rows of vectors).
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, T eps) {
        const Shape& xs = shape(x);
        const int d = xs.back();
        if (shape(gamma).size() != 1 || shape(gamma)[0] != d || shape(beta) != shape(gamma)) {
            throw ShapeError("layer_norm gamma/beta must be rank-1 of extent " + std::to_string(d));
        }
        const int rows = static_cast<int>(value(x).size()) / d;
        Node n;
        n.op = Op::layer_norm;
        n.in = {x, gamma, beta};
        n.c = eps;
        n.value.shape = xs;
        n.value.data.resize(value(x).size());
        n.aux.resize(static_cast<size_t>(rows) * 2); // per-row mean, inv_std
        for (int i = 0; i < rows; ++i) {
            const T* xr = value(x).data() + static_cast<size_t>(i) * d;
            T* yr = n.value.data.data() + static_cast<size_t>(i) * d;
            T mean = T(0);
            for (int j = 0; j < d; ++j) {
                mean += xr[j];
            }
            mean /= T(d);
            T var = T(0);
            for (int j = 0; j < d; ++j) {
                const T c = xr[j] - mean;
                var += c * c;
            }
            var /= T(d);
            const T inv_std = T(1) / std::sqrt(var + eps);
            n.aux[static_cast<size_t>(i) * 2] = mean;
            n.aux[static_cast<size_t>(i) * 2 + 1] = inv_std;
            for (int j = 0; j < d; ++j) {
                yr[j] = value(gamma)[j] * ((xr[j] - mean) * inv_std) + value(beta)[j];
            }
        }
        return push(std::move(n), "layer_norm");
    }

    /// Exact GELU: x * Phi(x) with the normal CDF.
    NodeId gelu(NodeId x) {
        Node n;
        n.op = Op::gelu;
        n.in = {x};
        n.value.shape = shape(x);
        n.value.data.resize(value(x).size());
        for (size_t i = 0; i < n.value.data.size(); ++i) {
            const T v = value(x)[i];
            n.value.data[i] = v * normal_cdf(v);
        }
        return push(std::move(n), "gelu");
    }

    NodeId relu(NodeId x) {
        Node n;
        n.op = Op::relu;
        n.in = {x};
        n.value.shape = shape(x);
        n.value.data.resize(value(x).size());
        for (size_t i = 0; i < n.value.data.size(); ++i) {
            n.value.data[i] = value(x)[i] > T(0) ? value(x)[i] : T(0);
        }
        return push(std::move(n), "relu");
    }

    /// out[i] = table[ids[i]]; repeated ids accumulate in backward.
    NodeId gather_rows(NodeId table, std::vector<int> ids) {
        require_rank2(table, "gather_rows table");
        const int rows = shape(table)[0], d = shape(table)[1];
        for (int id : ids) {
            if (id < 0 || id >= rows) {
                throw IndexError("gather_rows id " + std::to_string(id) + " outside [0, " +
                                 std::to_string(rows) + ")");
            }
        }
        Node n;
        n.op = Op::gather_rows;
        n.in = {table};
        n.ids = std::move(ids);
        n.value.shape = {static_cast<int>(n.ids.size()), d};
        n.value.data.resize(n.ids.size() * static_cast<size_t>(d));
        for (size_t i = 0; i < n.ids.size(); ++i) {
            const T* src = value(table).data() + static_cast<size_t>(n.ids[i]) * d;
            std::copy(src, src + d, n.value.data.data() + i * static_cast<size_t>(d));
        }
        return push(std::move(n), "gather_rows");
    }

    /// -log softmax(logits)[target] for a single rank-1 logit vector.
    NodeId cross_entropy_logits(NodeId logits, int target) {
        if (shape(logits).size() != 1) {
            throw ShapeError("cross_entropy_logits expects rank-1 logits, got " +
                             shape_str(shape(logits)));
        }
        const int v = shape(logits)[0];
        if (target < 0 || target >= v) {
            throw IndexError("cross-entropy target " + std::to_string(target) + " outside [0, " +
                             std::to_string(v) + ")");
        }
        Node n;
        n.op = Op::cross_entropy;
        n.in = {logits};
        n.ids = {target};
        n.value.shape = {1};
        n.aux.resize(1);
        const T lse = log_sum_exp(value(logits).data(), v);
        n.aux[0] = lse;
        n.value.data = {lse - value(logits)[target]};
        return push(std::move(n), "cross_entropy");
    }

    /// Sum of per-row cross-entropies over the rows flagged active. Rows with
    /// active[r] == 0 contribute nothing and receive zero gradient.
    NodeId masked_ce_sum(NodeId logits, std::vector<int> targets, std::vector<uint8_t> active) {
        require_rank2(logits, "masked_ce_sum logits");
        const int rows = shape(logits)[0], v = shape(logits)[1];
        if (static_cast<int>(targets.size()) != rows || static_cast<int>(active.size()) != rows) {
            throw ShapeError("masked_ce_sum: targets/active length must equal logit rows");
        }
        Node n;
        n.op = Op::masked_ce_sum;
        n.in = {logits};
        n.ids = std::move(targets);
        n.active = std::move(active);
        n.value.shape = {1};
        n.aux.assign(rows, T(0));
        T total = T(0);
        for (int r = 0; r < rows; ++r) {
            if (!n.active[r]) {
                continue;
            }
            const int t = n.ids[r];
            if (t < 0 || t >= v) {
                throw IndexError("masked_ce_sum target " + std::to_string(t) + " outside [0, " +
                                 std::to_string(v) + ") at row " + std::to_string(r));
            }
            const T* xr = value(logits).data() + static_cast<size_t>(r) * v;
            const T lse = log_sum_exp(xr, v);
            n.aux[r] = lse;
            total += lse - xr[t];
        }
        n.value.data = {total};
        return push(std::move(n), "masked_ce_sum");
    }

    // -- backward -------------------------------------------------------------

    /// Reverse sweep from a scalar root. Interior adjoints are reset first;
    /// leaf gradients accumulate (into `sink` buffers when provided, else into
    /// Tensor::grad).
    void backward(NodeId root, const GradSink<T>* sink = nullptr) {
        if (value(root).size() != 1) {
            throw RankError("backward root must be scalar, got shape " + shape_str(shape(root)));
        }
        for (Node& n : nodes_) {
            n.adjoint.assign(n.value.data.size(), T(0));
        }
        nodes_[root].adjoint[0] = T(1);

        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            backward_node(id, sink);
        }
    }

private:
    enum class Op : uint8_t {
        leaf,
        constant,
        matmul,
        matmul_nt,
        add,
        add_row_bias,
        scale,
        softmax_rows,
        layer_norm,
        gelu,
        relu,
        gather_rows,
        cross_entropy,
        masked_ce_sum,
    };

    struct Buf {
        Shape shape;
        std::vector<T> data;
    };

    struct Node {
        Op op = Op::constant;
        std::vector<NodeId> in;
        Buf value;
        std::vector<T> adjoint;
        std::vector<T> aux;          // op-specific cache (layer_norm stats, CE logsumexp)
        std::vector<int> ids;        // gather ids / CE targets
        std::vector<uint8_t> active; // masked CE row flags
        const AttentionMask* mask = nullptr;
        T c = T(0);
        Tensor<T>* leaf_ref = nullptr;
    };

    std::vector<Node> nodes_;

    NodeId push(Node&& n, const char* opname) {
        if (check_finite && !all_finite(n.value.data)) {
            throw NumericError(std::string("non-finite value in forward op '") + opname +
                               "' (node " + std::to_string(nodes_.size()) + ", shape " +
                               shape_str(n.value.shape) + ")");
        }
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    void require_rank2(NodeId id, const char* what) const {
        if (shape(id).size() != 2) {
            throw ShapeError(std::string(what) + " must be rank-2, got " + shape_str(shape(id)));
        }
    }

    static T normal_cdf(T x) {
        return T(0.5) * std::erfc(-x * T(0.7071067811865475244));
    }

    static T normal_pdf(T x) {
        return T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
    }

    static T log_sum_exp(const T* x, int n) {
        T mx = x[0];
        for (int i = 1; i < n; ++i) {
            mx = x[i] > mx ? x[i] : mx;
        }
        T s = T(0);
        for (int i = 0; i < n; ++i) {
            s += std::exp(x[i] - mx);
        }
        return mx + std::log(s);
    }

    std::vector<T>& adj(NodeId id) { return nodes_[id].adjoint; }

    void backward_node(NodeId id, const GradSink<T>* sink) {
        Node& n = nodes_[id];
        const std::vector<T>& g = n.adjoint;
        switch (n.op) {
        case Op::constant:
            break;
        case Op::leaf: {
            Tensor<T>* t = n.leaf_ref;
            if (t == nullptr || !t->requires_grad) {
                break;
            }
            std::vector<T>* out = nullptr;
            if (sink != nullptr) {
                out = sink->find(t);
            }
            if (out == nullptr) {
                t->ensure_grad();
                out = &t->grad;
            }
            if (check_finite && !all_finite(g)) {
                throw NumericError("non-finite leaf gradient (node " + std::to_string(id) + ")");
            }
            for (size_t i = 0; i < g.size(); ++i) {
                (*out)[i] += g[i];
            }
            break;
        }
        case Op::matmul: {
            const NodeId a = n.in[0], b = n.in[1];
            const int m = shape(a)[0], k = shape(a)[1], nn = shape(b)[1];
            // dA += dC * B^T ; dB += A^T * dC
            mm_nt_acc(g.data(), nodes_[b].value.data.data(), adj(a).data(), m, nn, k);
            mm_tn_acc(nodes_[a].value.data.data(), g.data(), adj(b).data(), m, k, nn);
            break;
        }
        case Op::matmul_nt: {
            const NodeId a = n.in[0], b = n.in[1];
            const int m = shape(a)[0], k = shape(a)[1], nn = shape(b)[0];
            // C = A B^T: dA += dC * B ; dB += dC^T * A
            mm_nn_acc(g.data(), nodes_[b].value.data.data(), adj(a).data(), m, nn, k);
            mm_tn_acc(g.data(), nodes_[a].value.data.data(), adj(b).data(), m, nn, k);
            break;
        }
        case Op::add: {
            for (size_t i = 0; i < g.size(); ++i) {
                adj(n.in[0])[i] += g[i];
                adj(n.in[1])[i] += g[i];
            }
            break;
        }
        case Op::add_row_bias: {
            const int rows = n.value.shape[0], cols = n.value.shape[1];
            std::vector<T>& dx = adj(n.in[0]);
            std::vector<T>& db = adj(n.in[1]);
            for (int i = 0; i < rows; ++i) {
                const T* gr = g.data() + static_cast<size_t>(i) * cols;
                T* dxr = dx.data() + static_cast<size_t>(i) * cols;
                for (int j = 0; j < cols; ++j) {
                    dxr[j] += gr[j];
                    db[j] += gr[j];
                }
            }
            break;
        }
        case Op::scale: {
            std::vector<T>& dx = adj(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                dx[i] += n.c * g[i];
            }
            break;
        }
        case Op::softmax_rows: {
            const int rows = n.value.shape[0], cols = n.value.shape[1];
            std::vector<T>& dx = adj(n.in[0]);
            for (int i = 0; i < rows; ++i) {
                const T* p = n.value.data.data() + static_cast<size_t>(i) * cols;
                const T* gr = g.data() + static_cast<size_t>(i) * cols;
                T* dxr = dx.data() + static_cast<size_t>(i) * cols;
                T dot = T(0);
                for (int j = 0; j < cols; ++j) {
                    dot += p[j] * gr[j];
                }
                for (int j = 0; j < cols; ++j) {
                    dxr[j] += p[j] * (gr[j] - dot); // masked entries have p == 0
                }
            }
            break;
        }
        case Op::layer_norm: {
            const NodeId x = n.in[0], gamma = n.in[1], beta = n.in[2];
            const int d = n.value.shape.back();
            const int rows = static_cast<int>(n.value.data.size()) / d;
            std::vector<T>& dx = adj(x);
            std::vector<T>& dgamma = adj(gamma);
            std::vector<T>& dbeta = adj(beta);
            const std::vector<T>& xv = nodes_[x].value.data;
            const std::vector<T>& gv = nodes_[gamma].value.data;
            for (int i = 0; i < rows; ++i) {
                const T mean = n.aux[static_cast<size_t>(i) * 2];
                const T inv_std = n.aux[static_cast<size_t>(i) * 2 + 1];
                const T* xr = xv.data() + static_cast<size_t>(i) * d;
                const T* gr = g.data() + static_cast<size_t>(i) * d;
                T* dxr = dx.data() + static_cast<size_t>(i) * d;
                T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                for (int j = 0; j < d; ++j) {
                    const T xhat = (xr[j] - mean) * inv_std;
                    const T dxhat = gr[j] * gv[j];
                    dgamma[j] += gr[j] * xhat;
                    dbeta[j] += gr[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                }
                mean_dxhat /= T(d);
                mean_dxhat_xhat /= T(d);
                for (int j = 0; j < d; ++j) {
                    const T xhat = (xr[j] - mean) * inv_std;
                    const T dxhat = gr[j] * gv[j];
                    dxr[j] += inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            break;
        }
        case Op::gelu: {
            const std::vector<T>& xv = nodes_[n.in[0]].value.data;
            std::vector<T>& dx = adj(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                const T x = xv[i];
                dx[i] += g[i] * (normal_cdf(x) + x * normal_pdf(x));
            }
            break;
        }
        case Op::relu: {
            const std::vector<T>& xv = nodes_[n.in[0]].value.data;
            std::vector<T>& dx = adj(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                dx[i] += xv[i] > T(0) ? g[i] : T(0);
            }
            break;
        }
        case Op::gather_rows: {
            const int d = n.value.shape[1];
            std::vector<T>& dt = adj(n.in[0]);
            for (size_t i = 0; i < n.ids.size(); ++i) {
                const T* gr = g.data() + i * static_cast<size_t>(d);
                T* row = dt.data() + static_cast<size_t>(n.ids[i]) * d;
                for (int j = 0; j < d; ++j) {
                    row[j] += gr[j];
                }
            }
            break;
        }
        case Op::cross_entropy: {
            const NodeId lgt = n.in[0];
            const int v = shape(lgt)[0];
            const T lse = n.aux[0];
            const int target = n.ids[0];
            const std::vector<T>& xv = nodes_[lgt].value.data;
            std::vector<T>& dx = adj(lgt);
            const T gg = g[0];
            for (int j = 0; j < v; ++j) {
                const T p = std::exp(xv[j] - lse);
                dx[j] += gg * (p - (j == target ? T(1) : T(0)));
            }
            break;
        }
        case Op::masked_ce_sum: {
            const NodeId lgt = n.in[0];
            const int rows = shape(lgt)[0], v = shape(lgt)[1];
            const std::vector<T>& xv = nodes_[lgt].value.data;
            std::vector<T>& dx = adj(lgt);
            const T gg = g[0];
            for (int r = 0; r < rows; ++r) {
                if (!n.active[r]) {
                    continue;
                }
                const T lse = n.aux[r];
                const int target = n.ids[r];
                const T* xr = xv.data() + static_cast<size_t>(r) * v;
                T* dxr = dx.data() + static_cast<size_t>(r) * v;
                for (int j = 0; j < v; ++j) {
                    const T p = std::exp(xr[j] - lse);
                    dxr[j] += gg * (p - (j == target ? T(1) : T(0)));
                }
            }
            break;
        }
        }
    }
};

} // namespace pauselab
