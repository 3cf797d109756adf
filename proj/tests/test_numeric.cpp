// Tensor, autodiff graph and gradient-check tests. Expected values come from
// hand arithmetic or the central finite-difference oracle in grad_check.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pauselab/grad_check.hpp"
#include "pauselab/graph.hpp"
#include "pauselab/mask.hpp"
#include "pauselab/tensor.hpp"

using namespace pauselab;

namespace {

Tensor<double> random_tensor(Shape shape, uint32_t seed, bool requires_grad = true) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor<double> t = Tensor<double>::zeros(std::move(shape), requires_grad);
    for (double& x : t.data) {
        x = d(rng);
    }
    return t;
}

} // namespace

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor<double>({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>({0}, {}), ShapeError);
    const Tensor<double> t = Tensor<double>::zeros({2, 3});
    CHECK(t.numel() == 6);
}

TEST_CASE("matmul hand-checked values") {
    Graph<double> g;
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    const NodeId prod = g.matmul(g.leaf(eye), g.leaf(a));
    CHECK(g.value(prod) == std::vector<double>{1, 2, 3, 4});

    Tensor<double> b({2, 1}, {5, 6});
    const NodeId prod2 = g.matmul(g.leaf(a), g.leaf(b));
    CHECK(g.value(prod2) == std::vector<double>{17, 39});
}

TEST_CASE("matmul dimension mismatch") {
    Graph<double> g;
    Tensor<double> a = Tensor<double>::zeros({2, 3});
    Tensor<double> b = Tensor<double>::zeros({2, 3});
    CHECK_THROWS_AS(g.matmul(g.leaf(a), g.leaf(b)), ShapeError);
}

TEST_CASE("softmax_rows basics") {
    Graph<double> g;
    Tensor<double> x({1, 3}, {0, 0, 0});
    const NodeId s = g.softmax_rows(g.leaf(x));
    for (double v : g.value(s)) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    Tensor<double> big({1, 2}, {1000, 1000});
    const NodeId s2 = g.softmax_rows(g.leaf(big));
    CHECK(g.value(s2)[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.value(s2)[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax_rows masking") {
    Graph<double> g;
    Tensor<double> x({1, 2}, {5, 9});
    AttentionMask mask;
    mask.n_query = 1;
    mask.n_key = 2;
    mask.allow = {1, 0}; // second entry masked
    const NodeId s = g.softmax_rows(g.leaf(x), &mask);
    CHECK(g.value(s)[0] == 1.0);
    CHECK(g.value(s)[1] == 0.0); // exactly zero

    AttentionMask dead;
    dead.n_query = 1;
    dead.n_key = 2;
    dead.allow = {0, 0};
    CHECK_THROWS_AS(g.softmax_rows(g.leaf(x), &dead), MaskError);
}

TEST_CASE("softmax rows sum to one and masked entries stay zero on random input") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 6);
        const int cols = 2 + static_cast<int>(rng() % 6);
        Tensor<double> x = Tensor<double>::zeros({rows, cols});
        for (double& v : x.data) {
            v = d(rng);
        }
        AttentionMask mask;
        mask.n_query = rows;
        mask.n_key = cols;
        mask.allow.assign(static_cast<size_t>(rows) * cols, 0);
        for (int i = 0; i < rows; ++i) {
            mask.set(i, static_cast<int>(rng() % static_cast<unsigned>(cols)), true);
            for (int j = 0; j < cols; ++j) {
                if (rng() % 2) {
                    mask.set(i, j, true);
                }
            }
        }
        Graph<double> g;
        const NodeId s = g.softmax_rows(g.leaf(x), &mask);
        for (int i = 0; i < rows; ++i) {
            double sum = 0;
            for (int j = 0; j < cols; ++j) {
                const double p = g.value(s)[static_cast<size_t>(i) * cols + j];
                sum += p;
                if (!mask.at(i, j)) {
                    CHECK(p == 0.0);
                }
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("layer_norm closed-form cases") {
    Graph<double> g;
    Tensor<double> gamma = Tensor<double>::full({4}, 1.0);
    Tensor<double> beta = Tensor<double>::zeros({4});

    Tensor<double> constant = Tensor<double>::full({1, 4}, 3.7);
    const NodeId y = g.layer_norm(g.leaf(constant), g.leaf(gamma), g.leaf(beta), 1e-5);
    for (double v : g.value(y)) {
        CHECK(v == 0.0);
    }

    Tensor<double> g2 = Tensor<double>::full({2}, 1.0);
    Tensor<double> b2 = Tensor<double>::zeros({2});
    Tensor<double> unit({1, 2}, {1, -1});
    const NodeId y2 = g.layer_norm(g.leaf(unit), g.leaf(g2), g.leaf(b2), 1e-12);
    CHECK(g.value(y2)[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g.value(y2)[1] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("cross entropy closed-form cases") {
    Graph<double> g;
    const int v = 7;
    Tensor<double> uniform = Tensor<double>::zeros({v});
    const NodeId l = g.cross_entropy_logits(g.leaf(uniform), 3);
    CHECK(g.value(l)[0] == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));

    Tensor<double> saturated = Tensor<double>::zeros({16});
    saturated.data[5] = 40.0;
    const NodeId l2 = g.cross_entropy_logits(g.leaf(saturated), 5);
    CHECK(g.value(l2)[0] < 1e-12);

    CHECK_THROWS_AS(g.cross_entropy_logits(g.leaf(uniform), 7), IndexError);
    CHECK_THROWS_AS(g.cross_entropy_logits(g.leaf(uniform), -1), IndexError);
}

TEST_CASE("backward product rule and unused leaves") {
    Tensor<double> x({1, 1}, {3.0}, true);
    Tensor<double> y({1, 1}, {5.0}, true);
    Tensor<double> unused = Tensor<double>::zeros({2, 2}, true);
    Graph<double> g;
    const NodeId ux = g.leaf(x);
    const NodeId uy = g.leaf(y);
    g.leaf(unused); // registered but not connected to the root
    const NodeId prod = g.matmul(ux, uy);
    g.backward(prod);
    CHECK(x.grad[0] == 5.0);
    CHECK(y.grad[0] == 3.0);
    REQUIRE(unused.grad.size() == 4);
    for (double gv : unused.grad) {
        CHECK(gv == 0.0);
    }
}

TEST_CASE("backward rejects non-scalar roots") {
    Tensor<double> x = random_tensor({2, 2}, 1);
    Graph<double> g;
    const NodeId n = g.leaf(x);
    CHECK_THROWS_AS(g.backward(n), RankError);
}

TEST_CASE("backward twice doubles accumulated leaf grads") {
    Tensor<double> x({1, 2}, {0.3, -0.7}, true);
    Tensor<double> w({2, 1}, {1.5, 2.5}, true);
    Graph<double> g;
    const NodeId out = g.matmul(g.leaf(x), g.leaf(w));
    g.backward(out);
    const std::vector<double> once = w.grad;
    g.backward(out);
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(w.grad[i] == 2.0 * once[i]);
    }
}

TEST_CASE("ops are pure: same inputs give bit-identical outputs") {
    Tensor<double> a = random_tensor({3, 4}, 11);
    Tensor<double> b = random_tensor({4, 2}, 12);
    Graph<double> g1, g2;
    const auto v1 = g1.value(g1.gelu(g1.matmul(g1.leaf(a), g1.leaf(b))));
    const auto v2 = g2.value(g2.gelu(g2.matmul(g2.leaf(a), g2.leaf(b))));
    CHECK(v1 == v2);
}

TEST_CASE("non-finite forward values abort with diagnostics") {
    Tensor<double> a({1, 1}, {1e308}, true);
    Graph<double> g;
    const NodeId n = g.leaf(a);
    CHECK_THROWS_AS(g.add(n, n), NumericError);
}

// --- finite-difference oracle over every differentiable op ------------------

namespace {

GradCheckReport check_op(const std::function<double(Graph<double>&, bool)>& build,
                         std::vector<NamedParam<double>> params, double tol = 1e-6) {
    auto loss = [&](bool with_grad) {
        Graph<double> g;
        return build(g, with_grad);
    };
    return grad_check(loss, params, 1e-5, tol);
}

// Deterministic scalar readout for a rank-2 node: contract both sides with
// fixed weight vectors so every entry influences the result.
NodeId readout(Graph<double>& g, NodeId x) {
    const Shape& s = g.shape(x);
    const int rows = s[0];
    const int cols = s[1];
    std::vector<double> wl(static_cast<size_t>(rows)), wr(static_cast<size_t>(cols));
    for (size_t i = 0; i < wl.size(); ++i) {
        wl[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
    }
    for (size_t i = 0; i < wr.size(); ++i) {
        wr[i] = 0.2 * static_cast<double>(i % 5) - 0.4;
    }
    const NodeId left = g.constant({1, rows}, wl);
    const NodeId right = g.constant({cols, 1}, wr);
    return g.matmul(g.matmul(left, x), right);
}

} // namespace

TEST_CASE("gradients match central finite differences per op") {
    Tensor<double> a = random_tensor({3, 4}, 21);
    Tensor<double> b = random_tensor({4, 3}, 22);
    Tensor<double> c = random_tensor({3, 4}, 23);
    Tensor<double> bias = random_tensor({4}, 24);
    Tensor<double> gamma = random_tensor({4}, 25);
    Tensor<double> beta = random_tensor({4}, 26);

    SUBCASE("matmul") {
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.matmul(g.leaf(a), g.leaf(b)));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}, {"b", &b}});
        CHECK(rep.pass);
    }
    SUBCASE("matmul_nt") {
        Tensor<double> bt = random_tensor({5, 4}, 27);
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.matmul_nt(g.leaf(a), g.leaf(bt)));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}, {"bt", &bt}});
        CHECK(rep.pass);
    }
    SUBCASE("add and add_row_bias") {
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out =
                    readout(g, g.add_row_bias(g.add(g.leaf(a), g.leaf(c)), g.leaf(bias)));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}, {"c", &c}, {"bias", &bias}});
        CHECK(rep.pass);
    }
    SUBCASE("softmax_rows") {
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.softmax_rows(g.leaf(a)));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}});
        CHECK(rep.pass);
    }
    SUBCASE("softmax_rows masked") {
        AttentionMask mask = build_causal_mask(3);
        Tensor<double> sq = random_tensor({3, 3}, 28);
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.softmax_rows(g.leaf(sq), &mask));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"sq", &sq}});
        CHECK(rep.pass);
    }
    SUBCASE("layer_norm") {
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out =
                    readout(g, g.layer_norm(g.leaf(a), g.leaf(gamma), g.leaf(beta), 1e-5));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}, {"gamma", &gamma}, {"beta", &beta}});
        CHECK(rep.pass);
    }
    SUBCASE("gelu and relu") {
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.gelu(g.relu(g.leaf(a))));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"a", &a}});
        CHECK(rep.pass);
    }
    SUBCASE("gather_rows") {
        Tensor<double> table = random_tensor({5, 3}, 29);
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = readout(g, g.gather_rows(g.leaf(table), {0, 2, 2, 4}));
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"table", &table}});
        CHECK(rep.pass);
    }
    SUBCASE("cross_entropy_logits") {
        Tensor<double> logits = random_tensor({6}, 30);
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out = g.cross_entropy_logits(g.leaf(logits), 2);
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"logits", &logits}});
        CHECK(rep.pass);
    }
    SUBCASE("masked_ce_sum") {
        Tensor<double> logits = random_tensor({4, 5}, 31);
        const auto rep = check_op(
            [&](Graph<double>& g, bool) {
                const NodeId out =
                    g.masked_ce_sum(g.leaf(logits), {1, 2, 3, 4}, {1, 0, 1, 1});
                std::vector<double> v = g.value(out);
                g.backward(out);
                return v[0];
            },
            {{"logits", &logits}});
        CHECK(rep.pass);
    }
}

TEST_CASE("full 2-layer model gradient matches central differences at h=1e-5") {
    // Two dense layers with GELU and a cross-entropy head, all built from the
    // graph ops; every parameter element checked.
    Tensor<double> x = random_tensor({1, 8}, 51, false);
    Tensor<double> w1 = random_tensor({8, 16}, 52);
    Tensor<double> b1 = random_tensor({16}, 53);
    Tensor<double> w2 = random_tensor({16, 4}, 54);

    auto loss = [&](bool) {
        Graph<double> g;
        const NodeId h1 = g.gelu(g.add_row_bias(g.matmul(g.leaf(x), g.leaf(w1)), g.leaf(b1)));
        const NodeId logits = g.matmul(h1, g.leaf(w2));
        std::vector<int> targets = {2};
        std::vector<uint8_t> active = {1};
        const NodeId root = g.masked_ce_sum(logits, targets, active);
        const double v = g.value(root)[0];
        g.backward(root);
        return v;
    };
    const auto rep = grad_check(loss, {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}}, 1e-5, 1e-4);
    INFO("max rel err " << rep.max_rel_err << " at " << rep.worst_param);
    CHECK(rep.pass);
}

TEST_CASE("grad_check is exact for linear functions") {
    Tensor<double> theta = random_tensor({1, 5}, 41);
    Tensor<double> coef = random_tensor({5, 1}, 42, false);
    auto loss = [&](bool) {
        Graph<double> g;
        const NodeId out = g.matmul(g.leaf(theta), g.leaf(coef));
        const std::vector<double> v = g.value(out);
        g.backward(out);
        return v[0];
    };
    const auto rep = grad_check(loss, {{"theta", &theta}}, 1e-5, 1e-9);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad_check flags an injected gradient corruption") {
    Tensor<double> theta = random_tensor({1, 5}, 43);
    Tensor<double> coef = random_tensor({5, 1}, 44, false);
    auto loss = [&](bool with_grad) {
        Graph<double> g;
        const NodeId out = g.matmul(g.leaf(theta), g.leaf(coef));
        const std::vector<double> v = g.value(out);
        g.backward(out);
        if (with_grad) {
            theta.grad[3] += 1.0; // corrupted analytic gradient
        }
        return v[0];
    };
    const auto rep = grad_check(loss, {{"theta", &theta}}, 1e-5, 1e-4);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_param == "theta");
    CHECK(rep.worst_index == 3);
}
