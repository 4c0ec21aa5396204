#include <doctest.h>

#include <cmath>
#include <functional>

#include "fsrir/nn/gradcheck.hpp"
#include "fsrir/nn/graph.hpp"
#include "fsrir/nn/optim.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;
using namespace fsrir::nn;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

// Builds a scalar loss sum(w . out) and checks every parameter leaf via
// central differences.
double check_builder(
    const std::function<Graph<double>::Id(Graph<double>&, std::vector<Graph<double>::Id>&)>& build,
    ParamStore<double>& params, Rng& rng) {
    Tensor<double> weights;
    auto loss_fn = [&](ParamStore<double>& p, std::vector<Tensor<double>>* grads) {
        Graph<double> g;
        std::vector<Graph<double>::Id> leafs;
        for (size_t i = 0; i < p.size(); ++i) {
            leafs.push_back(g.leaf_ref(&p.value(static_cast<int>(i))));
        }
        const auto out = build(g, leafs);
        const Tensor<double>& ov = g.val(out);
        if (weights.data.empty()) {
            Rng wrng(17);
            weights = random_tensor(ov.shape, wrng);
        }
        double loss = 0.0;
        for (size_t i = 0; i < ov.data.size(); ++i) loss += ov.data[i] * weights.data[i];
        if (grads) {
            g.backward(out, weights);
            for (size_t i = 0; i < p.size(); ++i) {
                if (g.has_grad(leafs[i])) (*grads)[i] = g.grad(leafs[i]);
            }
        }
        return loss;
    };
    const auto report = gradient_check<double>(loss_fn, params, 1e-6, 6, rng);
    return report.max_rel_err;
}

}  // namespace

TEST_CASE("identity linear layer passes input through") {
    Graph<double> g;
    Tensor<double> w({3, 3});
    for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
    const auto out = g.matmul(g.constant(x), g.constant(w));
    CHECK(g.val(out).data == x.data);
}

TEST_CASE("softmax over a single element is one") {
    Graph<double> g;
    Tensor<double> x({1, 1}, {4.2});
    const auto out = g.softmax_lastdim(g.constant(x));
    CHECK(g.val(out).data[0] == doctest::Approx(1.0));
}

TEST_CASE("attention with one key/value token returns its value projection") {
    Rng rng(3);
    const int d = 8;
    Graph<double> g;
    Graph<double>::AttentionWeights w;
    Tensor<double> eye({d, d});
    for (int i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    Tensor<double> zero_bias({d});
    w.wq = g.constant(random_tensor({d, d}, rng));
    w.bq = g.constant(random_tensor({d}, rng));
    w.wk = g.constant(random_tensor({d, d}, rng));
    w.bk = g.constant(random_tensor({d}, rng));
    Tensor<double> wv = random_tensor({d, d}, rng);
    Tensor<double> bv = random_tensor({d}, rng);
    w.wv = g.constant(wv);
    w.bv = g.constant(bv);
    w.wo = g.constant(eye);
    w.bo = g.constant(zero_bias);

    Tensor<double> kv = random_tensor({1, d}, rng);
    Tensor<double> queries = random_tensor({3, d}, rng);
    const auto out = g.attention(g.constant(queries), g.constant(kv), w, 2);

    // Expected: v = kv . Wv + bv for every query row.
    std::vector<double> expected(static_cast<size_t>(d), 0.0);
    for (int c = 0; c < d; ++c) {
        double acc = bv.data[static_cast<size_t>(c)];
        for (int k = 0; k < d; ++k) acc += kv.data[static_cast<size_t>(k)] * wv.at(k, c);
        expected[static_cast<size_t>(c)] = acc;
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < d; ++c) {
            CHECK(g.val(out).at(r, c) == doctest::Approx(expected[static_cast<size_t>(c)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward of y = W x against the closed form") {
    Graph<double> g;
    Rng rng(5);
    Tensor<double> w = random_tensor({4, 3}, rng);
    Tensor<double> x = random_tensor({1, 4}, rng);
    const auto wid = g.leaf(w);
    const auto out = g.matmul(g.constant(x), wid);  // (1x3)
    Tensor<double> seed({1, 3});
    for (double& v : seed.data) v = 1.0;  // loss = sum(y)
    g.backward(out, seed);
    const Tensor<double>& gw = g.grad(wid);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(gw.at(i, j) == doctest::Approx(x.data[static_cast<size_t>(i)]));
        }
    }
}

TEST_CASE("gradient of a detached branch is zero") {
    Graph<double> g;
    Rng rng(6);
    Tensor<double> a = random_tensor({2, 2}, rng);
    const auto live = g.leaf(a);
    const auto dead = g.constant(a);  // detached: no gradient requested
    const auto sum = g.add(live, dead);
    Tensor<double> seed({2, 2});
    for (double& v : seed.data) v = 1.0;
    g.backward(sum, seed);
    CHECK(g.has_grad(live));
    CHECK_FALSE(g.has_grad(dead));
}

TEST_CASE("backward before any forward raises a state error") {
    Graph<double> g;
    Tensor<double> seed({1});
    CHECK_THROWS_AS(g.backward(0, seed), StateError);
}

TEST_CASE("shape mismatches name the offending op") {
    Graph<double> g;
    const auto a = g.constant(Tensor<double>({2, 3}));
    const auto b = g.constant(Tensor<double>({2, 3}));
    try {
        (void)g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
}

TEST_CASE("every primitive passes the finite-difference suite at f64") {
    Rng rng(100);

    SUBCASE("matmul all transpose modes") {
        ParamStore<double> params;
        params.add("a", random_tensor({3, 4}, rng));
        params.add("b", random_tensor({4, 5}, rng));
        params.add("bt", random_tensor({5, 4}, rng));
        params.add("at", random_tensor({4, 3}, rng));
        const double err = check_builder(
            [](Graph<double>& g, std::vector<Graph<double>::Id>& p) {
                const auto nn = g.matmul(p[0], p[1]);
                const auto nt = g.matmul(p[0], p[2], false, true);
                const auto tn = g.matmul(p[3], p[1], true, false);
                return g.add(g.add(nn, nt), tn);
            },
            params, rng);
        CHECK(err <= 1e-6);
    }

    SUBCASE("add mul scale relu") {
        ParamStore<double> params;
        params.add("a", random_tensor({3, 5}, rng));
        params.add("b", random_tensor({3, 5}, rng));
        params.add("bias", random_tensor({5}, rng));
        const double err = check_builder(
            [](Graph<double>& g, std::vector<Graph<double>::Id>& p) {
                const auto sum = g.add(p[0], p[2]);       // broadcast bias
                const auto prod = g.mul(sum, p[1]);
                return g.relu(g.scale(prod, 1.7));
            },
            params, rng);
        CHECK(err <= 1e-4);
    }

    SUBCASE("softmax and layer norm") {
        ParamStore<double> params;
        params.add("x", random_tensor({4, 6}, rng));
        params.add("gain", random_tensor({6}, rng));
        params.add("bias", random_tensor({6}, rng));
        const double err = check_builder(
            [](Graph<double>& g, std::vector<Graph<double>::Id>& p) {
                const auto normed = g.layer_norm(p[0], p[1], p[2]);
                return g.softmax_lastdim(normed);
            },
            params, rng);
        CHECK(err <= 1e-4);
    }

    SUBCASE("embedding concat slice reshape repeat") {
        ParamStore<double> params;
        params.add("table", random_tensor({5, 4}, rng));
        params.add("x", random_tensor({3, 4}, rng));
        params.add("row", random_tensor({1, 6}, rng));
        const double err = check_builder(
            [](Graph<double>& g, std::vector<Graph<double>::Id>& p) {
                const auto emb = g.embedding(p[0], {1, 4, 2});  // (3x4)
                const auto cat = g.concat_cols({emb, p[1]});    // (3x8)
                const auto sliced = g.slice_cols(cat, 2, 5);    // (3x5)
                const auto rep = g.repeat_rows(p[2], 2);        // (2x6)
                const auto flat1 = g.reshape(sliced, {1, 15});
                const auto flat2 = g.reshape(rep, {1, 12});
                return g.concat_cols({flat1, flat2});
            },
            params, rng);
        CHECK(err <= 1e-4);
    }

    SUBCASE("attention") {
        ParamStore<double> params;
        const int d = 8;
        params.add("q", random_tensor({2, d}, rng, 0.5));
        params.add("kv", random_tensor({5, d}, rng, 0.5));
        params.add("wq", random_tensor({d, d}, rng, 0.5));
        params.add("bq", random_tensor({d}, rng, 0.1));
        params.add("wk", random_tensor({d, d}, rng, 0.5));
        params.add("bk", random_tensor({d}, rng, 0.1));
        params.add("wv", random_tensor({d, d}, rng, 0.5));
        params.add("bv", random_tensor({d}, rng, 0.1));
        params.add("wo", random_tensor({d, d}, rng, 0.5));
        params.add("bo", random_tensor({d}, rng, 0.1));
        const double err = check_builder(
            [](Graph<double>& g, std::vector<Graph<double>::Id>& p) {
                Graph<double>::AttentionWeights w{p[2], p[3], p[4], p[5],
                                                  p[6], p[7], p[8], p[9]};
                return g.attention(p[0], p[1], w, 2);
            },
            params, rng);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("dropout applies inverted scaling and exact masks") {
    Graph<double> g;
    Rng rng(9);
    Tensor<double> x({1, 1000});
    for (double& v : x.data) v = 1.0;
    const auto xid = g.leaf(x);
    const auto out = g.dropout(xid, 0.25, rng, true);
    size_t kept = 0;
    for (double v : g.val(out).data) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(1.0 / 0.75));
            ++kept;
        }
    }
    CHECK(kept > 650);
    CHECK(kept < 850);

    // Eval mode is the identity without adding a node.
    Graph<double> g2;
    const auto xid2 = g2.constant(x);
    CHECK(g2.dropout(xid2, 0.25, rng, false) == xid2);
}

TEST_CASE("forward is deterministic given identical inputs and rng") {
    auto run = [] {
        Graph<double> g;
        Rng rng(77);
        Tensor<double> x({4, 8});
        Rng init(5);
        for (double& v : x.data) v = init.normal();
        const auto out = g.dropout(g.relu(g.constant(x)), 0.1, rng, true);
        return g.val(out).data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam identities") {
    SUBCASE("zero gradients leave parameters unchanged") {
        ParamStore<float> params;
        Rng rng(11);
        Tensor<float> w({8});
        for (float& v : w.data) v = static_cast<float>(rng.normal());
        params.add("w", w);
        auto state = AdamState<float>::init(params);
        auto grads = params.zeros_like();
        adam_step(params, grads, AdamCfg{}, state);
        CHECK(params["w"].data == w.data);
    }

    SUBCASE("constant gradient step size approaches lr * sign(g)") {
        ParamStore<double> params;
        Tensor<double> w({2}, {0.0, 0.0});
        params.add("w", w);
        AdamCfg cfg;
        cfg.lr = 1e-3;
        auto state = AdamState<double>::init(params);
        std::vector<Tensor<double>> grads;
        grads.emplace_back(std::vector<int>{2}, std::vector<double>{0.37, -120.0});
        double prev0 = 0.0, prev1 = 0.0;
        for (int i = 0; i < 2000; ++i) {
            prev0 = params["w"].data[0];
            prev1 = params["w"].data[1];
            adam_step(params, grads, cfg, state);
        }
        CHECK(std::abs(params["w"].data[0] - prev0) ==
              doctest::Approx(cfg.lr).epsilon(0.02));
        CHECK(std::abs(params["w"].data[1] - prev1) ==
              doctest::Approx(cfg.lr).epsilon(0.02));
        CHECK(params["w"].data[0] < 0.0);
        CHECK(params["w"].data[1] > 0.0);
    }

    SUBCASE("identical seeds give bitwise-identical trajectories") {
        auto run = [] {
            ParamStore<float> params;
            Rng rng(123);
            Tensor<float> w({16});
            for (float& v : w.data) v = static_cast<float>(rng.normal());
            params.add("w", w);
            auto state = AdamState<float>::init(params);
            Rng grad_rng(9);
            for (int step = 0; step < 50; ++step) {
                std::vector<Tensor<float>> grads = params.zeros_like();
                for (float& v : grads[0].data) v = static_cast<float>(grad_rng.normal());
                adam_step(params, grads, AdamCfg{}, state);
            }
            return params["w"].data;
        };
        CHECK(run() == run());
    }

    SUBCASE("nan gradients abort") {
        ParamStore<double> params;
        params.add("w", Tensor<double>({2}));
        auto state = AdamState<double>::init(params);
        std::vector<Tensor<double>> grads = params.zeros_like();
        grads[0].data[1] = std::nan("");
        CHECK_THROWS_AS(adam_step(params, grads, AdamCfg{}, state), OptimizerError);
    }
}

TEST_CASE("gradient_check is near-exact on a quadratic") {
    ParamStore<double> params;
    Rng rng(31);
    params.add("w", random_tensor({10}, rng));
    auto loss_fn = [](ParamStore<double>& p, std::vector<Tensor<double>>* grads) {
        double loss = 0.0;
        const auto& w = p["w"];
        for (size_t i = 0; i < w.data.size(); ++i) {
            loss += 0.5 * (static_cast<double>(i) + 1.0) * w.data[i] * w.data[i];
        }
        if (grads) {
            for (size_t i = 0; i < w.data.size(); ++i) {
                (*grads)[0].data[i] = (static_cast<double>(i) + 1.0) * w.data[i];
            }
        }
        return loss;
    };
    const auto report = gradient_check<double>(loss_fn, params, 1e-4, 10, rng);
    CHECK(report.max_rel_err <= 1e-8);
}
