#include "gradcheck.h"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace tsc;
using namespace tsc::ad;
using namespace tsc::testing;

TEST_CASE("every op's gradient agrees with central differences") {
    for (const auto &c : autodiff_op_cases()) {
        Rng rng(c.seed);
        for (int instance = 0; instance < 10; ++instance) {
            const double err = gradient_error(c.build, c.make(rng), rng);
            INFO(std::string(c.name) << " instance " << instance << " relative error " << err);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("key bias has no effect on attention output") {
    // Adding q . bk to every score in a row cancels in the softmax.
    Rng rng(40);
    Tape t;
    std::vector<Var> pv;
    for (int k = 0; k < 4; ++k) {
        pv.push_back(t.variable(random_tensor({4, 4}, rng)));
        pv.push_back(t.variable(random_tensor({4}, rng)));
    }
    AttentionParams ap{pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7]};
    Var y = multi_head_self_attention(t, t.constant(random_tensor({2, 3, 4}, rng)), ap, 2);
    Tensor target = random_tensor(t.shape(y), rng), mask(t.shape(y));
    std::fill(mask.values.begin(), mask.values.end(), 1.0);
    t.backward(mse_loss(t, y, target, mask));
    for (double g : t.grad(ap.bk))
        CHECK(std::abs(g) < 1e-14);
    double wq_norm = 0.0;
    for (double g : t.grad(ap.wq))
        wq_norm += g * g;
    CHECK(wq_norm > 1e-8);
}

TEST_CASE("forward values on small hand cases") {
    Tape t;
    Var x = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    Var w = t.constant(Tensor({2, 1}, {10, 100}));
    CHECK(t.value(matmul(t, x, w)).values == std::vector<double>{210, 430});
    CHECK(t.value(relu(t, t.constant(Tensor({3}, {-1, 0, 2})))).values == std::vector<double>{0, 0, 2});
    const Tensor sm = t.value(softmax_last(t, t.constant(Tensor({1, 1, 2}, {0, std::log(3.0)}))));
    CHECK(sm[0] == doctest::Approx(0.25));
    CHECK(sm[1] == doctest::Approx(0.75));
    Tensor target({2}, {1, 0}), mask({2}, {1, 0});
    CHECK(t.value(mse_loss(t, t.constant(Tensor({2}, {3, 100})), target, mask))[0] == 4.0);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(5);
    Tape t;
    const Tensor s = t.value(softmax_last(t, t.constant(random_tensor({4, 3, 7}, rng, -20, 20))));
    for (std::size_t row = 0; row < 12; ++row) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 7; ++k)
            sum += s[row * 7 + k];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("self-attention is exactly permutation-equivariant") {
    Rng rng(31);
    const std::size_t B = 2, P = 5, D = 8;
    std::vector<Tensor> params;
    for (int k = 0; k < 4; ++k) {
        params.push_back(random_tensor({D, D}, rng));
        params.push_back(random_tensor({D}, rng));
    }
    const Tensor x = random_tensor({B, P, D}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor xp({B, P, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t d = 0; d < D; ++d)
                xp[(b * P + i) * D + d] = x[(b * P + perm[i]) * D + d];

    auto run = [&](const Tensor &in) {
        Tape t;
        std::vector<Var> pv;
        for (const auto &p : params)
            pv.push_back(t.constant(p));
        AttentionParams ap{pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7]};
        return t.value(multi_head_self_attention(t, t.constant(in), ap, 4));
    };
    const Tensor y = run(x), yp = run(xp);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t d = 0; d < D; ++d)
                CHECK(yp[(b * P + i) * D + d] == y[(b * P + perm[i]) * D + d]);
}

TEST_CASE("attention weights are reported per head and heads must divide the width") {
    Rng rng(2);
    Tape t;
    std::vector<Var> pv;
    for (int k = 0; k < 4; ++k) {
        pv.push_back(t.constant(random_tensor({6, 6}, rng)));
        pv.push_back(t.constant(random_tensor({6}, rng)));
    }
    AttentionParams ap{pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7]};
    Var x = t.constant(random_tensor({1, 4, 6}, rng));
    std::vector<Tensor> weights;
    multi_head_self_attention(t, x, ap, 3, &weights);
    REQUIRE(weights.size() == 3);
    for (const auto &w : weights) {
        CHECK(w.shape == Shape{1, 4, 4});
        for (std::size_t r = 0; r < 4; ++r)
            CHECK(w[r * 4] + w[r * 4 + 1] + w[r * 4 + 2] + w[r * 4 + 3] == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(multi_head_self_attention(t, x, ap, 4), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
    Tape t;
    Var a = t.constant(Tensor({2, 3}));
    Var b = t.constant(Tensor({4, 2}));
    CHECK_THROWS(matmul(t, a, b));
    CHECK_THROWS(add(t, a, b));
    CHECK_THROWS(reshape(t, a, {5}));
    CHECK_THROWS(slice_last(t, a, 2, 2));
    CHECK_THROWS(Tensor({2, 2}, {1, 2, 3}));
}

TEST_CASE("parameter gradients accumulate across passes into the store") {
    ParamStore store;
    store.add("w", Tensor({2}, {1.5, -2.0}));
    Tensor target({2}, {0, 0}), mask({2}, {1, 1});
    for (int pass = 0; pass < 2; ++pass) {
        Tape t;
        Var w = t.param(store, "w");
        t.backward(mse_loss(t, w, target, mask));
    }
    // d/dw mean(w^2) = w, twice.
    CHECK(store.grad("w") == std::vector<double>{3.0, -4.0});
    store.zero_grad();
    CHECK(store.grad("w") == std::vector<double>{0.0, 0.0});
}

TEST_CASE("first Adam step moves each parameter by about lr against its gradient sign") {
    ParamStore store;
    store.add("w", Tensor({3}, {1.0, -1.0, 0.5}));
    store.grad("w") = {0.2, -4.0, 0.0};
    AdamConfig cfg;
    cfg.lr = 0.01;
    adam_step(store, cfg);
    const auto &w = store.value("w").values;
    // With bias correction m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
    CHECK(w[0] == doctest::Approx(1.0 - 0.01 * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(-1.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
    CHECK(w[2] == 0.5);
    CHECK(store.adam_steps() == 1);
}

TEST_CASE("Adam fits a linear map") {
    Rng rng(77);
    const Tensor x = random_tensor({32, 3}, rng);
    const Tensor true_w({3, 1}, {0.5, -1.0, 2.0});
    Tensor y({32, 1}), mask({32, 1});
    for (std::size_t i = 0; i < 32; ++i) {
        for (std::size_t k = 0; k < 3; ++k)
            y[i] += x[i * 3 + k] * true_w[k];
        mask[i] = 1.0;
    }
    ParamStore store;
    store.add("w", Tensor({3, 1}));
    AdamConfig cfg;
    cfg.lr = 0.05;
    double loss = 0.0;
    for (int it = 0; it < 2000; ++it) {
        store.zero_grad();
        Tape t;
        Var l = mse_loss(t, matmul(t, t.constant(x), t.param(store, "w")), y, mask);
        t.backward(l);
        loss = t.value(l)[0];
        adam_step(store, cfg);
    }
    CHECK(loss < 1e-8);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(store.value("w")[k] == doctest::Approx(true_w[k]).epsilon(1e-3));
}

TEST_CASE("store copy and comparison") {
    ParamStore a, b;
    a.add("w", Tensor({2}, {1, 2}));
    b.add("w", Tensor({2}, {0, 0}));
    CHECK_FALSE(a.same_values(b));
    b.copy_values_from(a);
    CHECK(a.same_values(b));
    CHECK(a.parameter_count() == 2);
    ParamStore c;
    c.add("v", Tensor({2}));
    CHECK_THROWS(c.copy_values_from(a));
}
