#include <cmath>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "pdt/optimizer.hpp"
#include "pdt/rng.hpp"
#include "pdt/tensor.hpp"

using namespace pdt;

namespace {

TensorPtr randn_tensor(Shape shape, Rng& rng, bool requires_grad, double stddev = 1.0) {
    auto t = Tensor::zeros(shape, requires_grad);
    for (auto& v : t->data) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    auto x = Tensor::create({3}, {0.0, 0.0, 0.0});
    auto y = softmax_rows(x);
    for (double v : y->data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = randn_tensor({5, 7}, rng, false, 6.0);
        auto y = softmax_rows(x);
        for (std::int64_t r = 0; r < 5; ++r) {
            double s = 0.0;
            for (std::int64_t c = 0; c < 7; ++c) {
                const double v = y->data[static_cast<std::size_t>(r * 7 + c)];
                CHECK(v > 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("matmul by identity returns the operand") {
    Rng rng(3);
    auto eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye->data[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    auto a = randn_tensor({3, 3}, rng, false);
    auto out = matmul(eye, a);
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        CHECK(out->data[i] == doctest::Approx(a->data[i]).epsilon(1e-14));
    }
}

TEST_CASE("cross entropy of uniform logits over 30 classes is ln 30") {
    auto logits = Tensor::full({4, 30}, 0.25);
    std::vector<int> targets = {0, 7, 15, 29};
    auto loss = cross_entropy_mean(logits, targets);
    CHECK(std::abs(loss->value() - std::log(30.0)) < 1e-9);
}

TEST_CASE("shape errors name the op and both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4x2]"), std::invalid_argument);
}

TEST_CASE("log rejects non-positive input instead of producing NaN") {
    auto a = Tensor::create({2}, {1.0, -0.5});
    CHECK_THROWS_AS(log_op(a), std::invalid_argument);
    auto z = Tensor::create({1}, {0.0});
    CHECK_THROWS_AS(log_op(z), std::invalid_argument);
}

TEST_CASE("backward of sum(x*x) gives 2x") {
    auto x = Tensor::create({3}, {1.0, 2.0, 3.0}, true);
    auto loss = sum(mul(x, x));
    backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(4.0));
    CHECK(x->grad[2] == doctest::Approx(6.0));
}

TEST_CASE("matmul gradients match central finite differences") {
    Rng rng(42);
    auto a = randn_tensor({4, 3}, rng, true);
    auto b = randn_tensor({3, 2}, rng, true);
    auto rep = pdt_test::fd_compare({a, b}, [&] { return sum(matmul(a, b)); });
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("cosine similarity of a vector with itself has zero gradient") {
    auto u = Tensor::create({4}, {0.3, -1.2, 0.8, 2.0}, true);
    auto loss = cosine_similarity(u, u);
    CHECK(loss->value() == doctest::Approx(1.0));
    backward(loss);
    for (double g : u->grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("cosine similarity rejects zero vectors") {
    auto u = Tensor::zeros({3});
    auto v = Tensor::create({3}, {1.0, 0.0, 0.0});
    CHECK_THROWS_AS(cosine_similarity(u, v), std::invalid_argument);
}

TEST_CASE("backward requires a scalar loss") {
    auto x = Tensor::create({2}, {1.0, 2.0}, true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("backward consumes the graph unless retained") {
    auto x = Tensor::create({2}, {1.0, 2.0}, true);
    auto loss = sum(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), std::invalid_argument);
}

TEST_CASE("two retained backward passes double the gradient") {
    auto x = Tensor::create({3}, {0.5, -1.0, 2.0}, true);
    auto loss = sum(mul(x, x));
    backward(loss, /*retain=*/true);
    std::vector<double> once = x->grad;
    backward(loss, /*retain=*/true);
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(x->grad[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
    }
}

TEST_CASE("every differentiable op passes finite-difference checks over 50 seeds") {
    double worst = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        auto a = randn_tensor({3, 4}, rng, true);
        auto b = randn_tensor({3, 4}, rng, true);
        auto v = randn_tensor({4}, rng, true);
        auto w = randn_tensor({4}, rng, true);
        auto m1 = randn_tensor({3, 4}, rng, true);
        auto m2 = randn_tensor({4, 2}, rng, true);
        auto gamma = randn_tensor({4}, rng, true, 0.3);
        auto beta = randn_tensor({4}, rng, true, 0.3);
        auto table = randn_tensor({6, 4}, rng, true);
        std::vector<int> ids = {rng.uniform_int(0, 5), rng.uniform_int(0, 5),
                                rng.uniform_int(0, 5)};
        std::vector<int> targets = {rng.uniform_int(0, 3), -1, rng.uniform_int(0, 3)};
        std::vector<double> row_w = {rng.uniform(), rng.uniform(), rng.uniform()};
        auto weights = randn_tensor({3, 4}, rng, false);  // constant mixing matrix

        struct Case {
            const char* name;
            std::function<TensorPtr()> loss;
            std::vector<TensorPtr> params;
        };
        std::vector<Case> cases = {
            {"add", [&] { return sum(mul(add(a, b), weights)); }, {a, b}},
            {"add_broadcast", [&] { return sum(mul(add(a, v), weights)); }, {a, v}},
            {"sub", [&] { return sum(mul(sub(a, b), weights)); }, {a, b}},
            {"mul", [&] { return sum(mul(mul(a, b), weights)); }, {a, b}},
            {"scale", [&] { return sum(scale(a, -1.7)); }, {a}},
            {"exp", [&] { return sum(mul(exp_op(scale(a, 0.3)), weights)); }, {a}},
            {"log", [&] { return sum(log_op(add(mul(a, a), Tensor::full({3, 4}, 0.5)))); }, {a}},
            {"sigmoid", [&] { return sum(mul(sigmoid(a), weights)); }, {a}},
            {"tanh", [&] { return sum(mul(tanh_op(a), weights)); }, {a}},
            {"relu", [&] { return sum(mul(relu(a), weights)); }, {a}},
            {"matmul", [&] { return sum(matmul(m1, m2)); }, {m1, m2}},
            {"transpose", [&] { return sum(mul(transpose(a), transpose(weights))); }, {a}},
            {"reshape", [&] { return sum(mul(reshape(a, {4, 3}), transpose(weights))); }, {a}},
            {"concat", [&] { return sum(mul(concat_rows({a, b}), concat_rows({weights, weights}))); }, {a, b}},
            {"slice", [&] { return sum(mul(slice_rows(a, 1, 2), slice_rows(weights, 0, 2))); }, {a}},
            {"broadcast", [&] { return sum(mul(broadcast_to(v, {3, 4}), weights)); }, {v}},
            {"embedding", [&] { return sum(mul(embedding(table, ids), weights)); }, {table}},
            {"sum", [&] { return sum(a); }, {a}},
            {"mean", [&] { return mean(a); }, {a}},
            {"weighted_row_sum", [&] { return dot(weighted_row_sum(a, row_w), v); }, {a, v}},
            {"squared_l2", [&] { return squared_l2(a); }, {a}},
            {"dot", [&] { return dot(v, w); }, {v, w}},
            {"cosine", [&] { return cosine_similarity(v, w); }, {v, w}},
            {"softmax", [&] { return sum(mul(softmax_rows(a), weights)); }, {a}},
            {"layer_norm", [&] { return sum(mul(layer_norm_rows(a, gamma, beta), weights)); },
             {a, gamma, beta}},
            {"cross_entropy", [&] { return cross_entropy_mean(a, targets, -1); }, {a}},
        };
        for (auto& c : cases) {
            auto rep = pdt_test::fd_compare(c.params, c.loss);
            INFO("op=", c.name, " seed=", seed);
            CHECK(rep.max_rel_err < 1e-4);
            worst = std::max(worst, rep.max_rel_err);
        }
    }
    MESSAGE("worst relative error across ops/seeds: ", worst);
}

TEST_CASE("optimizer leaves parameters unchanged on zero grads and zero decay") {
    auto w = Tensor::create({2}, {0.7, -0.4}, true);
    w->zero_grad();
    AdamW opt(0.9, 0.999, 1e-8, /*weight_decay=*/0.0);
    opt.add_group({w}, 0.1);
    opt.step();
    CHECK(w->data[0] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(w->data[1] == doctest::Approx(-0.4).epsilon(1e-15));
}

TEST_CASE("one optimizer step on f(w)=w^2 moves toward the minimum") {
    auto w = Tensor::create({1}, {1.0}, true)->named("w");
    AdamW opt(0.9, 0.999, 1e-8, 0.0);
    opt.add_group({w}, 0.1);
    auto loss = sum(mul(w, w));
    backward(loss);
    opt.step();
    CHECK(std::abs(w->data[0]) < 1.0);
}

TEST_CASE("200 optimizer steps solve a convex quadratic") {
    // f(w) = sum_i c_i (w_i - t_i)^2 with known minimizer t
    std::vector<double> target = {0.3, -1.1, 0.65};
    std::vector<double> curv = {1.0, 2.5, 0.5};
    auto w = Tensor::create({3}, {0.0, 0.0, 0.0}, true)->named("w");
    auto t = Tensor::create({3}, target);
    auto c = Tensor::create({3}, curv);
    AdamW opt(0.9, 0.999, 1e-8, 0.0);
    opt.add_group({w}, 0.05);
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        auto diff = sub(w, t);
        auto loss = sum(mul(c, mul(diff, diff)));
        backward(loss);
        opt.step();
    }
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(w->data[static_cast<std::size_t>(i)] -
                       target[static_cast<std::size_t>(i)]) < 1e-3);
    }
}

TEST_CASE("optimizer step without populated gradients names the parameter") {
    auto w = Tensor::create({2}, {1.0, 2.0}, true)->named("encoder.w1");
    AdamW opt;
    opt.add_group({w}, 0.01);
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("encoder.w1"), std::runtime_error);
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto w = randn_tensor({4, 4}, rng, true);
        auto x = randn_tensor({4, 4}, rng, false);
        AdamW opt;
        opt.add_group({w}, 1e-2);
        for (int i = 0; i < 25; ++i) {
            opt.zero_grad();
            auto loss = squared_l2(sub(matmul(w, x), x));
            backward(loss);
            opt.step();
        }
        return w->data;
    };
    auto first = run(7);
    auto second = run(7);
    CHECK(first == second);  // exact bit equality
}
