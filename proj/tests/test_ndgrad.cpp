#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cgsta/rng.hpp"
#include "cgsta/tensor.hpp"

using namespace cgsta;

namespace {

std::vector<double> random_vals(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Runs grad_check on a single-input function with random data in [-2,2].
double check1(const std::function<Tensor(Tape&, const Tensor&)>& f, Shape shape,
              std::vector<double> data, double step = 1e-4) {
    auto res = grad_check(
        [&](Tape& t, const std::vector<Tensor>& xs) { return f(t, xs[0]); },
        {{shape, std::move(data)}}, step);
    REQUIRE_FALSE(res.nan_failure);
    return res.max_rel_err;
}

}  // namespace

TEST_CASE("matmul forward hand examples") {
    Tensor a = constant({2, 2}, {1, 2, 3, 4});
    Tensor b = constant({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.shape == Shape{2, 1});
    CHECK(c.at(0) == doctest::Approx(3.0));
    CHECK(c.at(1) == doctest::Approx(7.0));

    // batched x shared rhs
    Tensor ab = constant({2, 2, 2}, {1, 0, 0, 1, 2, 0, 0, 2});
    Tensor w = constant({2, 2}, {1, 2, 3, 4});
    Tensor cb = matmul(ab, w);
    CHECK(cb.shape == Shape{2, 2, 2});
    CHECK(cb.at(4) == doctest::Approx(2.0));
    CHECK(cb.at(5) == doctest::Approx(4.0));
}

TEST_CASE("matmul rejects shape mismatch before computing") {
    Tensor a = constant({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = constant({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("softmax of uniform logits and row sums") {
    Tensor x = constant({3}, {0, 0, 0});
    Tensor y = softmax(x, 0);
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Rng rng(17);
    Tensor z = constant({8, 5}, random_vals(rng, 40, -4, 4));
    Tensor s = softmax(z, 1);
    for (std::size_t r = 0; r < 8; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 5; ++c) sum += s.at(r * 5 + c);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("cosine similarity parallel and orthogonal") {
    Tensor a = constant({2}, {1, 2});
    Tensor b = constant({2}, {2, 4});
    CHECK(cosine_sim(a, b).scalar() == doctest::Approx(1.0).epsilon(1e-12));
    Tensor e1 = constant({2}, {1, 0});
    Tensor e2 = constant({2}, {0, 1});
    CHECK(cosine_sim(e1, e2).scalar() == doctest::Approx(0.0));
    // bounded
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        Tensor u = constant({4}, random_vals(rng, 4));
        Tensor v = constant({4}, random_vals(rng, 4));
        CHECK(std::abs(cosine_sim(u, v).scalar()) <= 1.0 + 1e-14);
    }
}

TEST_CASE("l2_normalize unit norm for nonzero input") {
    Rng rng(5);
    Tensor x = constant({4, 6}, random_vals(rng, 24, 0.5, 2.0));
    Tensor y = l2_normalize(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
        double n2 = 0;
        for (std::size_t c = 0; c < 6; ++c) n2 += y.at(r * 6 + c) * y.at(r * 6 + c);
        CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-12);
    }
}

TEST_CASE("backward: simple hand rules") {
    SUBCASE("sum of squares") {
        Tape tape;
        Tensor x = tape.leaf({3}, {1, 2, 3}, true);
        Tensor loss = sum(mul(x, x));
        auto g = tape.backward(loss);
        Tensor gx = tape.grad_of(g, x);
        CHECK(gx.at(0) == doctest::Approx(2.0));
        CHECK(gx.at(1) == doctest::Approx(4.0));
        CHECK(gx.at(2) == doctest::Approx(6.0));
    }
    SUBCASE("mean rule") {
        Tape tape;
        Tensor x = tape.leaf({4}, {1, 2, 3, 4}, true);
        auto g = tape.backward(mean(x));
        Tensor gx = tape.grad_of(g, x);
        for (int i = 0; i < 4; ++i) CHECK(gx.at(i) == doctest::Approx(0.25));
    }
    SUBCASE("detached branch gets exactly zero") {
        Tape tape;
        Tensor x = tape.leaf({2}, {1.5, -0.5}, true);
        Tensor y = mul(x, x);
        Tensor stopped = detach(y);
        Tensor loss = add(sum(mul(x, scalar_tensor(3.0))), sum(mul(stopped, stopped)));
        auto g = tape.backward(loss);
        Tensor gx = tape.grad_of(g, x);
        CHECK(gx.at(0) == doctest::Approx(3.0));
        CHECK(gx.at(1) == doctest::Approx(3.0));
        CHECK(g.zero_or_absent(y.node));
    }
    SUBCASE("unreachable parameter gets zero gradient") {
        Tape tape;
        Tensor x = tape.leaf({2}, {1, 2}, true);
        Tensor unused = tape.leaf({2}, {5, 6}, true);
        auto g = tape.backward(sum(x));
        Tensor gu = tape.grad_of(g, unused);
        CHECK(gu.at(0) == 0.0);
        CHECK(gu.at(1) == 0.0);
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, 2, 3}, true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("grad_check: smooth elementary function is tight") {
    Rng rng(11);
    auto res = grad_check(
        [](Tape&, const std::vector<Tensor>& xs) { return sum(exp(xs[0])); },
        {{{5}, random_vals(rng, 5, -1, 1)}}, 1e-4);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check: every primitive at 1e-4 within 1e-3") {
    Rng rng(23);

    SUBCASE("add/sub/mul/div with broadcasts") {
        auto two = [&](auto op) {
            auto res = grad_check(
                [&](Tape&, const std::vector<Tensor>& xs) { return sum(op(xs[0], xs[1])); },
                {{{3, 4}, random_vals(rng, 12)}, {{3, 4}, random_vals(rng, 12, 0.5, 2.0)}}, 1e-4);
            CHECK(res.max_rel_err < 1e-3);
            auto res_suffix = grad_check(
                [&](Tape&, const std::vector<Tensor>& xs) { return sum(op(xs[0], xs[1])); },
                {{{3, 4}, random_vals(rng, 12)}, {{4}, random_vals(rng, 4, 0.5, 2.0)}}, 1e-4);
            CHECK(res_suffix.max_rel_err < 1e-3);
            auto res_scalar = grad_check(
                [&](Tape&, const std::vector<Tensor>& xs) { return sum(op(xs[0], xs[1])); },
                {{{3, 4}, random_vals(rng, 12)}, {{1}, random_vals(rng, 1, 0.5, 2.0)}}, 1e-4);
            CHECK(res_scalar.max_rel_err < 1e-3);
        };
        two([](const Tensor& a, const Tensor& b) { return add(a, b); });
        two([](const Tensor& a, const Tensor& b) { return sub(a, b); });
        two([](const Tensor& a, const Tensor& b) { return mul(a, b); });
        two([](const Tensor& a, const Tensor& b) { return div(a, b); });
    }

    SUBCASE("unaries") {
        CHECK(check1([](Tape&, const Tensor& x) { return sum(neg(x)); }, {6},
                     random_vals(rng, 6)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(exp(x)); }, {6},
                     random_vals(rng, 6)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(log(x)); }, {6},
                     random_vals(rng, 6, 0.2, 2.0)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(tanh(x)); }, {6},
                     random_vals(rng, 6)) < 1e-3);
        // keep relu inputs away from the kink
        std::vector<double> rv = random_vals(rng, 6);
        for (auto& v : rv) v += (v >= 0 ? 0.3 : -0.3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(relu(x), x)); }, {6}, rv) < 1e-3);
        // clamp active region only
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(clamp(x, -5, 5), x)); }, {6},
                     random_vals(rng, 6)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(smul(x, 2.5)); }, {6},
                     random_vals(rng, 6)) < 1e-3);
    }

    SUBCASE("matmul 2d, batched, and batched pair") {
        auto res = grad_check(
            [](Tape&, const std::vector<Tensor>& xs) { return sum(matmul(xs[0], xs[1])); },
            {{{3, 4}, random_vals(rng, 12)}, {{4, 2}, random_vals(rng, 8)}}, 1e-4);
        CHECK(res.max_rel_err < 1e-3);
        auto res_b = grad_check(
            [](Tape&, const std::vector<Tensor>& xs) {
                return sum(mul(matmul(xs[0], xs[1]), matmul(xs[0], xs[1])));
            },
            {{{2, 3, 4}, random_vals(rng, 24)}, {{4, 2}, random_vals(rng, 8)}}, 1e-4);
        CHECK(res_b.max_rel_err < 1e-3);
        auto res_bb = grad_check(
            [](Tape&, const std::vector<Tensor>& xs) { return sum(matmul(xs[0], xs[1])); },
            {{{2, 3, 4}, random_vals(rng, 24)}, {{2, 4, 2}, random_vals(rng, 16)}}, 1e-4);
        CHECK(res_bb.max_rel_err < 1e-3);
    }

    SUBCASE("reductions and shape ops") {
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(sum(x, 0), sum(x, 0))); }, {3, 4},
                     random_vals(rng, 12)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(mean(x, 1), mean(x, 1))); },
                     {3, 4}, random_vals(rng, 12)) < 1e-3);
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(max(x, 1), max(x, 1))); }, {3, 4},
                     random_vals(rng, 12)) < 1e-3);
        CHECK(check1(
                  [](Tape&, const Tensor& x) {
                      Tensor r = reshape(x, {4, 3});
                      Tensor t = transpose(r, {1, 0});
                      return sum(mul(t, t));
                  },
                  {3, 4}, random_vals(rng, 12)) < 1e-3);
        CHECK(check1(
                  [](Tape&, const Tensor& x) {
                      Tensor s = slice(x, 1, 1, 2);
                      return sum(mul(s, s));
                  },
                  {3, 4}, random_vals(rng, 12)) < 1e-3);
        CHECK(check1(
                  [](Tape&, const Tensor& x) {
                      Tensor e = expand_leading(x, 3);
                      return sum(mul(e, e));
                  },
                  {2, 2}, random_vals(rng, 4)) < 1e-3);
        auto res_cat = grad_check(
            [](Tape&, const std::vector<Tensor>& xs) {
                Tensor c = concat({xs[0], xs[1]}, 1);
                return sum(mul(c, c));
            },
            {{{2, 3}, random_vals(rng, 6)}, {{2, 2}, random_vals(rng, 4)}}, 1e-4);
        CHECK(res_cat.max_rel_err < 1e-3);
    }

    SUBCASE("softmax, l2_normalize, cosine") {
        CHECK(check1([](Tape&, const Tensor& x) { return sum(mul(softmax(x, 1), softmax(x, 1))); },
                     {3, 4}, random_vals(rng, 12)) < 1e-3);
        CHECK(check1(
                  [](Tape&, const Tensor& x) {
                      Tensor y = l2_normalize(x, 1);
                      return sum(mul(y, sadd(y, 0.5)));
                  },
                  {3, 4}, random_vals(rng, 12, 0.5, 2.0)) < 1e-3);
        auto res_cos = grad_check(
            [](Tape&, const std::vector<Tensor>& xs) { return sum(cosine_sim(xs[0], xs[1])); },
            {{{3, 4}, random_vals(rng, 12, 0.5, 2.0)}, {{3, 4}, random_vals(rng, 12, 0.5, 2.0)}},
            1e-4);
        CHECK(res_cos.max_rel_err < 1e-3);
    }
}

TEST_CASE("replay determinism: identical inputs give bit-identical outputs") {
    Rng rng(31);
    auto data = random_vals(rng, 24);
    auto w = random_vals(rng, 8);
    auto run = [&]() {
        Tape tape;
        Tensor x = tape.leaf({2, 3, 4}, data, true);
        Tensor ww = tape.leaf({4, 2}, w, true);
        Tensor h = tanh(matmul(x, ww));
        Tensor loss = mean(mul(h, h));
        auto g = tape.backward(loss);
        std::vector<double> out = {loss.scalar()};
        Tensor gx = tape.grad_of(g, x);
        out.insert(out.end(), gx.data->begin(), gx.data->end());
        return out;
    };
    auto r1 = run();
    auto r2 = run();
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("error contracts: log and div of zero") {
    Tensor z = constant({2}, {1.0, 0.0});
    Tensor ones = constant({2}, {1.0, 1.0});
    CHECK_THROWS_AS(log(z), std::invalid_argument);
    CHECK_THROWS_AS(div(ones, z), std::invalid_argument);
    Tensor negv = constant({1}, {-1.0});
    CHECK_THROWS_AS(log(negv), std::invalid_argument);
}

TEST_CASE("grad_check reports NaN-producing evaluations") {
    auto res = grad_check(
        [](Tape&, const std::vector<Tensor>& xs) {
            // sqrt of negative via exp(log): log throws; emulate NaN via 0/...
            Tensor t = xs[0];
            return sum(mul(t, smul(t, std::numeric_limits<double>::quiet_NaN())));
        },
        {{{2}, {1.0, 2.0}}}, 1e-4);
    CHECK(res.nan_failure);
}
