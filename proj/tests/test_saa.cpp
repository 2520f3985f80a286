#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgsta/rng.hpp"
#include "cgsta/saa.hpp"

using namespace cgsta;
using namespace cgsta::saa;

namespace {

double cos_vec(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::max(std::sqrt(na), kEps) * std::max(std::sqrt(nb), kEps));
}

// Scalar evaluation of the graph-level InfoNCE as printed.
double naive_contrast(const std::vector<std::vector<double>>& g_dyn,
                      const std::vector<double>& g_stable,
                      const std::vector<std::vector<double>>& g_aug, double tau) {
    double acc = 0.0;
    for (const auto& gd : g_dyn) {
        const double pos = std::exp(cos_vec(gd, g_stable) / tau);
        double den = pos;
        for (const auto& ga : g_aug) den += std::exp(cos_vec(ga, g_stable) / tau);
        acc += -std::log(pos / den);
    }
    return acc / static_cast<double>(g_dyn.size());
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return constant({rows.size(), rows[0].size()}, std::move(flat));
}

}  // namespace

TEST_CASE("ema update arithmetic") {
    StableGraphBank bank;
    bank.k = 2;
    std::array<std::vector<double>, 3> first;
    for (auto& m : first) m.assign(4, 0.5);
    bank.ema_update(first, 0.9);  // initializes by copy
    CHECK(bank.initialized);
    for (int s = 0; s < 3; ++s)
        for (double v : bank.a_stable[s]) CHECK(v == 0.5);

    std::array<std::vector<double>, 3> next;
    for (auto& m : next) m.assign(4, 0.7);
    bank.ema_update(next, 0.9);
    for (int s = 0; s < 3; ++s)
        for (double v : bank.a_stable[s]) CHECK(v == doctest::Approx(0.52).epsilon(1e-15));

    // gamma = 0: stable equals the latest dynamic mean
    StableGraphBank b0;
    b0.k = 2;
    b0.ema_update(first, 0.0);
    b0.ema_update(next, 0.0);
    for (double v : b0.a_stable[0]) CHECK(v == 0.7);

    std::array<std::vector<double>, 3> bad;
    bad[0].assign(3, 0.0);
    bad[1].assign(4, 0.0);
    bad[2].assign(4, 0.0);
    CHECK_THROWS_AS(bank.ema_update(bad, 0.9), std::invalid_argument);
}

TEST_CASE("ema converges geometrically to a constant stream") {
    StableGraphBank bank;
    bank.k = 1;
    std::array<std::vector<double>, 3> target;
    for (auto& m : target) m.assign(1, 1.0);
    std::array<std::vector<double>, 3> start;
    for (auto& m : start) m.assign(1, 0.0);
    bank.ema_update(start, 0.8);
    double prev_err = 1.0;
    for (int step = 0; step < 10; ++step) {
        bank.ema_update(target, 0.8);
        const double err = std::abs(bank.a_stable[0][0] - 1.0);
        CHECK(err == doctest::Approx(prev_err * 0.8).epsilon(1e-12));
        prev_err = err;
    }
}

TEST_CASE("consistency loss: identical and orthogonal branches") {
    Rng rng(3);
    std::vector<double> v(2 * 2 * 3 * 2);
    for (auto& x : v) x = rng.normal();
    Tensor h = constant({2, 2, 3, 2}, v);
    CHECK(consistency_loss({h, h, h}, {detach(h), detach(h), detach(h)}).scalar() ==
          doctest::Approx(-3.0).epsilon(1e-12));

    Tensor a = constant({1, 1, 1, 2}, {1, 0});
    Tensor b = constant({1, 1, 1, 2}, {0, 1});
    CHECK(consistency_loss({a}, {b}).scalar() == doctest::Approx(0.0));
}

TEST_CASE("stable branch receives exactly zero gradient") {
    Tape tape;
    Tensor x = tape.leaf({1, 1, 1, 3}, {0.5, -0.2, 0.8}, true);
    Tensor stable_branch = mul(x, x);  // pretend stable computation on the tape
    Tensor loss = consistency_loss({x}, {detach(stable_branch)});
    auto g = tape.backward(loss);
    CHECK(g.zero_or_absent(stable_branch.node));
    // the dynamic branch does receive gradient
    bool any = false;
    for (double v : *tape.grad_of(g, x).data) any = any || v != 0.0;
    CHECK(any);
}

TEST_CASE("graph projector contracts") {
    const std::size_t k = 3, dg = 5;
    Tensor w = zeros({k * k, dg});
    Tensor b = zeros({dg});
    Tensor a_flat = reshape(zeros({k, k}), {1, k * k});
    Tensor code = graph_project(a_flat, w, b);
    CHECK(code.shape == Shape{1, dg});
    for (std::size_t i = 0; i < dg; ++i) CHECK(code.at(i) == 0.0);

    Rng rng(5);
    std::vector<double> wv(k * k * dg), av(k * k);
    for (auto& x : wv) x = rng.normal();
    for (auto& x : av) x = rng.uniform();
    Tensor wr = constant({k * k, dg}, wv);
    Tensor af = constant({1, k * k}, av);
    Tensor c1 = graph_project(af, wr, b);
    Tensor c2 = graph_project(af, wr, b);
    CHECK(*c1.data == *c2.data);  // identical branches give identical codes
    for (std::size_t i = 0; i < c1.numel(); ++i) CHECK(std::abs(c1.at(i)) <= 1.0);
}

TEST_CASE("graph contrast loss: closed form, monotonicity, non-negativity") {
    // cos(dyn, stable) = 1, cos(aug, stable) = 0, N = M = 1, tau = 1
    Tensor g_dyn = constant({1, 2}, {1, 0});
    Tensor g_stable = constant({1, 2}, {1, 0});
    Tensor g_aug = constant({1, 2}, {0, 1});
    const double expected = std::log(1.0 + std::exp(-1.0));  // 0.31326168751822286
    CHECK(graph_contrast_loss(g_dyn, g_stable, g_aug, 1.0).scalar() ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.313262).epsilon(2e-6));

    // pushing the aug code toward -g_stable strictly lowers the loss
    Tensor g_aug_far = constant({1, 2}, {-1, 0});
    CHECK(graph_contrast_loss(g_dyn, g_stable, g_aug_far, 1.0).scalar() <
          graph_contrast_loss(g_dyn, g_stable, g_aug, 1.0).scalar());

    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::vector<double>> gd(1 + rng.integer(3), std::vector<double>(3)),
            ga(1 + rng.integer(3), std::vector<double>(3));
        std::vector<double> gs(3);
        for (auto& r : gd)
            for (auto& x : r) x = rng.normal();
        for (auto& r : ga)
            for (auto& x : r) x = rng.normal();
        for (auto& x : gs) x = rng.normal();
        const double v = graph_contrast_loss(rows_to_tensor(gd), constant({1, 3}, gs),
                                             rows_to_tensor(ga), 0.5)
                             .scalar();
        CHECK(v >= 0.0);
    }
}

TEST_CASE("graph contrast loss matches the scalar oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.integer(3), m = 1 + rng.integer(3), d = 2 + rng.integer(3);
        std::vector<std::vector<double>> gd(n, std::vector<double>(d)),
            ga(m, std::vector<double>(d));
        std::vector<double> gs(d);
        for (auto& r : gd)
            for (auto& x : r) x = rng.normal();
        for (auto& r : ga)
            for (auto& x : r) x = rng.normal();
        for (auto& x : gs) x = rng.normal();
        const double tau = 0.2 + 0.8 * rng.uniform();
        const double naive = naive_contrast(gd, gs, ga, tau);
        const double tensor = graph_contrast_loss(rows_to_tensor(gd), constant({1, d}, gs),
                                                  rows_to_tensor(ga), tau)
                                  .scalar();
        CHECK(std::abs(naive - tensor) < 1e-9);
    }
}

TEST_CASE("saa_total adds its two terms") {
    CHECK(saa_total(scalar_tensor(-3.0), scalar_tensor(0.0)).scalar() == -3.0);
    CHECK(saa_total(scalar_tensor(-1.5), scalar_tensor(0.25)).scalar() ==
          doctest::Approx(-1.25).epsilon(1e-15));
}

TEST_CASE("uninitialized bank refuses to serve stable graphs") {
    StableGraphBank bank;
    bank.k = 2;
    CHECK_THROWS_WITH_AS(bank.stable(0), "stable bank empty; run one step first",
                         std::logic_error);
}
